// Command-line front end. Everything goes through the C API in hsitl.h so
// the tool doubles as a usage example for the shared library.
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "hsitl.h"

namespace {

int fail(hsitl_status status) {
    std::fprintf(stderr, "error: %s\n", hsitl_last_error());
    return int(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hsitl — spectral band reduction, CNN transfer learning and evaluation"};
    app.require_subcommand(1);

    // convert
    auto* convert = app.add_subcommand("convert", "CSV to HSIC/HSIL containers");
    std::string conv_kind, conv_in, conv_out;
    uint32_t conv_h = 0, conv_w = 0, conv_b = 0;
    convert->add_option("kind", conv_kind, "cube (y,x,band,value) or labels (y,x,label)")
        ->required()
        ->check(CLI::IsMember({"cube", "labels"}));
    convert->add_option("--in", conv_in, "input CSV")->required();
    convert->add_option("--out", conv_out, "output container")->required();
    convert->add_option("--height", conv_h, "declared height (0 = infer)");
    convert->add_option("--width", conv_w, "declared width (0 = infer)");
    convert->add_option("--bands", conv_b, "declared bands (0 = infer; cube only)");

    // reduce
    auto* reduce = app.add_subcommand("reduce", "spectral reduction by window averaging");
    std::string red_in, red_out;
    uint32_t red_bands = 0, red_window = 0;
    reduce->add_option("--in", red_in, "input cube")->required();
    reduce->add_option("--out", red_out, "output cube")->required();
    auto* red_b = reduce->add_option("--bands", red_bands, "exact output band count");
    auto* red_w = reduce->add_option("--window", red_window, "bands per window (lambda)");
    red_b->excludes(red_w);
    red_w->excludes(red_b);

    // budget
    auto* budget = app.add_subcommand("budget", "downlink volume and transmission time");
    uint64_t bud_h = 0, bud_w = 0, bud_b = 0, bud_depth = 0;
    double bud_rate = 0.0;
    budget->add_option("--height", bud_h)->required();
    budget->add_option("--width", bud_w)->required();
    budget->add_option("--bands", bud_b)->required();
    budget->add_option("--bit-depth", bud_depth)->required();
    budget->add_option("--rate-bps", bud_rate)->required();

    // split
    auto* split = app.add_subcommand("split", "build a train/validation/test split");
    std::string split_cube, split_labels, split_mode = "be", split_counts, split_out;
    uint32_t split_train = 270, split_val = 30;
    uint64_t split_seed = 0;
    split->add_option("--cube", split_cube)->required();
    split->add_option("--labels", split_labels)->required();
    split->add_option("--mode", split_mode, "be or b")->check(CLI::IsMember({"be", "b"}));
    split->add_option("--train-per-class", split_train);
    split->add_option("--val-per-class", split_val);
    split->add_option("--per-class", split_counts,
                      "JSON {\"label\": [train, val], ...} overriding counts (mode b)");
    split->add_option("--seed", split_seed);
    split->add_option("--out", split_out, "output CSV (set,y,x,class)")->required();

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "train extractor + head on a source B(E) split");
    std::string pre_plan, pre_out;
    pretrain->add_option("--plan", pre_plan, "pretrain plan JSON")->required();
    pretrain->add_option("--out", pre_out, "output model (HSIM)")->required();

    // finetune
    auto* finetune = app.add_subcommand("finetune", "fine-tune the classifier head on a target B split");
    std::string fin_plan, fin_model, fin_out;
    finetune->add_option("--plan", fin_plan, "finetune plan JSON")->required();
    finetune->add_option("--model", fin_model, "pretrained model (HSIM)")->required();
    finetune->add_option("--out", fin_out, "output model (HSIM)")->required();

    // run-grid
    auto* grid = app.add_subcommand("run-grid", "run a full experiment grid to CSV");
    std::string grid_cfg, grid_out;
    grid->add_option("--config", grid_cfg, "grid config JSON")->required();
    grid->add_option("--out", grid_out, "results CSV (default: config's output)");

    // report
    auto* report = app.add_subcommand("report", "summary tables from a results CSV");
    std::string rep_in, rep_pairing = "per-seed";
    report->add_option("--results", rep_in, "results CSV")->required();
    report->add_option("--pairing", rep_pairing, "Wilcoxon pairing: per-seed or per-cell")
        ->check(CLI::IsMember({"per-seed", "per-cell"}));

    // wilcoxon
    auto* wilcoxon = app.add_subcommand("wilcoxon", "two-tailed signed-rank test between two CSVs");
    std::string wil_a, wil_b, wil_col = "kappa";
    wilcoxon->add_option("--a", wil_a)->required();
    wilcoxon->add_option("--b", wil_b)->required();
    wilcoxon->add_option("--column", wil_col);

    // grad-check
    auto* gradcheck = app.add_subcommand("grad-check", "verify gradients against finite differences");
    std::string gc_family = "cnn1d";
    uint32_t gc_blocks = 1, gc_bands = 16, gc_classes = 3, gc_kernels = 4;
    uint64_t gc_seed = 0;
    double gc_tolerance = 1e-4;
    gradcheck->add_option("--family", gc_family)->check(CLI::IsMember({"cnn1d", "ptcnn"}));
    gradcheck->add_option("--blocks", gc_blocks);
    gradcheck->add_option("--bands", gc_bands);
    gradcheck->add_option("--classes", gc_classes);
    gradcheck->add_option("--kernels", gc_kernels);
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--tolerance", gc_tolerance);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return int(HSITL_ERR_CONFIG);
    }

    if (convert->parsed()) {
        hsitl_status st = conv_kind == "cube"
                              ? hsitl_convert_cube_csv(conv_in.c_str(), conv_out.c_str(), conv_h,
                                                       conv_w, conv_b)
                              : hsitl_convert_labels_csv(conv_in.c_str(), conv_out.c_str(),
                                                         conv_h, conv_w);
        if (st != HSITL_OK) return fail(st);
        std::printf("wrote %s\n", conv_out.c_str());
        return 0;
    }

    if (reduce->parsed()) {
        if (!*red_b && !*red_w) {
            std::fprintf(stderr, "error: reduce needs --bands or --window\n");
            return int(HSITL_ERR_CONFIG);
        }
        hsitl_cube* in = nullptr;
        hsitl_status st = hsitl_cube_load(red_in.c_str(), &in);
        if (st != HSITL_OK) return fail(st);
        hsitl_cube* out = nullptr;
        st = *red_b ? hsitl_cube_reduce_to_count(in, red_bands, &out)
                    : hsitl_cube_reduce_window(in, red_window, &out);
        if (st != HSITL_OK) {
            hsitl_cube_free(in);
            return fail(st);
        }
        st = hsitl_cube_save(out, red_out.c_str());
        uint32_t h, w, b;
        hsitl_cube_dims(out, &h, &w, &b);
        hsitl_cube_free(in);
        hsitl_cube_free(out);
        if (st != HSITL_OK) return fail(st);
        std::printf("wrote %s (%ux%u, %u bands)\n", red_out.c_str(), h, w, b);
        return 0;
    }

    if (budget->parsed()) {
        uint64_t bits = 0;
        double seconds = 0.0;
        hsitl_status st =
            hsitl_downlink_budget(bud_h, bud_w, bud_b, bud_depth, bud_rate, &bits, &seconds);
        if (st != HSITL_OK) return fail(st);
        std::printf("volume_bits %" PRIu64 "\nseconds %.2f\n", bits, seconds);
        return 0;
    }

    if (split->parsed()) {
        hsitl_status st = hsitl_split_to_csv(
            split_cube.c_str(), split_labels.c_str(), split_mode.c_str(), split_train, split_val,
            split_counts.empty() ? nullptr : split_counts.c_str(), split_seed, split_out.c_str());
        if (st != HSITL_OK) return fail(st);
        std::printf("wrote %s\n", split_out.c_str());
        return 0;
    }

    if (pretrain->parsed()) {
        hsitl_status st = hsitl_pretrain(pre_plan.c_str(), pre_out.c_str());
        if (st != HSITL_OK) return fail(st);
        std::printf("wrote %s\n", pre_out.c_str());
        return 0;
    }

    if (finetune->parsed()) {
        hsitl_status st = hsitl_finetune(fin_plan.c_str(), fin_model.c_str(), fin_out.c_str());
        if (st != HSITL_OK) return fail(st);
        std::printf("wrote %s\n", fin_out.c_str());
        return 0;
    }

    if (grid->parsed()) {
        hsitl_status st =
            hsitl_run_grid(grid_cfg.c_str(), grid_out.empty() ? nullptr : grid_out.c_str());
        if (st != HSITL_OK) return fail(st);
        std::printf("grid complete\n");
        return 0;
    }

    if (report->parsed()) {
        char* text = nullptr;
        hsitl_status st = hsitl_report(rep_in.c_str(), rep_pairing.c_str(), &text);
        if (st != HSITL_OK) return fail(st);
        std::fputs(text, stdout);
        hsitl_string_free(text);
        return 0;
    }

    if (wilcoxon->parsed()) {
        double w = 0.0, p = 1.0;
        uint64_t n = 0;
        int exact = 0;
        hsitl_status st =
            hsitl_wilcoxon_csv(wil_a.c_str(), wil_b.c_str(), wil_col.c_str(), &w, &n, &p, &exact);
        if (st != HSITL_OK) return fail(st);
        std::printf("n %" PRIu64 "\nW %.1f\np %.6g\nmethod %s\n", n, w, p,
                    exact ? "exact" : "normal-approx");
        return 0;
    }

    if (gradcheck->parsed()) {
        double err = 0.0;
        hsitl_status st = hsitl_grad_check(gc_family.c_str(), gc_blocks, gc_bands, gc_classes,
                                           gc_kernels, gc_seed, &err);
        if (st != HSITL_OK) return fail(st);
        bool ok = err < gc_tolerance;
        std::printf("max_rel_error %.3g (tolerance %.3g): %s\n", err, gc_tolerance,
                    ok ? "PASS" : "FAIL");
        return ok ? 0 : int(HSITL_ERR_DATA);
    }

    return 0;
}
