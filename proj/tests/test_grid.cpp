#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "hsitl/convert.hpp"
#include "hsitl/cube.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/grid.hpp"
#include "hsitl/records.hpp"
#include "hsitl/stats.hpp"
#include "support/synthetic.hpp"

using namespace hsitl;

namespace {

// Two tiny scenes (same band count) plus a grid config over them.
struct GridFixture {
    std::string cube_a, labels_a, cube_b, labels_b;

    GridFixture() {
        auto task = synth::separable_two_class(16);
        auto [ca, la] = synth::task_scene(task, 12, 12, 101);
        auto [cb, lb] = synth::task_scene(task, 12, 12, 202);
        cube_a = synth::tmp_path("grid_a.hsic");
        labels_a = synth::tmp_path("grid_a.hsil");
        cube_b = synth::tmp_path("grid_b.hsic");
        labels_b = synth::tmp_path("grid_b.hsil");
        save_cube(ca, cube_a);
        save_labels(la, labels_a);
        save_cube(cb, cube_b);
        save_labels(lb, labels_b);
    }

    std::string write_config(const std::string& extra_variants = "\"B\"",
                             const std::string& reductions = "[\"full\", 8]") const {
        std::string path = synth::tmp_path("grid.json");
        std::ofstream out(path);
        out << R"({
  "datasets": [
    {"id": "alpha", "cube": ")" << cube_a << R"(", "labels": ")" << labels_a << R"("},
    {"id": "beta", "cube": ")" << cube_b << R"(", "labels": ")" << labels_b << R"("}
  ],
  "split_be": {"train_per_class": 30, "val_per_class": 8},
  "split_b": {"train_per_class": 10, "val_per_class": 4},
  "architectures": [{"family": "cnn1d", "blocks": 1, "kernels": 4, "fc": [8, 6]}],
  "reductions": )" << reductions << R"(,
  "variants": [)" << extra_variants << R"(],
  "seeds": {"first": 0, "count": 2},
  "train": {"learning_rate": 1e-3, "batch_size": 16, "patience": 5, "max_epochs": 6},
  "normalization": "zscore",
  "output": "unused.csv"
})";
        return path;
    }
};

GridFixture& fixture() {
    static GridFixture fix;
    return fix;
}

}  // namespace

TEST_CASE("grid config parsing validates structure") {
    auto& fix = fixture();
    GridConfig cfg = parse_grid_config(fix.write_config());
    CHECK(cfg.datasets.size() == 2);
    CHECK(cfg.seeds == std::vector<uint64_t>{0, 1});
    CHECK(cfg.reductions.size() == 2);
    CHECK(cfg.reductions[0].full);
    CHECK(cfg.reductions[1].label() == "8");
    CHECK(cfg.train.batch_size == 16);
    CHECK(cfg.finetune.batch_size == 16);  // defaults to train

    SUBCASE("unknown keys are rejected") {
        std::string path = synth::tmp_path("bad.json");
        std::ofstream(path) << "{\"bogus\": 1}";
        CHECK_THROWS_AS(parse_grid_config(path), ConfigError);
        std::remove(path.c_str());
    }
    SUBCASE("malformed JSON is a ConfigError") {
        std::string path = synth::tmp_path("bad2.json");
        std::ofstream(path) << "not json";
        CHECK_THROWS_AS(parse_grid_config(path), ConfigError);
        std::remove(path.c_str());
    }
}

TEST_CASE("run_grid produces one record per (cell, seed) and marks infeasible cells") {
    auto& fix = fixture();
    // reduction to 6 bands makes the 1-block conv+pool infeasible: 6-5+1=2 -> pool 1;
    // feasible; use 5 bands: 5-5+1=1 -> pool 0 -> infeasible
    GridConfig cfg = parse_grid_config(fix.write_config("\"B\"", "[\"full\", 5]"));
    auto records = run_grid(cfg);

    // 2 datasets x {full: 2 seeds, 5-band: 1 marker} x 1 variant
    size_t feasible = 0, infeasible = 0;
    for (const auto& rec : records) (rec.feasible ? feasible : infeasible)++;
    CHECK(feasible == 4);
    CHECK(infeasible == 2);
    for (const auto& rec : records) {
        if (!rec.feasible) CHECK(rec.band_count == "5");
    }
}

TEST_CASE("run_grid expands Ex over other datasets and skips the diagonal") {
    auto& fix = fixture();
    GridConfig cfg = parse_grid_config(fix.write_config("\"B\", \"Ex\"", "[8]"));
    cfg.seeds = {0};
    auto records = run_grid(cfg);
    std::set<std::pair<std::string, std::string>> cells;
    for (const auto& rec : records) cells.insert({rec.dataset, rec.variant});
    CHECK(cells.count({"alpha", "B"}));
    CHECK(cells.count({"beta", "B"}));
    CHECK(cells.count({"alpha", "Ex(beta)"}));
    CHECK(cells.count({"beta", "Ex(alpha)"}));
    CHECK_FALSE(cells.count({"alpha", "Ex(alpha)"}));
    CHECK(records.size() == 4);
}

TEST_CASE("run_grid reruns byte-identical on metric columns") {
    auto& fix = fixture();
    GridConfig cfg = parse_grid_config(fix.write_config("\"B\", \"B(E)\"", "[8]"));
    std::string out1 = synth::tmp_path("res1.csv");
    std::string out2 = synth::tmp_path("res2.csv");
    run_grid_to_csv(cfg, out1);
    run_grid_to_csv(cfg, out2);

    auto strip_times = [](const std::string& path) {
        std::ifstream in(path);
        std::string line, all;
        while (std::getline(in, line)) {
            // drop the wall-clock columns (pretrain_s, finetune_s, infer_ms)
            size_t count = 0, start = 0;
            std::string kept;
            for (size_t i = 0; i <= line.size(); ++i) {
                if (i == line.size() || line[i] == ',') {
                    if (count < 8 || count == 11) kept += line.substr(start, i - start) + "|";
                    ++count;
                    start = i + 1;
                }
            }
            all += kept + "\n";
        }
        return all;
    };
    CHECK(strip_times(out1) == strip_times(out2));
    std::remove(out1.c_str());
    std::remove(out2.c_str());
}

TEST_CASE("an unreadable dataset marks its cells infeasible without aborting") {
    auto& fix = fixture();
    std::string path = synth::tmp_path("grid_ghost.json");
    std::ofstream(path) << R"({
  "datasets": [
    {"id": "alpha", "cube": ")" << fix.cube_a << R"(", "labels": ")" << fix.labels_a << R"("},
    {"id": "ghost", "cube": "/nonexistent/ghost.hsic", "labels": "/nonexistent/ghost.hsil"}
  ],
  "split_b": {"train_per_class": 10, "val_per_class": 4},
  "architectures": [{"family": "cnn1d", "blocks": 1, "kernels": 4, "fc": [8, 6]}],
  "reductions": [8],
  "variants": ["B"],
  "seeds": [0],
  "train": {"learning_rate": 1e-3, "batch_size": 16, "patience": 5, "max_epochs": 4}
})";
    auto records = run_grid(parse_grid_config(path));
    REQUIRE(records.size() == 2);
    std::map<std::string, bool> ok;
    for (const auto& rec : records) ok[rec.dataset] = rec.feasible;
    CHECK(ok.at("alpha"));        // the B cells never read the ghost files
    CHECK_FALSE(ok.at("ghost"));
    std::remove(path.c_str());
}

TEST_CASE("records CSV round-trips") {
    ExperimentRecord rec;
    rec.seed = 3;
    rec.dataset = "alpha";
    rec.variant = "Ex(beta)";
    rec.blocks = 2;
    rec.band_count = "50";
    rec.oa = 0.912345678901;
    rec.aa = 0.87;
    rec.kappa = 0.8123;
    rec.pretrain_s = 12.5;
    rec.finetune_s = 2.25;
    rec.infer_ms_per_sample = 0.035;
    ExperimentRecord marker;
    marker.dataset = "alpha";
    marker.variant = "B";
    marker.blocks = 3;
    marker.band_count = "25";
    marker.feasible = false;

    std::string path = synth::tmp_path("records.csv");
    write_records_csv({rec, marker}, path);
    auto back = read_records_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].seed == 3);
    CHECK(back[0].variant == "Ex(beta)");
    CHECK(back[0].oa == doctest::Approx(rec.oa).epsilon(1e-12));
    CHECK(back[0].kappa == doctest::Approx(rec.kappa).epsilon(1e-12));
    CHECK(back[0].feasible);
    CHECK_FALSE(back[1].feasible);
    CHECK(back[1].band_count == "25");
    std::remove(path.c_str());
}

TEST_CASE("report renders means, ranks, best flags and Wilcoxon tests") {
    // crafted records: Ex(beta) beats B everywhere, 6 seeds, 2 configs
    std::vector<ExperimentRecord> records;
    for (int cfg_i = 0; cfg_i < 2; ++cfg_i) {
        for (uint64_t seed = 0; seed < 6; ++seed) {
            ExperimentRecord b;
            b.seed = seed;
            b.dataset = "alpha";
            b.variant = "B";
            b.blocks = uint32_t(1 + cfg_i);
            b.band_count = "8";
            b.oa = 0.70 + 0.01 * double(seed);
            b.aa = b.oa;
            b.kappa = 0.60 + 0.01 * double(seed);
            ExperimentRecord ex = b;
            ex.variant = "Ex(beta)";
            ex.oa += 0.10;
            ex.aa += 0.10;
            ex.kappa += 0.10;
            records.push_back(b);
            records.push_back(ex);
        }
    }
    std::string text = render_report(records, WilcoxonPairing::PerSeed);
    CHECK(text.find("Mean metrics") != std::string::npos);
    CHECK(text.find("transfer") != std::string::npos);     // best-variant flag
    CHECK(text.find("Average rank") != std::string::npos);
    CHECK(text.find("Ex(beta)") != std::string::npos);
    CHECK(text.find("Wilcoxon") != std::string::npos);
    CHECK(text.find("per-seed") != std::string::npos);

    SUBCASE("per-cell pairing also renders") {
        std::string cell = render_report(records, WilcoxonPairing::PerCell);
        CHECK(cell.find("per-cell") != std::string::npos);
    }
    SUBCASE("single-variant input has no Wilcoxon section and rank 1") {
        std::vector<ExperimentRecord> only_b;
        for (const auto& rec : records)
            if (rec.variant == "B") only_b.push_back(rec);
        std::string text_b = render_report(only_b);
        CHECK(text_b.find("Wilcoxon") == std::string::npos);
        CHECK(text_b.find("rank 1.0") != std::string::npos);
    }
    SUBCASE("empty input errors") {
        CHECK_THROWS_AS(render_report({}), DataError);
    }
}

TEST_CASE("report Wilcoxon p matches the stats module on crafted input") {
    // 2 variants, 25 seeds, one config; known difference pattern
    std::vector<ExperimentRecord> records;
    std::vector<double> xs, ys;
    for (uint64_t seed = 0; seed < 25; ++seed) {
        ExperimentRecord a;
        a.seed = seed;
        a.dataset = "d";
        a.variant = "B";
        a.blocks = 1;
        a.band_count = "8";
        a.kappa = 0.5 + 0.003 * double(seed % 7);
        ExperimentRecord b = a;
        b.variant = "Ex(s)";
        b.kappa = a.kappa + (seed % 5 == 0 ? -0.01 : 0.02);
        records.push_back(a);
        records.push_back(b);
        xs.push_back(b.kappa);
        ys.push_back(a.kappa);
    }
    WilcoxonResult expected = wilcoxon_two_tailed(xs, ys);
    std::string text = render_report(records);
    char formatted[32];
    std::snprintf(formatted, sizeof(formatted), "%-10.6g", expected.p_two_tailed);
    CHECK(text.find(formatted) != std::string::npos);
}

TEST_CASE("CSV converters build valid containers") {
    SUBCASE("2x2x1 cube CSV gives a 16-byte payload") {
        std::string csv = synth::tmp_path("cube.csv");
        std::ofstream(csv) << "y,x,band,value\n0,0,0,1.5\n0,1,0,2.5\n1,0,0,3.5\n1,1,0,4.5\n";
        std::string out = synth::tmp_path("conv.hsic");
        convert_cube_csv(csv, out);
        SpectralCube cube = load_cube(out);
        CHECK(cube.height == 2);
        CHECK(cube.width == 2);
        CHECK(cube.bands == 1);
        CHECK(cube.at(1, 1, 0) == doctest::Approx(4.5f));
        CHECK(std::filesystem::file_size(out) == 18 + 16);  // header + payload
        std::remove(csv.c_str());
        std::remove(out.c_str());
    }
    SUBCASE("round-trip on a random cube") {
        SpectralCube cube = synth::random_cube(3, 4, 5, 77);
        std::string csv = synth::tmp_path("rt.csv");
        std::ofstream out(csv);
        out << "y,x,band,value\n";
        char buf[64];
        for (uint32_t y = 0; y < 3; ++y)
            for (uint32_t x = 0; x < 4; ++x)
                for (uint32_t b = 0; b < 5; ++b) {
                    std::snprintf(buf, sizeof(buf), "%u,%u,%u,%.9g\n", y, x, b, cube.at(y, x, b));
                    out << buf;
                }
        out.close();
        std::string hsic = synth::tmp_path("rt.hsic");
        convert_cube_csv(csv, hsic);
        SpectralCube back = load_cube(hsic);
        CHECK(back.data == cube.data);
        std::remove(csv.c_str());
        std::remove(hsic.c_str());
    }
    SUBCASE("out-of-range band against declared dims errors") {
        std::string csv = synth::tmp_path("bad.csv");
        std::ofstream(csv) << "0,0,0,1\n0,0,5,2\n";
        CHECK_THROWS_AS(convert_cube_csv(csv, "/tmp/never.hsic", 1, 1, 2), DataError);
        std::remove(csv.c_str());
    }
    SUBCASE("missing cells error") {
        std::string csv = synth::tmp_path("gap.csv");
        std::ofstream(csv) << "0,0,0,1\n1,1,0,2\n";  // (0,1) and (1,0) missing
        CHECK_THROWS_AS(convert_cube_csv(csv, "/tmp/never.hsic"), DataError);
        std::remove(csv.c_str());
    }
    SUBCASE("labels CSV builds a validated map") {
        std::string csv = synth::tmp_path("labels.csv");
        std::ofstream(csv) << "y,x,label\n0,0,1\n0,1,2\n1,0,0\n";
        std::string out = synth::tmp_path("conv.hsil");
        convert_labels_csv(csv, out);
        LabelMap map = load_labels(out);
        CHECK(map.class_count() == 2);
        CHECK(map.at(1, 0) == 0);
        std::remove(csv.c_str());
        std::remove(out.c_str());

        std::string bad = synth::tmp_path("badlabels.csv");
        std::ofstream(bad) << "0,0,1\n0,1,3\n";  // class 2 missing
        CHECK_THROWS_AS(convert_labels_csv(bad, "/tmp/never.hsil"), DataError);
        std::remove(bad.c_str());
    }
}
