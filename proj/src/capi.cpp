#include "hsitl.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include <json.hpp>

#include "hsitl/checkpoint.hpp"
#include "hsitl/convert.hpp"
#include "hsitl/cube.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/grid.hpp"
#include "hsitl/reduce.hpp"
#include "hsitl/stats.hpp"
#include "hsitl/transfer.hpp"

// Opaque handle definitions: each wraps the corresponding core value type.
struct hsitl_cube {
    hsitl::SpectralCube cube;
};
struct hsitl_labels {
    hsitl::LabelMap map;
};
struct hsitl_model {
    hsitl::ModelParams<float> params;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
hsitl_status guarded(Fn&& fn) {
    try {
        fn();
        return HSITL_OK;
    } catch (const hsitl::ConfigError& e) {
        g_last_error = e.what();
        return HSITL_ERR_CONFIG;
    } catch (const hsitl::DataError& e) {
        g_last_error = e.what();
        return HSITL_ERR_DATA;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return HSITL_ERR_DATA;
    }
}

hsitl_status require(bool ok, const char* message) {
    if (!ok) {
        g_last_error = message;
        return HSITL_ERR_CONFIG;
    }
    return HSITL_OK;
}

}  // namespace

extern "C" {

const char* hsitl_version(void) { return "1.0.0"; }

const char* hsitl_last_error(void) { return g_last_error.c_str(); }

hsitl_status hsitl_cube_load(const char* path, hsitl_cube** out) {
    if (auto bad = require(path && out, "cube_load: null argument")) return bad;
    return guarded([&] { *out = new hsitl_cube{hsitl::load_cube(path)}; });
}

hsitl_status hsitl_cube_create(uint32_t height, uint32_t width, uint32_t bands, const float* data,
                               hsitl_cube** out) {
    if (auto bad = require(data && out, "cube_create: null argument")) return bad;
    return guarded([&] {
        hsitl::SpectralCube cube;
        cube.height = height;
        cube.width = width;
        cube.bands = bands;
        if (height == 0 || width == 0 || bands == 0)
            throw hsitl::DataError("cube_create: zero dimension");
        cube.data.assign(data, data + cube.value_count());
        *out = new hsitl_cube{std::move(cube)};
    });
}

hsitl_status hsitl_cube_save(const hsitl_cube* cube, const char* path) {
    if (auto bad = require(cube && path, "cube_save: null argument")) return bad;
    return guarded([&] { hsitl::save_cube(cube->cube, path); });
}

void hsitl_cube_free(hsitl_cube* cube) { delete cube; }

void hsitl_cube_dims(const hsitl_cube* cube, uint32_t* height, uint32_t* width, uint32_t* bands) {
    if (!cube) return;
    if (height) *height = cube->cube.height;
    if (width) *width = cube->cube.width;
    if (bands) *bands = cube->cube.bands;
}

const float* hsitl_cube_data(const hsitl_cube* cube) {
    return cube ? cube->cube.data.data() : nullptr;
}

hsitl_status hsitl_cube_reduce_window(const hsitl_cube* cube, uint32_t lambda, hsitl_cube** out) {
    if (auto bad = require(cube && out, "reduce_window: null argument")) return bad;
    return guarded([&] { *out = new hsitl_cube{hsitl::reduce_window(cube->cube, lambda)}; });
}

hsitl_status hsitl_cube_reduce_to_count(const hsitl_cube* cube, uint32_t bands,
                                        hsitl_cube** out) {
    if (auto bad = require(cube && out, "reduce_to_count: null argument")) return bad;
    return guarded([&] { *out = new hsitl_cube{hsitl::reduce_to_count(cube->cube, bands)}; });
}

hsitl_status hsitl_labels_load(const char* path, hsitl_labels** out) {
    if (auto bad = require(path && out, "labels_load: null argument")) return bad;
    return guarded([&] { *out = new hsitl_labels{hsitl::load_labels(path)}; });
}

void hsitl_labels_free(hsitl_labels* labels) { delete labels; }

void hsitl_labels_dims(const hsitl_labels* labels, uint32_t* height, uint32_t* width) {
    if (!labels) return;
    if (height) *height = labels->map.height;
    if (width) *width = labels->map.width;
}

uint32_t hsitl_labels_class_count(const hsitl_labels* labels) {
    return labels ? labels->map.class_count() : 0;
}

hsitl_status hsitl_downlink_budget(uint64_t height, uint64_t width, uint64_t bands,
                                   uint64_t bit_depth, double rate_bps, uint64_t* volume_bits,
                                   double* seconds) {
    if (auto bad = require(volume_bits && seconds, "budget: null output")) return bad;
    return guarded([&] {
        hsitl::DownlinkCost cost =
            hsitl::downlink_budget({height, width, bands, bit_depth, rate_bps});
        *volume_bits = cost.volume_bits;
        *seconds = cost.seconds;
    });
}

hsitl_status hsitl_convert_cube_csv(const char* csv_path, const char* out_path, uint32_t height,
                                    uint32_t width, uint32_t bands) {
    if (auto bad = require(csv_path && out_path, "convert: null path")) return bad;
    return guarded([&] { hsitl::convert_cube_csv(csv_path, out_path, height, width, bands); });
}

hsitl_status hsitl_convert_labels_csv(const char* csv_path, const char* out_path, uint32_t height,
                                      uint32_t width) {
    if (auto bad = require(csv_path && out_path, "convert: null path")) return bad;
    return guarded([&] { hsitl::convert_labels_csv(csv_path, out_path, height, width); });
}

hsitl_status hsitl_split_to_csv(const char* cube_path, const char* labels_path, const char* mode,
                                uint32_t train_per_class, uint32_t val_per_class,
                                const char* per_class_json, uint64_t seed, const char* out_csv) {
    if (auto bad = require(cube_path && labels_path && mode && out_csv, "split: null argument"))
        return bad;
    return guarded([&] {
        hsitl::SpectralCube cube = hsitl::load_cube(cube_path);
        hsitl::LabelMap labels = hsitl::load_labels(labels_path);
        hsitl::SampleSet samples = hsitl::extract_samples(cube, labels);
        hsitl::DatasetSplit split;
        std::string m = mode;
        if (m == "be") {
            split = hsitl::split_be(samples, train_per_class, val_per_class, seed);
        } else if (m == "b") {
            hsitl::SplitSpecB spec;
            spec.train_per_class = train_per_class;
            spec.val_per_class = val_per_class;
            if (per_class_json && *per_class_json) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(per_class_json);
                } catch (const nlohmann::json::exception& e) {
                    throw hsitl::ConfigError(std::string("split: bad per-class JSON: ") +
                                             e.what());
                }
                for (auto it = j.begin(); it != j.end(); ++it) {
                    int32_t label = std::stoi(it.key());
                    auto pair = it.value().get<std::vector<uint32_t>>();
                    if (label < 1 || pair.size() != 2)
                        throw hsitl::ConfigError("split: per-class entries are label: [train, val]");
                    spec.per_class[label - 1] = {pair[0], pair[1]};
                }
            }
            split = hsitl::make_b_split(samples, spec, seed);
        } else {
            throw hsitl::ConfigError("split: mode must be 'be' or 'b'");
        }
        std::ofstream out(out_csv, std::ios::trunc);
        if (!out) throw hsitl::DataError("split: cannot open output " + std::string(out_csv));
        out << "set,y,x,class\n";
        auto dump = [&](const char* name, const hsitl::SampleSet& set) {
            for (size_t i = 0; i < set.size(); ++i) {
                hsitl::Sample s = set[i];
                out << name << ',' << s.y << ',' << s.x << ',' << s.cls + 1 << '\n';
            }
        };
        dump("train", split.train);
        dump("validation", split.validation);
        dump("test", split.test);
    });
}

hsitl_status hsitl_model_load(const char* path, hsitl_model** out) {
    if (auto bad = require(path && out, "model_load: null argument")) return bad;
    return guarded([&] { *out = new hsitl_model{hsitl::load_model(path).params}; });
}

hsitl_status hsitl_model_save(const hsitl_model* model, const char* path) {
    if (auto bad = require(model && path, "model_save: null argument")) return bad;
    return guarded([&] { hsitl::save_model(model->params, path); });
}

void hsitl_model_free(hsitl_model* model) { delete model; }

hsitl_status hsitl_model_info(const hsitl_model* model, uint32_t* input_bands, uint32_t* classes,
                              uint32_t* blocks) {
    if (auto bad = require(model != nullptr, "model_info: null model")) return bad;
    if (input_bands) *input_bands = model->params.input_bands;
    if (classes) *classes = model->params.arch.class_count;
    if (blocks) *blocks = model->params.arch.blocks;
    return HSITL_OK;
}

hsitl_status hsitl_model_predict(const hsitl_model* model, const float* spectra, uint64_t count,
                                 uint32_t bands, int32_t* out_classes) {
    if (auto bad = require(model && spectra && out_classes, "predict: null argument")) return bad;
    return guarded([&] {
        if (bands != model->params.input_bands)
            throw hsitl::DataError("predict: model expects " +
                                   std::to_string(model->params.input_bands) + " bands, got " +
                                   std::to_string(bands));
        hsitl::SampleSet set(bands);
        set.reserve(count);
        std::vector<double> row(bands);
        for (uint64_t i = 0; i < count; ++i) {
            for (uint32_t b = 0; b < bands; ++b) row[b] = spectra[i * bands + b];
            set.push_back(row, 0, 0, 0);
        }
        auto labels = hsitl::predict(model->params, set);
        std::copy(labels.begin(), labels.end(), out_classes);
    });
}

hsitl_status hsitl_pretrain(const char* plan_path, const char* out_model_path) {
    if (auto bad = require(plan_path && out_model_path, "pretrain: null path")) return bad;
    return guarded([&] {
        hsitl::PretrainPlan plan = hsitl::parse_pretrain_plan(plan_path);
        hsitl::run_pretrain(plan, out_model_path);
    });
}

hsitl_status hsitl_finetune(const char* plan_path, const char* model_path,
                            const char* out_model_path) {
    if (auto bad = require(plan_path && model_path && out_model_path, "finetune: null path"))
        return bad;
    return guarded([&] {
        hsitl::FinetunePlan plan = hsitl::parse_finetune_plan(plan_path);
        hsitl::run_finetune(plan, model_path, out_model_path);
    });
}

hsitl_status hsitl_run_grid(const char* grid_path, const char* out_csv_path) {
    if (auto bad = require(grid_path != nullptr, "run_grid: null config path")) return bad;
    return guarded([&] {
        hsitl::GridConfig cfg = hsitl::parse_grid_config(grid_path);
        hsitl::run_grid_to_csv(cfg, out_csv_path ? out_csv_path : "");
    });
}

hsitl_status hsitl_report(const char* results_csv_path, const char* pairing, char** out_text) {
    if (auto bad = require(results_csv_path && out_text, "report: null argument")) return bad;
    return guarded([&] {
        hsitl::WilcoxonPairing mode = hsitl::WilcoxonPairing::PerSeed;
        if (pairing && *pairing) {
            std::string p = pairing;
            if (p == "per-seed") {
                mode = hsitl::WilcoxonPairing::PerSeed;
            } else if (p == "per-cell") {
                mode = hsitl::WilcoxonPairing::PerCell;
            } else {
                throw hsitl::ConfigError("report: pairing must be per-seed or per-cell");
            }
        }
        auto records = hsitl::read_records_csv(results_csv_path);
        std::string text = hsitl::render_report(records, mode);
        char* buf = static_cast<char*>(std::malloc(text.size() + 1));
        if (!buf) throw hsitl::DataError("report: out of memory");
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out_text = buf;
    });
}

void hsitl_string_free(char* text) { std::free(text); }

hsitl_status hsitl_wilcoxon_csv(const char* csv_a, const char* csv_b, const char* column,
                                double* w, uint64_t* n_effective, double* p, int* used_exact) {
    if (auto bad =
            require(csv_a && csv_b && column && w && n_effective && p, "wilcoxon: null argument"))
        return bad;
    return guarded([&] {
        auto read_column = [&](const char* path) {
            std::ifstream in(path);
            if (!in) throw hsitl::DataError("wilcoxon: cannot open " + std::string(path));
            std::string line;
            if (!std::getline(in, line))
                throw hsitl::DataError("wilcoxon: empty file " + std::string(path));
            auto split = [](const std::string& s) {
                std::vector<std::string> fields;
                std::string cur;
                for (char ch : s) {
                    if (ch == ',') {
                        fields.push_back(cur);
                        cur.clear();
                    } else if (ch != '\r') {
                        cur.push_back(ch);
                    }
                }
                fields.push_back(cur);
                return fields;
            };
            auto header = split(line);
            size_t col = header.size();
            for (size_t i = 0; i < header.size(); ++i)
                if (header[i] == column) col = i;
            if (col == header.size())
                throw hsitl::DataError("wilcoxon: no column '" + std::string(column) + "' in " +
                                       path);
            std::vector<double> values;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                auto fields = split(line);
                if (col >= fields.size() || fields[col].empty()) continue;
                try {
                    values.push_back(std::stod(fields[col]));
                } catch (...) {
                    throw hsitl::DataError("wilcoxon: non-numeric value '" + fields[col] +
                                           "' in " + path);
                }
            }
            return values;
        };
        std::vector<double> xs = read_column(csv_a);
        std::vector<double> ys = read_column(csv_b);
        if (xs.size() != ys.size())
            throw hsitl::DataError("wilcoxon: files contribute different pair counts (" +
                                   std::to_string(xs.size()) + " vs " +
                                   std::to_string(ys.size()) + ")");
        hsitl::WilcoxonResult res = hsitl::wilcoxon_two_tailed(xs, ys);
        *w = res.statistic;
        *n_effective = res.n_effective;
        *p = res.p_two_tailed;
        if (used_exact) *used_exact = res.method == hsitl::WilcoxonMethod::Exact ? 1 : 0;
    });
}

hsitl_status hsitl_grad_check(const char* family, uint32_t blocks, uint32_t input_bands,
                              uint32_t classes, uint32_t kernels, uint64_t seed,
                              double* max_rel_error) {
    if (auto bad = require(family && max_rel_error, "grad_check: null argument")) return bad;
    return guarded([&] {
        hsitl::Family fam = hsitl::family_from_name(family);
        hsitl::ArchitectureConfig arch =
            fam == hsitl::Family::CNN1D
                ? hsitl::ArchitectureConfig::cnn1d(blocks, classes, kernels)
                : hsitl::ArchitectureConfig::ptcnn(blocks, classes, kernels);
        // full-size heads make the finite-difference sweep needlessly slow
        arch.fc_sizes = fam == hsitl::Family::CNN1D ? std::vector<uint32_t>{12, 8}
                                                    : std::vector<uint32_t>{12, 10, 8};
        hsitl::GradCheckReport report = hsitl::grad_check(arch, input_bands, 6, seed);
        *max_rel_error = report.max_rel_error;
    });
}

}  // extern "C"
