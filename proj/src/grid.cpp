#include "hsitl/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hsitl/checkpoint.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/stats.hpp"

namespace hsitl {
namespace {

using nlohmann::json;

json load_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string(what) + ": cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON in " + path + ": " + e.what());
    }
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError(context + ": unknown key '" + it.key() + "'");
}

TrainConfig parse_train(const json& j, TrainConfig base, const std::string& context) {
    reject_unknown_keys(j,
                        {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "patience",
                         "max_epochs"},
                        context);
    try {
        if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("beta1")) base.beta1 = j["beta1"].get<double>();
        if (j.contains("beta2")) base.beta2 = j["beta2"].get<double>();
        if (j.contains("epsilon")) base.epsilon = j["epsilon"].get<double>();
        if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<uint32_t>();
        if (j.contains("patience")) base.patience = j["patience"].get<uint32_t>();
        if (j.contains("max_epochs")) base.max_epochs = j["max_epochs"].get<uint32_t>();
    } catch (const json::exception& e) {
        throw ConfigError(context + ": bad field type: " + e.what());
    }
    base.validate();
    return base;
}

SplitSpecBE parse_split_be(const json& j, const std::string& context) {
    reject_unknown_keys(j, {"train_per_class", "val_per_class"}, context);
    SplitSpecBE spec;
    try {
        if (j.contains("train_per_class")) spec.train_per_class = j["train_per_class"].get<uint32_t>();
        if (j.contains("val_per_class")) spec.val_per_class = j["val_per_class"].get<uint32_t>();
    } catch (const json::exception& e) {
        throw ConfigError(context + ": bad field type: " + e.what());
    }
    return spec;
}

SplitSpecB parse_split_b(const json& j, const std::string& context) {
    reject_unknown_keys(j, {"train_per_class", "val_per_class", "per_class"}, context);
    SplitSpecB spec;
    try {
        if (j.contains("train_per_class")) spec.train_per_class = j["train_per_class"].get<uint32_t>();
        if (j.contains("val_per_class")) spec.val_per_class = j["val_per_class"].get<uint32_t>();
        if (j.contains("per_class")) {
            // keys are 1-based class labels, matching the label files
            for (auto it = j["per_class"].begin(); it != j["per_class"].end(); ++it) {
                int32_t label = std::stoi(it.key());
                if (label < 1) throw ConfigError(context + ": per_class labels start at 1");
                auto pair = it.value().get<std::vector<uint32_t>>();
                if (pair.size() != 2)
                    throw ConfigError(context + ": per_class entries are [train, val] pairs");
                spec.per_class[label - 1] = {pair[0], pair[1]};
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(context + ": bad field type: " + e.what());
    }
    return spec;
}

ReductionChoice parse_reduction(const json& j, const std::string& context) {
    ReductionChoice choice;
    if (j.is_string()) {
        if (j.get<std::string>() != "full")
            throw ConfigError(context + ": reduction string must be \"full\"");
        choice.full = true;
        return choice;
    }
    if (j.is_number_unsigned() || j.is_number_integer()) {
        choice.full = false;
        choice.spec.mode = ReductionSpec::Mode::TargetCount;
        choice.spec.target_bands = j.get<uint32_t>();
        if (choice.spec.target_bands < 1)
            throw ConfigError(context + ": reduction band count must be >= 1");
        return choice;
    }
    if (j.is_object()) {
        reject_unknown_keys(j, {"window", "target_bands"}, context);
        choice.full = false;
        if (j.contains("window")) {
            choice.spec.mode = ReductionSpec::Mode::Window;
            choice.spec.lambda = j["window"].get<uint32_t>();
        } else if (j.contains("target_bands")) {
            choice.spec.mode = ReductionSpec::Mode::TargetCount;
            choice.spec.target_bands = j["target_bands"].get<uint32_t>();
        } else {
            throw ConfigError(context + ": reduction object needs window or target_bands");
        }
        return choice;
    }
    throw ConfigError(context + ": unsupported reduction entry");
}

NormMode parse_norm(const json& j, const std::string& context) {
    std::string name = j.get<std::string>();
    if (name == "zscore") return NormMode::ZScore;
    if (name == "minmax") return NormMode::MinMax;
    throw ConfigError(context + ": unknown normalization '" + name + "'");
}

void check_dataset_id(const std::string& id) {
    if (id.empty()) throw ConfigError("dataset id must be non-empty");
    for (char ch : id)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-')
            throw ConfigError("dataset id '" + id + "' may use only [A-Za-z0-9_-]");
}

GridDataset parse_dataset(const json& j) {
    reject_unknown_keys(j, {"id", "cube", "labels", "split_be", "split_b"}, "dataset");
    GridDataset ds;
    try {
        ds.id = j.at("id").get<std::string>();
        ds.cube_path = j.at("cube").get<std::string>();
        ds.labels_path = j.at("labels").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("dataset: missing or bad field: ") + e.what());
    }
    check_dataset_id(ds.id);
    if (j.contains("split_be")) ds.be_override = parse_split_be(j["split_be"], "dataset " + ds.id);
    if (j.contains("split_b")) ds.b_override = parse_split_b(j["split_b"], "dataset " + ds.id);
    return ds;
}

std::vector<ArchitectureConfig> parse_architectures(const json& j) {
    std::vector<ArchitectureConfig> out;
    for (const auto& entry : j) {
        json normalized = entry;
        std::vector<uint32_t> block_list;
        if (normalized.contains("blocks") && normalized["blocks"].is_array()) {
            block_list = normalized["blocks"].get<std::vector<uint32_t>>();
        } else if (normalized.contains("blocks")) {
            block_list = {normalized["blocks"].get<uint32_t>()};
        } else {
            block_list = {1};
        }
        for (uint32_t blocks : block_list) {
            normalized["blocks"] = blocks;
            ArchitectureConfig arch = arch_from_json(normalized.dump());
            if (arch.class_count == 0) arch.class_count = 2;  // placeholder; set per dataset
            out.push_back(arch);
        }
    }
    if (out.empty()) throw ConfigError("grid: at least one architecture required");
    return out;
}

std::vector<uint64_t> parse_seeds(const json& j) {
    std::vector<uint64_t> seeds;
    if (j.is_array()) {
        seeds = j.get<std::vector<uint64_t>>();
    } else if (j.is_object()) {
        reject_unknown_keys(j, {"first", "count"}, "seeds");
        uint64_t first = j.value("first", 0);
        uint64_t count = j.at("count").get<uint64_t>();
        for (uint64_t s = 0; s < count; ++s) seeds.push_back(first + s);
    } else {
        throw ConfigError("grid: seeds must be a list or {first, count}");
    }
    if (seeds.empty()) throw ConfigError("grid: seed range is empty");
    return seeds;
}

// Lazily loaded, lazily reduced sample sets. A variant that never touches a
// dataset never opens its files.
class DatasetStore {
public:
    explicit DatasetStore(const std::vector<GridDataset>& datasets) {
        for (const auto& ds : datasets) configs_[ds.id] = ds;
    }

    const SampleSet& samples(const std::string& id, const ReductionChoice& reduction) {
        std::string key = id + "|" + reduction.label();
        auto it = samples_.find(key);
        if (it != samples_.end()) return it->second;
        const SpectralCube& base = cube(id);
        SampleSet set;
        if (reduction.full) {
            set = extract_samples(base, labels(id));
        } else {
            SpectralCube reduced = reduce(base, reduction.spec);
            set = extract_samples(reduced, labels(id));
        }
        return samples_.emplace(key, std::move(set)).first->second;
    }

    uint32_t source_bands(const std::string& id) { return cube(id).bands; }

    const GridDataset& config(const std::string& id) const {
        auto it = configs_.find(id);
        if (it == configs_.end()) throw ConfigError("grid: unknown dataset '" + id + "'");
        return it->second;
    }

private:
    const SpectralCube& cube(const std::string& id) {
        auto it = cubes_.find(id);
        if (it != cubes_.end()) return it->second;
        return cubes_.emplace(id, load_cube(config(id).cube_path)).first->second;
    }
    const LabelMap& labels(const std::string& id) {
        auto it = labels_.find(id);
        if (it != labels_.end()) return it->second;
        LabelMap map = load_labels(config(id).labels_path);
        return labels_.emplace(id, std::move(map)).first->second;
    }

    std::map<std::string, GridDataset> configs_;
    std::map<std::string, SpectralCube> cubes_;
    std::map<std::string, LabelMap> labels_;
    std::map<std::string, SampleSet> samples_;
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

std::string ReductionChoice::label() const {
    if (full) return "full";
    if (spec.mode == ReductionSpec::Mode::TargetCount) return std::to_string(spec.target_bands);
    return "w" + std::to_string(spec.lambda);
}

GridConfig parse_grid_config(const std::string& path) {
    json j = load_json(path, "grid");
    reject_unknown_keys(j,
                        {"datasets", "split_be", "split_b", "architectures", "reductions",
                         "variants", "seeds", "train", "finetune", "normalization", "output"},
                        "grid");
    GridConfig cfg;
    if (!j.contains("datasets") || !j["datasets"].is_array() || j["datasets"].empty())
        throw ConfigError("grid: datasets list required");
    std::set<std::string> ids;
    for (const auto& entry : j["datasets"]) {
        GridDataset ds = parse_dataset(entry);
        if (!ids.insert(ds.id).second)
            throw ConfigError("grid: duplicate dataset id '" + ds.id + "'");
        cfg.datasets.push_back(std::move(ds));
    }
    if (j.contains("split_be")) cfg.split_be = parse_split_be(j["split_be"], "grid.split_be");
    if (j.contains("split_b")) cfg.split_b = parse_split_b(j["split_b"], "grid.split_b");
    if (!j.contains("architectures"))
        throw ConfigError("grid: architectures list required");
    cfg.architectures = parse_architectures(j["architectures"]);
    if (j.contains("reductions")) {
        for (const auto& entry : j["reductions"])
            cfg.reductions.push_back(parse_reduction(entry, "grid.reductions"));
    } else {
        cfg.reductions.push_back(ReductionChoice{});
    }
    if (!j.contains("variants")) throw ConfigError("grid: variants list required");
    for (const auto& entry : j["variants"]) {
        std::string label = entry.get<std::string>();
        std::string src;
        variant_from_label(label, &src);  // validates
        cfg.variants.push_back(label);
    }
    if (!j.contains("seeds")) throw ConfigError("grid: seeds required");
    cfg.seeds = parse_seeds(j["seeds"]);
    if (j.contains("train")) cfg.train = parse_train(j["train"], TrainConfig{}, "grid.train");
    cfg.finetune = j.contains("finetune") ? parse_train(j["finetune"], cfg.train, "grid.finetune")
                                          : cfg.train;
    if (j.contains("normalization"))
        cfg.normalization = parse_norm(j["normalization"], "grid.normalization");
    if (j.contains("output")) cfg.output = j["output"].get<std::string>();
    return cfg;
}

namespace {

struct CellVariant {
    Variant variant;
    std::string source_id;  // Ex only
};

// "Ex" fans out to every other dataset as a source; explicit Ex(id) is kept
// as-is, skipping the diagonal.
std::vector<CellVariant> expand_variants(const std::vector<std::string>& variants,
                                         const std::vector<GridDataset>& datasets,
                                         const std::string& target_id) {
    std::vector<CellVariant> out;
    for (const auto& label : variants) {
        std::string src;
        Variant v = variant_from_label(label, &src);
        if (v != Variant::Ex) {
            out.push_back({v, ""});
        } else if (!src.empty()) {
            if (src != target_id) out.push_back({v, src});
        } else {
            for (const auto& ds : datasets)
                if (ds.id != target_id) out.push_back({v, ds.id});
        }
    }
    return out;
}

}  // namespace

std::vector<ExperimentRecord> run_grid(const GridConfig& cfg) {
    DatasetStore store(cfg.datasets);
    PretrainCache cache;
    std::vector<ExperimentRecord> records;

    for (const auto& target : cfg.datasets) {
        for (const auto& reduction : cfg.reductions) {
            for (const auto& arch : cfg.architectures) {
                auto variants = expand_variants(cfg.variants, cfg.datasets, target.id);
                for (const auto& cell : variants) {
                    ExperimentRecord marker;
                    marker.dataset = target.id;
                    marker.variant = variant_label(cell.variant, cell.source_id);
                    marker.blocks = arch.blocks;
                    marker.band_count = reduction.label();
                    marker.feasible = false;
                    try {
                        const SampleSet& target_samples = store.samples(target.id, reduction);
                        ShapeTrace trace = trace_shapes(arch, target_samples.bands());
                        if (!trace.feasible) {
                            records.push_back(marker);
                            continue;
                        }
                        VariantTask task;
                        task.variant = cell.variant;
                        task.target_id = target.id;
                        task.target = &target_samples;
                        task.target_be = target.be_override.value_or(cfg.split_be);
                        task.target_b = target.b_override.value_or(cfg.split_b);
                        task.arch = arch;
                        task.train_cfg = cfg.train;
                        task.finetune_cfg = cfg.finetune;
                        task.normalization = cfg.normalization;
                        task.band_label = reduction.label();
                        if (cell.variant == Variant::Ex) {
                            const SampleSet& source_samples =
                                store.samples(cell.source_id, reduction);
                            if (source_samples.bands() != target_samples.bands())
                                throw ConfigError(
                                    "grid: reduced band counts differ between source and "
                                    "target (" +
                                    std::to_string(source_samples.bands()) + " vs " +
                                    std::to_string(target_samples.bands()) + ")");
                            task.source_id = cell.source_id;
                            task.source = &source_samples;
                            task.source_be =
                                store.config(cell.source_id).be_override.value_or(cfg.split_be);
                        }
                        auto cell_records = run_variant(task, cfg.seeds, &cache);
                        records.insert(records.end(), cell_records.begin(), cell_records.end());
                    } catch (const ConfigError&) {
                        // unsatisfiable cell (shape, split or band mismatch):
                        // mark it and keep going
                        records.push_back(marker);
                    } catch (const DataError&) {
                        // unreadable or mismatched dataset: this cell cannot
                        // run, the rest of the grid still can
                        records.push_back(marker);
                    }
                }
            }
        }
    }
    sort_records(records);
    return records;
}

void run_grid_to_csv(const GridConfig& cfg, const std::string& out_path) {
    auto records = run_grid(cfg);
    write_records_csv(records, out_path.empty() ? cfg.output : out_path);
}

namespace {

struct ConfigKey {
    std::string dataset;
    std::string band_count;
    uint32_t blocks;
    bool operator<(const ConfigKey& o) const {
        return std::tie(dataset, band_count, blocks) < std::tie(o.dataset, o.band_count, o.blocks);
    }
};

}  // namespace

std::string render_report(const std::vector<ExperimentRecord>& records,
                          WilcoxonPairing pairing) {
    if (records.empty()) throw DataError("report: no records");
    auto rows = aggregate(records);
    std::ostringstream os;

    // Mean metrics, flagging the best non-B(E) variant per configuration.
    std::map<ConfigKey, const AggregateRow*> best;
    for (const auto& row : rows) {
        if (row.variant == "B(E)") continue;
        ConfigKey key{row.dataset, row.band_count, row.blocks};
        auto it = best.find(key);
        if (it == best.end() || row.mean_kappa > it->second->mean_kappa) best[key] = &row;
    }
    os << "== Mean metrics by configuration ==\n";
    os << "dataset  bands  blocks  variant      runs  OA       AA       kappa    best\n";
    for (const auto& row : rows) {
        ConfigKey key{row.dataset, row.band_count, row.blocks};
        std::string flag;
        auto it = best.find(key);
        if (it != best.end() && it->second == &row)
            flag = row.variant.rfind("Ex(", 0) == 0 ? "transfer" : "no-transfer";
        char line[256];
        std::snprintf(line, sizeof(line), "%-8s %-6s %-7u %-12s %-5llu %-8.4f %-8.4f %-8.4f %s\n",
                      row.dataset.c_str(), row.band_count.c_str(), row.blocks,
                      row.variant.c_str(), static_cast<unsigned long long>(row.runs), row.mean_oa,
                      row.mean_aa, row.mean_kappa, flag.c_str());
        os << line;
    }

    // Average ranking over configurations, mirroring the usual
    // "transfer vs cold start" comparison: B(E) is excluded unless it is the
    // only variant present.
    std::set<std::string> variant_names;
    for (const auto& row : rows) variant_names.insert(row.variant);
    bool only_be = variant_names.size() == 1;
    std::map<ConfigKey, std::map<std::string, double>> by_config;
    for (const auto& row : rows) {
        if (!only_be && row.variant == "B(E)") continue;
        by_config[{row.dataset, row.band_count, row.blocks}][row.variant] = row.mean_kappa;
    }
    os << "\n== Average rank by kappa (1 = best) ==\n";
    if (variant_names.size() == 1 || (variant_names.size() == 2 && variant_names.count("B(E)"))) {
        // one rankable variant: trivially rank 1
        std::string only;
        for (const auto& name : variant_names)
            if (only_be || name != "B(E)") only = name;
        os << only << "  rank 1.0 over " << by_config.size() << " configuration(s)\n";
    } else {
        std::vector<std::map<std::string, double>> configs;
        for (auto& [key, cells] : by_config) configs.push_back(cells);
        auto ranking = average_rank(configs);
        std::sort(ranking.begin(), ranking.end(),
                  [](const RankingEntry& a, const RankingEntry& b) {
                      return a.average_rank < b.average_rank;
                  });
        for (const auto& entry : ranking) {
            char line[160];
            std::snprintf(line, sizeof(line), "%-12s %6.3f  (over %llu configurations)\n",
                          entry.variant.c_str(), entry.average_rank,
                          static_cast<unsigned long long>(entry.configurations));
            os << line;
        }
    }

    // Pairwise Wilcoxon tests over kappa between non-B(E) variants.
    std::vector<std::string> test_variants;
    for (const auto& name : variant_names)
        if (name != "B(E)") test_variants.push_back(name);
    if (test_variants.size() >= 2) {
        os << "\n== Two-tailed Wilcoxon tests on kappa (pairing: "
           << (pairing == WilcoxonPairing::PerSeed ? "per-seed" : "per-cell") << ") ==\n";
        os << "variant A     variant B     n   W        p          method  p<0.005\n";
        for (size_t a = 0; a < test_variants.size(); ++a) {
            for (size_t b = a + 1; b < test_variants.size(); ++b) {
                std::vector<double> xs, ys;
                if (pairing == WilcoxonPairing::PerSeed) {
                    std::map<std::tuple<std::string, std::string, uint32_t, uint64_t>, double>
                        ka, kb;
                    for (const auto& rec : records) {
                        if (!rec.feasible) continue;
                        auto key = std::make_tuple(rec.dataset, rec.band_count, rec.blocks,
                                                   rec.seed);
                        if (rec.variant == test_variants[a]) ka[key] = rec.kappa;
                        if (rec.variant == test_variants[b]) kb[key] = rec.kappa;
                    }
                    for (const auto& [key, va] : ka) {
                        auto it = kb.find(key);
                        if (it != kb.end()) {
                            xs.push_back(va);
                            ys.push_back(it->second);
                        }
                    }
                } else {
                    std::map<ConfigKey, double> ka, kb;
                    for (const auto& row : rows) {
                        ConfigKey key{row.dataset, row.band_count, row.blocks};
                        if (row.variant == test_variants[a]) ka[key] = row.mean_kappa;
                        if (row.variant == test_variants[b]) kb[key] = row.mean_kappa;
                    }
                    for (const auto& [key, va] : ka) {
                        auto it = kb.find(key);
                        if (it != kb.end()) {
                            xs.push_back(va);
                            ys.push_back(it->second);
                        }
                    }
                }
                if (xs.size() < 2) continue;
                WilcoxonResult res = wilcoxon_two_tailed(xs, ys);
                char line[224];
                std::snprintf(line, sizeof(line),
                              "%-13s %-13s %-3llu %-8.1f %-10.6g %-7s %s\n",
                              test_variants[a].c_str(), test_variants[b].c_str(),
                              static_cast<unsigned long long>(res.n_effective), res.statistic,
                              res.p_two_tailed,
                              res.method == WilcoxonMethod::Exact ? "exact" : "normal",
                              res.p_two_tailed < 0.005 ? "yes" : "no");
                os << line;
            }
        }
    }
    return os.str();
}

PretrainPlan parse_pretrain_plan(const std::string& path) {
    json j = load_json(path, "plan");
    reject_unknown_keys(
        j, {"source", "split_be", "reduction", "arch", "train", "normalization", "seed"}, "plan");
    PretrainPlan plan;
    if (!j.contains("source")) throw ConfigError("plan: source dataset required");
    GridDataset ds = parse_dataset(j["source"]);
    plan.source_id = ds.id;
    plan.cube_path = ds.cube_path;
    plan.labels_path = ds.labels_path;
    if (j.contains("split_be")) plan.split_be = parse_split_be(j["split_be"], "plan.split_be");
    if (j.contains("reduction")) plan.reduction = parse_reduction(j["reduction"], "plan.reduction");
    if (!j.contains("arch")) throw ConfigError("plan: arch required");
    plan.arch = arch_from_json(j["arch"].dump());
    if (j.contains("train")) plan.train = parse_train(j["train"], TrainConfig{}, "plan.train");
    if (j.contains("normalization"))
        plan.normalization = parse_norm(j["normalization"], "plan.normalization");
    if (j.contains("seed")) plan.seed = j["seed"].get<uint64_t>();
    return plan;
}

void run_pretrain(const PretrainPlan& plan, const std::string& out_model_path) {
    SpectralCube cube = load_cube(plan.cube_path);
    LabelMap labels = load_labels(plan.labels_path);
    SampleSet samples;
    if (plan.reduction.full) {
        samples = extract_samples(cube, labels);
    } else {
        samples = extract_samples(reduce(cube, plan.reduction.spec), labels);
    }
    DatasetSplit split =
        make_be_split(samples, plan.split_be, derive_seed(plan.seed, seed_stream::kSourceSplit));
    TrainConfig cfg = plan.train;
    cfg.seed = derive_seed(plan.seed, seed_stream::kTrain);
    FitOutcome outcome = train_on_split(plan.arch, split, cfg, plan.normalization);
    save_model(outcome.model, out_model_path);
}

FinetunePlan parse_finetune_plan(const std::string& path) {
    json j = load_json(path, "finetune");
    reject_unknown_keys(
        j, {"target", "split_b", "reduction", "train", "normalization", "seed"}, "finetune");
    FinetunePlan plan;
    if (!j.contains("target")) throw ConfigError("finetune: target dataset required");
    GridDataset ds = parse_dataset(j["target"]);
    plan.target_id = ds.id;
    plan.cube_path = ds.cube_path;
    plan.labels_path = ds.labels_path;
    if (j.contains("split_b")) plan.split_b = parse_split_b(j["split_b"], "finetune.split_b");
    if (j.contains("reduction"))
        plan.reduction = parse_reduction(j["reduction"], "finetune.reduction");
    if (j.contains("train")) plan.train = parse_train(j["train"], TrainConfig{}, "finetune.train");
    if (j.contains("normalization"))
        plan.normalization = parse_norm(j["normalization"], "finetune.normalization");
    if (j.contains("seed")) plan.seed = j["seed"].get<uint64_t>();
    return plan;
}

double run_finetune(const FinetunePlan& plan, const std::string& model_path,
                    const std::string& out_model_path) {
    LoadedModel loaded = load_model(model_path);
    SpectralCube cube = load_cube(plan.cube_path);
    LabelMap labels = load_labels(plan.labels_path);
    SampleSet samples;
    if (plan.reduction.full) {
        samples = extract_samples(cube, labels);
    } else {
        samples = extract_samples(reduce(cube, plan.reduction.spec), labels);
    }
    if (samples.bands() != loaded.params.input_bands)
        throw DataError("finetune: reduced target has " + std::to_string(samples.bands()) +
                        " bands, model expects " + std::to_string(loaded.params.input_bands));
    DatasetSplit split =
        make_b_split(samples, plan.split_b, derive_seed(plan.seed, seed_stream::kTargetSplit));
    ModelParams<float> model = reattach_head(loaded.params, split.class_count,
                                             derive_seed(plan.seed, seed_stream::kHead));
    TrainConfig cfg = plan.train;
    cfg.seed = derive_seed(plan.seed, seed_stream::kFinetune);
    fine_tune(model, split, cfg, plan.normalization);
    save_model(model, out_model_path);
    auto pred = predict(model, split.test);
    ConfusionMatrix cm = confusion(split.test.classes(), pred, split.class_count);
    return metrics(cm).oa;
}

}  // namespace hsitl
