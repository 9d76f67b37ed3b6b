#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsitl/reduce.hpp"
#include "hsitl/transfer.hpp"

namespace hsitl {

/// "full" or a target band count / window reduction.
struct ReductionChoice {
    bool full = true;
    ReductionSpec spec;
    std::string label() const;
};

struct GridDataset {
    std::string id;
    std::string cube_path;
    std::string labels_path;
    std::optional<SplitSpecBE> be_override;
    std::optional<SplitSpecB> b_override;
};

struct GridConfig {
    std::vector<GridDataset> datasets;
    SplitSpecBE split_be;
    SplitSpecB split_b;
    std::vector<ArchitectureConfig> architectures;
    std::vector<ReductionChoice> reductions;
    std::vector<std::string> variants;  // "B(E)", "B", "Ex", "Ex(<id>)"
    std::vector<uint64_t> seeds;
    TrainConfig train;
    TrainConfig finetune;
    NormMode normalization = NormMode::ZScore;
    std::string output = "results.csv";
};

GridConfig parse_grid_config(const std::string& path);

/// Runs every (dataset, reduction, architecture, variant, seed) cell.
/// Shape-infeasible or unsatisfiable cells yield one "infeasible" marker
/// record instead of aborting; datasets are loaded lazily, so runs that
/// never reference a dataset never read its files. Rows come back in
/// canonical order.
std::vector<ExperimentRecord> run_grid(const GridConfig& cfg);

/// run_grid + CSV emission (to `out_path`, or cfg.output when empty).
void run_grid_to_csv(const GridConfig& cfg, const std::string& out_path = "");

enum class WilcoxonPairing { PerSeed, PerCell };

/// Formatted summary: per-configuration means with best-variant flags,
/// the average-rank table, and the pairwise Wilcoxon matrix.
std::string render_report(const std::vector<ExperimentRecord>& records,
                          WilcoxonPairing pairing = WilcoxonPairing::PerSeed);

struct PretrainPlan {
    std::string source_id;
    std::string cube_path;
    std::string labels_path;
    SplitSpecBE split_be;
    ReductionChoice reduction;
    ArchitectureConfig arch;
    TrainConfig train;
    NormMode normalization = NormMode::ZScore;
    uint64_t seed = 0;
};

PretrainPlan parse_pretrain_plan(const std::string& path);

/// Full pretraining pipeline: load, reduce, split B(E), train, and write the
/// model checkpoint.
void run_pretrain(const PretrainPlan& plan, const std::string& out_model_path);

struct FinetunePlan {
    std::string target_id;
    std::string cube_path;
    std::string labels_path;
    SplitSpecB split_b;
    ReductionChoice reduction;
    TrainConfig train;
    NormMode normalization = NormMode::ZScore;
    uint64_t seed = 0;
};

FinetunePlan parse_finetune_plan(const std::string& path);

/// Loads a pretrained model, reattaches a target-sized head, fine-tunes it
/// on the target's B split and writes the tuned checkpoint. Prints nothing;
/// returns the target test OA for callers that want a quick readout.
double run_finetune(const FinetunePlan& plan, const std::string& model_path,
                    const std::string& out_model_path);

}  // namespace hsitl
