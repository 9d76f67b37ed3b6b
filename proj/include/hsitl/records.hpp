#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hsitl {

/// One (seed, dataset, variant, band count, depth) run. Row type of all
/// results CSVs; metrics always come from the unseen test set.
struct ExperimentRecord {
    uint64_t seed = 0;
    std::string dataset;
    std::string variant;     // "B(E)", "B", or "Ex(<source id>)"
    uint32_t blocks = 0;
    std::string band_count;  // decimal count or "full"
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    double pretrain_s = 0.0;
    double finetune_s = 0.0;
    double infer_ms_per_sample = 0.0;
    bool feasible = true;    // false rows carry no metrics ("infeasible" status)
};

std::string record_csv_header();
std::string record_to_csv(const ExperimentRecord& rec);

std::vector<ExperimentRecord> read_records_csv(const std::string& path);
void write_records_csv(const std::vector<ExperimentRecord>& records, const std::string& path);

/// Canonical row order: (dataset, band_count, blocks, variant, seed).
void sort_records(std::vector<ExperimentRecord>& records);

}  // namespace hsitl
