#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsitl/records.hpp"

namespace hsitl {

/// C x C counts; rows are true classes, columns predicted.
struct ConfusionMatrix {
    uint32_t classes = 0;
    std::vector<uint64_t> counts;  // classes * classes, row-major

    uint64_t& at(uint32_t t, uint32_t p) { return counts[size_t(t) * classes + p]; }
    uint64_t at(uint32_t t, uint32_t p) const { return counts[size_t(t) * classes + p]; }
    uint64_t total() const;
};

struct MetricsReport {
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    std::vector<double> per_class;  // per-class recall (diag / row sum)
};

ConfusionMatrix confusion(const std::vector<int32_t>& truth, const std::vector<int32_t>& predicted,
                          uint32_t classes);

/// OA = trace/N, AA = mean per-class recall, kappa = 1 - (1-p_o)/(1-p_e)
/// with p_e the product-marginal chance agreement. Degenerate p_e = 1 gives
/// kappa 1 when p_o = 1, else 0. Throws DataError when some true class has
/// no samples.
MetricsReport metrics(const ConfusionMatrix& cm);

enum class WilcoxonMethod { Auto, Exact, NormalApprox };

struct WilcoxonResult {
    uint64_t n_effective = 0;  // pairs with nonzero difference
    double statistic = 0.0;    // W = min(W+, W-)
    double p_two_tailed = 1.0;
    WilcoxonMethod method = WilcoxonMethod::Exact;
};

/// Two-tailed Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped, tied |d| get mid-ranks. Auto selects full sign-assignment
/// enumeration for n_effective <= 20 and a tie-corrected normal
/// approximation with continuity correction above.
WilcoxonResult wilcoxon_two_tailed(const std::vector<double>& x, const std::vector<double>& y,
                                   WilcoxonMethod method = WilcoxonMethod::Auto);

/// One row of kappa values per configuration; absent cells are excluded
/// pairwise. Ranks within a configuration are 1 = best (descending kappa)
/// with mid-ranks on ties.
struct RankingEntry {
    std::string variant;
    double average_rank = 0.0;
    uint64_t configurations = 0;
};

std::vector<RankingEntry> average_rank(
    const std::vector<std::map<std::string, double>>& kappa_by_config);

/// Per-configuration arithmetic means over seeds.
struct AggregateRow {
    std::string dataset;
    std::string variant;
    uint32_t blocks = 0;
    std::string band_count;
    uint64_t runs = 0;
    double mean_oa = 0.0;
    double mean_aa = 0.0;
    double mean_kappa = 0.0;
    double mean_pretrain_s = 0.0;
    double mean_finetune_s = 0.0;
    double mean_infer_ms = 0.0;
};

std::vector<AggregateRow> aggregate(const std::vector<ExperimentRecord>& records);

}  // namespace hsitl
