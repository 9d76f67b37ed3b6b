#include "hsitl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsitl/errors.hpp"

namespace hsitl {

uint64_t ConfusionMatrix::total() const {
    uint64_t n = 0;
    for (uint64_t v : counts) n += v;
    return n;
}

ConfusionMatrix confusion(const std::vector<int32_t>& truth, const std::vector<int32_t>& predicted,
                          uint32_t classes) {
    if (truth.size() != predicted.size())
        throw DataError("confusion: label vectors differ in length");
    if (truth.empty()) throw DataError("confusion: empty inputs");
    if (classes == 0) throw DataError("confusion: class count must be positive");
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.counts.assign(size_t(classes) * classes, 0);
    for (size_t i = 0; i < truth.size(); ++i) {
        int32_t t = truth[i], p = predicted[i];
        if (t < 0 || uint32_t(t) >= classes || p < 0 || uint32_t(p) >= classes)
            throw DataError("confusion: label out of range at index " + std::to_string(i));
        cm.at(uint32_t(t), uint32_t(p))++;
    }
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    uint64_t n = cm.total();
    if (n == 0) throw DataError("metrics: empty confusion matrix");
    uint32_t c = cm.classes;
    std::vector<uint64_t> row(c, 0), col(c, 0);
    uint64_t trace = 0;
    for (uint32_t t = 0; t < c; ++t) {
        for (uint32_t p = 0; p < c; ++p) {
            row[t] += cm.at(t, p);
            col[p] += cm.at(t, p);
        }
        trace += cm.at(t, t);
    }

    MetricsReport rep;
    rep.oa = double(trace) / double(n);
    rep.per_class.resize(c);
    double recall_sum = 0.0;
    for (uint32_t t = 0; t < c; ++t) {
        if (row[t] == 0)
            throw DataError("metrics: true class " + std::to_string(t) + " has no samples");
        rep.per_class[t] = double(cm.at(t, t)) / double(row[t]);
        recall_sum += rep.per_class[t];
    }
    rep.aa = recall_sum / double(c);

    uint64_t marginal = 0;  // sum_k row_k * col_k, exact in 64 bits at this scale
    for (uint32_t k = 0; k < c; ++k) marginal += row[k] * col[k];
    double p_o = rep.oa;
    if (marginal == n * n) {
        rep.kappa = p_o == 1.0 ? 1.0 : 0.0;  // single-class agreement, p_e = 1
    } else {
        double p_e = double(marginal) / double(n) / double(n);
        rep.kappa = 1.0 - (1.0 - p_o) / (1.0 - p_e);
    }
    return rep;
}

namespace {

// Mid-ranks of |d|, plus tie-group sizes for the normal-approximation
// variance correction.
std::vector<double> rank_magnitudes(const std::vector<double>& absd, std::vector<uint64_t>& ties) {
    size_t n = absd.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return absd[a] < absd[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && absd[order[j]] == absd[order[i]]) ++j;
        double mid = (double(i + 1) + double(j)) / 2.0;  // 1-based mid-rank
        for (size_t k = i; k < j; ++k) rank[order[k]] = mid;
        if (j - i > 1) ties.push_back(j - i);
        i = j;
    }
    return rank;
}

double normal_sf_two_tailed(double z_abs) { return std::erfc(z_abs / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_two_tailed(const std::vector<double>& x, const std::vector<double>& y,
                                   WilcoxonMethod method) {
    if (x.size() != y.size()) throw DataError("wilcoxon: paired samples differ in length");
    if (x.size() < 2) throw DataError("wilcoxon: need at least 2 pairs");

    std::vector<double> absd;
    std::vector<int> sign;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (d == 0.0) continue;  // zero differences dropped
        absd.push_back(std::fabs(d));
        sign.push_back(d > 0.0 ? 1 : -1);
    }

    WilcoxonResult res;
    res.n_effective = absd.size();
    if (absd.empty()) {
        res.statistic = 0.0;
        res.p_two_tailed = 1.0;
        res.method = WilcoxonMethod::Exact;
        return res;
    }

    std::vector<uint64_t> ties;
    std::vector<double> rank = rank_magnitudes(absd, ties);
    size_t n = absd.size();
    double w_plus = 0.0, w_minus = 0.0;
    for (size_t i = 0; i < n; ++i) (sign[i] > 0 ? w_plus : w_minus) += rank[i];
    res.statistic = std::min(w_plus, w_minus);

    bool exact = method == WilcoxonMethod::Exact ||
                 (method == WilcoxonMethod::Auto && n <= 20);
    if (exact && n > 30) throw ConfigError("wilcoxon: exact enumeration limited to n <= 30");

    if (exact) {
        res.method = WilcoxonMethod::Exact;
        // Doubled ranks are integers even with mid-ranks, so the null
        // distribution of 2*W+ over all 2^n sign assignments is a small
        // integer-indexed table.
        std::vector<int64_t> r2(n);
        int64_t t2 = 0;
        for (size_t i = 0; i < n; ++i) {
            r2[i] = llround(2.0 * rank[i]);
            t2 += r2[i];
        }
        std::vector<double> dist(size_t(t2) + 1, 0.0);
        dist[0] = 1.0;
        int64_t upper = 0;
        for (size_t i = 0; i < n; ++i) {
            upper += r2[i];
            for (int64_t w = upper; w >= r2[i]; --w) dist[size_t(w)] += dist[size_t(w - r2[i])];
        }
        int64_t w2 = llround(2.0 * res.statistic);
        double count_low = 0.0, count_high = 0.0;
        for (int64_t w = 0; w <= w2; ++w) count_low += dist[size_t(w)];
        for (int64_t w = t2 - w2; w <= t2; ++w) count_high += dist[size_t(w)];
        double total = std::ldexp(1.0, int(n));  // 2^n
        res.p_two_tailed = std::min(1.0, (count_low + count_high) / total);
    } else {
        res.method = WilcoxonMethod::NormalApprox;
        double dn = double(n);
        double mean = dn * (dn + 1.0) / 4.0;
        double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
        for (uint64_t t : ties) var -= (double(t) * t * t - double(t)) / 48.0;
        if (var <= 0.0) {
            res.p_two_tailed = 1.0;
            return res;
        }
        double num = w_plus - mean;
        double cc = num > 0.0 ? -0.5 : (num < 0.0 ? 0.5 : 0.0);  // continuity correction
        double z = (num + cc) / std::sqrt(var);
        res.p_two_tailed = std::min(1.0, normal_sf_two_tailed(std::fabs(z)));
    }
    return res;
}

std::vector<RankingEntry> average_rank(
    const std::vector<std::map<std::string, double>>& kappa_by_config) {
    std::map<std::string, std::pair<double, uint64_t>> acc;  // variant -> (rank sum, count)
    size_t usable = 0;
    for (const auto& config : kappa_by_config) {
        if (config.size() < 2) continue;  // nothing to rank against
        ++usable;
        std::vector<std::pair<std::string, double>> cells(config.begin(), config.end());
        std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        size_t i = 0;
        while (i < cells.size()) {
            size_t j = i;
            while (j < cells.size() && cells[j].second == cells[i].second) ++j;
            double mid = (double(i + 1) + double(j)) / 2.0;
            for (size_t k = i; k < j; ++k) {
                auto& slot = acc[cells[k].first];
                slot.first += mid;
                slot.second++;
            }
            i = j;
        }
    }
    if (usable == 0) throw DataError("ranking: no configuration covers two or more variants");
    std::vector<RankingEntry> out;
    for (const auto& [variant, sums] : acc)
        out.push_back({variant, sums.first / double(sums.second), sums.second});
    return out;
}

std::vector<AggregateRow> aggregate(const std::vector<ExperimentRecord>& records) {
    // Keyed by (dataset, variant, blocks, band_count) in canonical order.
    std::map<std::tuple<std::string, std::string, uint32_t, std::string>, AggregateRow> groups;
    for (const auto& rec : records) {
        if (!rec.feasible) continue;
        auto key = std::make_tuple(rec.dataset, rec.variant, rec.blocks, rec.band_count);
        auto& row = groups[key];
        if (row.runs == 0) {
            row.dataset = rec.dataset;
            row.variant = rec.variant;
            row.blocks = rec.blocks;
            row.band_count = rec.band_count;
        }
        row.runs++;
        row.mean_oa += rec.oa;
        row.mean_aa += rec.aa;
        row.mean_kappa += rec.kappa;
        row.mean_pretrain_s += rec.pretrain_s;
        row.mean_finetune_s += rec.finetune_s;
        row.mean_infer_ms += rec.infer_ms_per_sample;
    }
    std::vector<AggregateRow> out;
    for (auto& [key, row] : groups) {
        double n = double(row.runs);
        row.mean_oa /= n;
        row.mean_aa /= n;
        row.mean_kappa /= n;
        row.mean_pretrain_s /= n;
        row.mean_finetune_s /= n;
        row.mean_infer_ms /= n;
        out.push_back(row);
    }
    return out;
}

}  // namespace hsitl
