#include "hsitl/reduce.hpp"

#include <string>
#include <vector>

#include "hsitl/errors.hpp"

namespace hsitl {
namespace {

// Window edges as half-open [start, end) index pairs over the source bands.
std::vector<std::pair<uint32_t, uint32_t>> window_edges(uint32_t bands, uint32_t lambda) {
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t start = 0; start < bands; start += lambda)
        edges.emplace_back(start, std::min(start + lambda, bands));
    return edges;
}

std::vector<std::pair<uint32_t, uint32_t>> target_edges(uint32_t bands, uint32_t target) {
    std::vector<std::pair<uint32_t, uint32_t>> edges(target);
    for (uint32_t i = 0; i < target; ++i) {
        uint32_t lo = uint32_t(uint64_t(i) * bands / target);
        uint32_t hi = uint32_t(uint64_t(i + 1) * bands / target);
        edges[i] = {lo, hi};
    }
    return edges;
}

SpectralCube average_windows(const SpectralCube& cube,
                             const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
    SpectralCube out;
    out.height = cube.height;
    out.width = cube.width;
    out.bands = uint32_t(edges.size());
    out.data.resize(out.value_count());
    size_t pixels = cube.pixel_count();
    const float* src = cube.data.data();
    float* dst = out.data.data();
    for (size_t p = 0; p < pixels; ++p) {
        const float* in = src + p * cube.bands;
        float* o = dst + p * out.bands;
        for (size_t w = 0; w < edges.size(); ++w) {
            double acc = 0.0;
            for (uint32_t b = edges[w].first; b < edges[w].second; ++b) acc += in[b];
            o[w] = float(acc / double(edges[w].second - edges[w].first));
        }
    }
    return out;
}

}  // namespace

SpectralCube reduce_window(const SpectralCube& cube, uint32_t lambda) {
    if (lambda < 1) throw ConfigError("reduce: window length must be >= 1");
    return average_windows(cube, window_edges(cube.bands, lambda));
}

SpectralCube reduce_to_count(const SpectralCube& cube, uint32_t target_bands) {
    if (target_bands < 1 || target_bands > cube.bands)
        throw ConfigError("reduce: target band count " + std::to_string(target_bands) +
                          " out of range 1.." + std::to_string(cube.bands));
    return average_windows(cube, target_edges(cube.bands, target_bands));
}

SpectralCube reduce(const SpectralCube& cube, const ReductionSpec& spec) {
    return spec.mode == ReductionSpec::Mode::Window ? reduce_window(cube, spec.lambda)
                                                    : reduce_to_count(cube, spec.target_bands);
}

uint32_t reduced_band_count(uint32_t source_bands, const ReductionSpec& spec) {
    if (spec.mode == ReductionSpec::Mode::Window) {
        if (spec.lambda < 1) throw ConfigError("reduce: window length must be >= 1");
        return (source_bands + spec.lambda - 1) / spec.lambda;
    }
    if (spec.target_bands < 1 || spec.target_bands > source_bands)
        throw ConfigError("reduce: target band count " + std::to_string(spec.target_bands) +
                          " out of range 1.." + std::to_string(source_bands));
    return spec.target_bands;
}

DownlinkCost downlink_budget(const LinkBudget& budget) {
    if (budget.height == 0 || budget.width == 0 || budget.bands == 0 || budget.bit_depth == 0)
        throw ConfigError("budget: all geometry fields must be positive");
    if (!(budget.rate_bps > 0.0)) throw ConfigError("budget: rate must be positive");
    DownlinkCost cost;
    cost.volume_bits = budget.height * budget.width * budget.bands * budget.bit_depth;
    cost.seconds = double(cost.volume_bits) / budget.rate_bps;
    return cost;
}

}  // namespace hsitl
