#pragma once

#include <cstdint>

#include "hsitl/cube.hpp"

namespace hsitl {

/// How to shrink a cube's spectral axis. Window mode averages fixed-width
/// non-overlapping windows of `lambda` consecutive bands (the final window
/// may be partial); target mode picks near-equal windows that land on an
/// exact output band count. The aggregator is the arithmetic mean.
struct ReductionSpec {
    enum class Mode { Window, TargetCount };
    Mode mode = Mode::Window;
    uint32_t lambda = 1;        // Window: bands per window, >= 1
    uint32_t target_bands = 0;  // TargetCount: 1 <= target_bands <= source bands
};

/// Output bands = ceil(bands / lambda); output band i is the mean of input
/// bands [i*lambda, min((i+1)*lambda, bands)). Spatial dims unchanged.
/// Accumulates in 64-bit, stores 32-bit.
SpectralCube reduce_window(const SpectralCube& cube, uint32_t lambda);

/// Output band i is the mean of input bands
/// [floor(i*B/target), floor((i+1)*B/target)); the windows partition the
/// spectrum and each is non-empty, with widths differing by at most one.
SpectralCube reduce_to_count(const SpectralCube& cube, uint32_t target_bands);

SpectralCube reduce(const SpectralCube& cube, const ReductionSpec& spec);

/// Bands after applying `spec` to a `source_bands`-band cube, without
/// touching pixel data.
uint32_t reduced_band_count(uint32_t source_bands, const ReductionSpec& spec);

/// Raw scene geometry and link rate for downlink arithmetic.
struct LinkBudget {
    uint64_t height = 0;
    uint64_t width = 0;
    uint64_t bands = 0;
    uint64_t bit_depth = 0;  // bits per sample
    double rate_bps = 0.0;
};

struct DownlinkCost {
    uint64_t volume_bits = 0;
    double seconds = 0.0;
};

/// volume = H*W*B*bit_depth exactly; time = volume / rate.
DownlinkCost downlink_budget(const LinkBudget& budget);

}  // namespace hsitl
