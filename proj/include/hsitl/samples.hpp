#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hsitl/cube.hpp"

namespace hsitl {

/// One labeled pixel: its spectrum, 0-based class and origin coordinates.
/// Lightweight view into a SampleSet row.
struct Sample {
    std::span<const double> spectrum;
    int32_t cls;  // 0..C-1
    uint32_t y;
    uint32_t x;
};

/// Column-contiguous sample storage. Spectra are kept in double so that
/// normalization statistics hold to full precision; training converts to
/// 32-bit at batch assembly.
class SampleSet {
public:
    SampleSet() = default;
    explicit SampleSet(uint32_t bands) : bands_(bands) {}

    void reserve(size_t n);
    void push_back(std::span<const double> spectrum, int32_t cls, uint32_t y, uint32_t x);
    void push_back(const Sample& s) { push_back(s.spectrum, s.cls, s.y, s.x); }

    size_t size() const { return classes_.size(); }
    bool empty() const { return classes_.empty(); }
    uint32_t bands() const { return bands_; }

    Sample operator[](size_t i) const {
        return {{spectra_.data() + i * bands_, bands_}, classes_[i], ys_[i], xs_[i]};
    }
    std::span<const double> spectrum(size_t i) const {
        return {spectra_.data() + i * bands_, bands_};
    }
    std::span<double> spectrum_mut(size_t i) { return {spectra_.data() + i * bands_, bands_}; }
    int32_t cls(size_t i) const { return classes_[i]; }

    /// Number of distinct classes, assuming 0-based contiguous ids.
    uint32_t class_count() const;

    const std::vector<int32_t>& classes() const { return classes_; }

private:
    uint32_t bands_ = 0;
    std::vector<double> spectra_;  // size() * bands_, row-major
    std::vector<int32_t> classes_;
    std::vector<uint32_t> ys_, xs_;
};

/// Disjoint train/validation/test sets over the labeled pixels of one scene.
struct DatasetSplit {
    SampleSet train;
    SampleSet validation;
    SampleSet test;
    uint32_t class_count = 0;
    uint64_t seed = 0;
};

/// One Sample per labeled pixel (label > 0); class = label - 1.
/// Throws DataError on dimension mismatch.
SampleSet extract_samples(const SpectralCube& cube, const LabelMap& labels);

/// Balanced split: exactly `per_class_train` training and `per_class_val`
/// validation samples of every class, the remainder as test. Selection is a
/// deterministic function of the seed (per-class SplitMix64 substreams).
/// Throws ConfigError when a class has too few samples (every class must
/// keep at least one test sample).
DatasetSplit split_be(const SampleSet& samples, uint32_t per_class_train,
                      uint32_t per_class_val, uint64_t seed);

/// Per-class (train, validation) counts for every 0-based class id.
using PerClassCounts = std::map<int32_t, std::pair<uint32_t, uint32_t>>;

/// Same contract as split_be with per-class configurable counts. The map
/// must cover every class present in `samples`.
DatasetSplit split_b(const SampleSet& samples, const PerClassCounts& counts, uint64_t seed);

enum class NormMode { ZScore, MinMax };

/// Per-band affine transform fitted on a training set and reused verbatim on
/// validation/test: zscore maps to mean 0 / population std 1, minmax to
/// [0, 1]. Degenerate (constant) bands get scale 1.
struct Normalizer {
    NormMode mode = NormMode::ZScore;
    std::vector<double> shift;
    std::vector<double> scale;  // strictly positive

    void apply(SampleSet& samples) const;
};

Normalizer fit_normalizer(const SampleSet& train, NormMode mode);

}  // namespace hsitl
