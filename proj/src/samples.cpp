#include "hsitl/samples.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hsitl/errors.hpp"
#include "hsitl/rng.hpp"

namespace hsitl {

void SampleSet::reserve(size_t n) {
    spectra_.reserve(n * bands_);
    classes_.reserve(n);
    ys_.reserve(n);
    xs_.reserve(n);
}

void SampleSet::push_back(std::span<const double> spectrum, int32_t cls, uint32_t y, uint32_t x) {
    if (spectrum.size() != bands_)
        throw DataError("sample: spectrum length " + std::to_string(spectrum.size()) +
                        " does not match set bands " + std::to_string(bands_));
    spectra_.insert(spectra_.end(), spectrum.begin(), spectrum.end());
    classes_.push_back(cls);
    ys_.push_back(y);
    xs_.push_back(x);
}

uint32_t SampleSet::class_count() const {
    int32_t c = -1;
    for (int32_t v : classes_) c = std::max(c, v);
    return uint32_t(c + 1);
}

SampleSet extract_samples(const SpectralCube& cube, const LabelMap& labels) {
    if (cube.height != labels.height || cube.width != labels.width)
        throw DataError("extract_samples: cube is " + std::to_string(cube.height) + "x" +
                        std::to_string(cube.width) + " but labels are " +
                        std::to_string(labels.height) + "x" + std::to_string(labels.width));
    SampleSet out(cube.bands);
    size_t labeled = 0;
    for (uint16_t v : labels.labels)
        if (v != 0) ++labeled;
    out.reserve(labeled);
    std::vector<double> spec(cube.bands);
    for (uint32_t y = 0; y < cube.height; ++y) {
        for (uint32_t x = 0; x < cube.width; ++x) {
            uint16_t label = labels.at(y, x);
            if (label == 0) continue;
            auto src = cube.spectrum(y, x);
            for (uint32_t b = 0; b < cube.bands; ++b) spec[b] = src[b];
            out.push_back(spec, int32_t(label) - 1, y, x);
        }
    }
    return out;
}

namespace {

// Shared by both split flavors: per-class index lists shuffled by per-class
// substreams, then cut into train / validation / test prefixes.
DatasetSplit split_by_counts(const SampleSet& samples,
                             const std::vector<std::pair<uint32_t, uint32_t>>& counts,
                             uint64_t seed) {
    uint32_t class_count = samples.class_count();
    std::vector<std::vector<size_t>> per_class(class_count);
    for (size_t i = 0; i < samples.size(); ++i) {
        int32_t c = samples.cls(i);
        if (c < 0 || uint32_t(c) >= class_count)
            throw DataError("split: class id out of range");
        per_class[size_t(c)].push_back(i);
    }

    SplitMix64 root(seed);
    DatasetSplit split;
    split.train = SampleSet(samples.bands());
    split.validation = SampleSet(samples.bands());
    split.test = SampleSet(samples.bands());
    split.class_count = class_count;
    split.seed = seed;

    // Membership marks keep the final sets in stable origin order, so the
    // split is a pure function of (samples, counts, seed) with no dependence
    // on per-class iteration order.
    enum : uint8_t { kTrain, kVal, kTest };
    std::vector<uint8_t> mark(samples.size(), kTest);

    for (uint32_t c = 0; c < class_count; ++c) {
        auto [n_train, n_val] = counts[c];
        auto& idx = per_class[c];
        if (idx.size() <= size_t(n_train) + n_val)
            throw ConfigError("split: class " + std::to_string(c + 1) + " has " +
                              std::to_string(idx.size()) + " samples, needs more than " +
                              std::to_string(n_train + n_val));
        SplitMix64 rng = root.substream(c);
        shuffle(idx, rng);
        for (size_t k = 0; k < n_train; ++k) mark[idx[k]] = kTrain;
        for (size_t k = n_train; k < size_t(n_train) + n_val; ++k) mark[idx[k]] = kVal;
    }

    for (size_t i = 0; i < samples.size(); ++i) {
        Sample s = samples[i];
        switch (mark[i]) {
            case kTrain: split.train.push_back(s); break;
            case kVal: split.validation.push_back(s); break;
            default: split.test.push_back(s); break;
        }
    }
    return split;
}

}  // namespace

DatasetSplit split_be(const SampleSet& samples, uint32_t per_class_train,
                      uint32_t per_class_val, uint64_t seed) {
    if (samples.empty()) throw DataError("split: empty sample set");
    std::vector<std::pair<uint32_t, uint32_t>> counts(samples.class_count(),
                                                      {per_class_train, per_class_val});
    return split_by_counts(samples, counts, seed);
}

DatasetSplit split_b(const SampleSet& samples, const PerClassCounts& counts, uint64_t seed) {
    if (samples.empty()) throw DataError("split: empty sample set");
    uint32_t class_count = samples.class_count();
    std::vector<std::pair<uint32_t, uint32_t>> vec(class_count);
    for (uint32_t c = 0; c < class_count; ++c) {
        auto it = counts.find(int32_t(c));
        if (it == counts.end())
            throw ConfigError("split: no counts configured for class " + std::to_string(c + 1));
        vec[c] = it->second;
    }
    return split_by_counts(samples, vec, seed);
}

Normalizer fit_normalizer(const SampleSet& train, NormMode mode) {
    if (train.empty()) throw DataError("normalizer: empty fitting set");
    uint32_t bands = train.bands();
    size_t n = train.size();
    Normalizer norm;
    norm.mode = mode;
    norm.shift.assign(bands, 0.0);
    norm.scale.assign(bands, 1.0);

    if (mode == NormMode::ZScore) {
        std::vector<double> mean(bands, 0.0), sq(bands, 0.0);
        for (size_t i = 0; i < n; ++i) {
            auto s = train.spectrum(i);
            for (uint32_t b = 0; b < bands; ++b) mean[b] += s[b];
        }
        for (uint32_t b = 0; b < bands; ++b) mean[b] /= double(n);
        for (size_t i = 0; i < n; ++i) {
            auto s = train.spectrum(i);
            for (uint32_t b = 0; b < bands; ++b) {
                double d = s[b] - mean[b];
                sq[b] += d * d;
            }
        }
        for (uint32_t b = 0; b < bands; ++b) {
            norm.shift[b] = mean[b];
            double var = sq[b] / double(n);  // population variance
            norm.scale[b] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    } else {
        std::vector<double> lo(bands, std::numeric_limits<double>::infinity());
        std::vector<double> hi(bands, -std::numeric_limits<double>::infinity());
        for (size_t i = 0; i < n; ++i) {
            auto s = train.spectrum(i);
            for (uint32_t b = 0; b < bands; ++b) {
                lo[b] = std::min(lo[b], s[b]);
                hi[b] = std::max(hi[b], s[b]);
            }
        }
        for (uint32_t b = 0; b < bands; ++b) {
            norm.shift[b] = lo[b];
            norm.scale[b] = hi[b] > lo[b] ? hi[b] - lo[b] : 1.0;
        }
    }
    return norm;
}

void Normalizer::apply(SampleSet& samples) const {
    if (samples.bands() != shift.size())
        throw DataError("normalizer: fitted for " + std::to_string(shift.size()) +
                        " bands, got " + std::to_string(samples.bands()));
    for (size_t i = 0; i < samples.size(); ++i) {
        auto s = samples.spectrum_mut(i);
        for (size_t b = 0; b < shift.size(); ++b) s[b] = (s[b] - shift[b]) / scale[b];
    }
}

}  // namespace hsitl
