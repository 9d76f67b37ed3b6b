#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hsitl/net.hpp"

namespace hsitl {

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint32_t batch_size = 64;
    uint32_t patience = 25;     // epochs without validation-OA improvement
    uint32_t max_epochs = 1000;
    uint64_t seed = 0;

    AdamHyper adam() const { return {learning_rate, beta1, beta2, epsilon}; }
    void validate() const;
};

enum class StopReason { Patience, MaxEpochs };

struct TrainReport {
    uint32_t epochs_run = 0;
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> val_oa;      // one entry per epoch
    StopReason stop_reason = StopReason::MaxEpochs;
    double seconds = 0.0;
    double best_val_oa = 0.0;
    uint32_t best_epoch = 0;  // 1-based; 0 when no epoch ran
};

/// Trains `params` in place on pre-normalized samples: one epoch = one full
/// seeded-shuffle pass; after each epoch validation OA is measured in infer
/// mode; training stops when OA has not improved on the best seen (absolute
/// tolerance 1e-12) for `patience` consecutive epochs or at max_epochs. On
/// return `params` holds the snapshot with the best validation OA.
template <typename T>
TrainReport fit(ModelParams<T>& params, const SampleSet& train, const SampleSet& val,
                const TrainConfig& cfg, TrainMask mask);

/// init_params + fit with mask = All.
template <typename T>
std::pair<ModelParams<T>, TrainReport> train_model(const ArchitectureConfig& arch,
                                                   const SampleSet& train, const SampleSet& val,
                                                   const TrainConfig& cfg);

/// Argmax of infer-mode forward, ties toward the smaller class id. Applies
/// the model's input normalizer when present.
template <typename T>
std::vector<int32_t> predict(const ModelParams<T>& params, const SampleSet& samples,
                             uint32_t batch_size = 256);

/// predict plus mean wall-clock milliseconds per sample.
template <typename T>
std::pair<std::vector<int32_t>, double> predict_timed(const ModelParams<T>& params,
                                                      const SampleSet& samples,
                                                      uint32_t batch_size = 256);

/// Fraction of samples predicted correctly.
template <typename T>
double overall_accuracy(const ModelParams<T>& params, const SampleSet& samples,
                        uint32_t batch_size = 256);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    size_t params_checked = 0;
};

/// Compares analytic gradients against central finite differences,
/// parameter-wise, in 64-bit, for a randomly initialized model and batch.
/// Intended for tiny architectures (<= ~10^3 parameters). The default step
/// balances truncation against round-off for double precision; larger steps
/// raise the odds that a perturbation pushes some pre-activation across a
/// ReLU kink, which shows up as a spurious mismatch.
GradCheckReport grad_check(const ArchitectureConfig& arch, uint32_t input_bands,
                           uint32_t batch_rows, uint64_t seed, double fd_step = 1e-4);

}  // namespace hsitl
