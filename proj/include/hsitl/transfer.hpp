#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hsitl/records.hpp"
#include "hsitl/samples.hpp"
#include "hsitl/train.hpp"

namespace hsitl {

/// Large balanced split used for pretraining feature extractors.
struct SplitSpecBE {
    uint32_t train_per_class = 270;
    uint32_t val_per_class = 30;
};

/// Small balanced split used for fine-tuning and cold-start baselines.
/// When `per_class` is non-empty it overrides the uniform counts per class
/// (keys are 0-based class ids).
struct SplitSpecB {
    uint32_t train_per_class = 20;
    uint32_t val_per_class = 5;
    PerClassCounts per_class;
};

DatasetSplit make_be_split(const SampleSet& samples, const SplitSpecBE& spec, uint64_t seed);
DatasetSplit make_b_split(const SampleSet& samples, const SplitSpecB& spec, uint64_t seed);

struct FitOutcome {
    ModelParams<float> model;
    TrainReport report;
};

/// Trains a fresh network end-to-end on a split. The normalizer is fitted on
/// split.train only and stored in the model, so the returned model accepts
/// raw spectra.
FitOutcome train_on_split(ArchitectureConfig arch, const DatasetSplit& split,
                          const TrainConfig& cfg, NormMode norm);

/// Replaces every FC layer and the softmax output with freshly initialized
/// ones sized for `target_classes`; extractor tensors and BN running stats
/// are copied bit-exactly. The input normalizer is dropped (the fine-tuning
/// stage fits its own from target training data).
ModelParams<float> reattach_head(const ModelParams<float>& params, uint32_t target_classes,
                                 uint64_t seed);

/// Trains the classifier head on the target split with the extractor frozen:
/// BN runs in inference mode throughout and extractor tensors (including
/// running stats) are left bit-identical. Internally the frozen extractor's
/// features are computed once and the head is optimized on them, which is
/// numerically identical to masked full-model training.
TrainReport fine_tune(ModelParams<float>& params, const DatasetSplit& target,
                      const TrainConfig& cfg, NormMode norm);

/// Substream ids hung off an experiment seed. The target split stream is
/// shared by the B and Ex arms so paired comparisons see the same split.
namespace seed_stream {
constexpr uint64_t kTargetSplit = 1;
constexpr uint64_t kSourceSplit = 2;
constexpr uint64_t kTrain = 3;
constexpr uint64_t kHead = 4;
constexpr uint64_t kFinetune = 5;
}  // namespace seed_stream

uint64_t derive_seed(uint64_t experiment_seed, uint64_t stream);

enum class Variant { BE, B, Ex };

Variant variant_from_label(const std::string& label, std::string* source_id);
std::string variant_label(Variant variant, const std::string& source_id = "");

/// Everything one experiment cell needs. Sample sets are already reduced to
/// the working band count but not normalized.
struct VariantTask {
    Variant variant = Variant::B;
    std::string target_id;
    const SampleSet* target = nullptr;
    std::string source_id;                // Ex only
    const SampleSet* source = nullptr;    // Ex only
    SplitSpecBE target_be, source_be;
    SplitSpecB target_b;
    ArchitectureConfig arch;              // class_count is set per dataset
    TrainConfig train_cfg, finetune_cfg;
    NormMode normalization = NormMode::ZScore;
    std::string band_label = "full";
};

/// Pretrained extractors shared between targets within one grid run; keyed
/// by (source, band label, architecture, seed).
class PretrainCache {
public:
    std::shared_ptr<const FitOutcome> find(const std::string& key) const;
    void store(const std::string& key, std::shared_ptr<const FitOutcome> outcome);

private:
    std::map<std::string, std::shared_ptr<const FitOutcome>> entries_;
};

/// Runs one (variant, seed) cell end to end and reports test-set metrics.
/// B(E) trains on the large split; B cold-starts on the small split; Ex
/// pretrains on the source's B(E) split, reattaches a target-sized head and
/// fine-tunes it on the target's B split. Ex with source == target is a
/// ConfigError.
ExperimentRecord run_variant_seed(const VariantTask& task, uint64_t seed,
                                  PretrainCache* cache = nullptr);

/// run_variant_seed over a seed list.
std::vector<ExperimentRecord> run_variant(const VariantTask& task,
                                          const std::vector<uint64_t>& seeds,
                                          PretrainCache* cache = nullptr);

}  // namespace hsitl
