#include "hsitl/transfer.hpp"

#include <cmath>
#include <numeric>

#include "hsitl/checkpoint.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/rng.hpp"
#include "hsitl/stats.hpp"

namespace hsitl {

uint64_t derive_seed(uint64_t experiment_seed, uint64_t stream) {
    return SplitMix64(experiment_seed).substream(stream).next();
}

namespace {

using namespace seed_stream;

uint64_t derive(uint64_t seed, uint64_t stream) { return derive_seed(seed, stream); }

PerClassCounts resolve_b_counts(const SplitSpecB& spec, uint32_t class_count) {
    if (!spec.per_class.empty()) return spec.per_class;
    PerClassCounts counts;
    for (uint32_t c = 0; c < class_count; ++c)
        counts[int32_t(c)] = {spec.train_per_class, spec.val_per_class};
    return counts;
}

}  // namespace

DatasetSplit make_be_split(const SampleSet& samples, const SplitSpecBE& spec, uint64_t seed) {
    return split_be(samples, spec.train_per_class, spec.val_per_class, seed);
}

DatasetSplit make_b_split(const SampleSet& samples, const SplitSpecB& spec, uint64_t seed) {
    return split_b(samples, resolve_b_counts(spec, samples.class_count()), seed);
}

FitOutcome train_on_split(ArchitectureConfig arch, const DatasetSplit& split,
                          const TrainConfig& cfg, NormMode norm) {
    arch.class_count = split.class_count;
    Normalizer normalizer = fit_normalizer(split.train, norm);
    SampleSet train = split.train;
    SampleSet val = split.validation;
    normalizer.apply(train);
    normalizer.apply(val);
    auto [model, report] = train_model<float>(arch, train, val, cfg);
    model.input_norm = std::move(normalizer);
    return {std::move(model), std::move(report)};
}

ModelParams<float> reattach_head(const ModelParams<float>& params, uint32_t target_classes,
                                 uint64_t seed) {
    ModelParams<float> out = params;
    out.arch.class_count = target_classes;
    out.input_norm.reset();
    // Rebuild the head exactly as init_params would, drawing from this
    // seed's substreams; the extractor tensors stay untouched.
    ArchitectureConfig arch = out.arch;
    ModelParams<float> fresh = [&] {
        ShapeTrace trace = require_feasible(arch, params.input_bands);
        ModelParams<float> head_only;
        head_only.arch = arch;
        head_only.arch.blocks = arch.blocks;
        head_only.input_bands = params.input_bands;
        SplitMix64 root(seed);
        uint64_t stream = 0;
        uint32_t in_dim = trace.flatten_dim;
        for (uint32_t size : arch.fc_sizes) {
            DenseParams<float> fc;
            fc.w = Tensor<float>::zeros({size, in_dim});
            double limit = std::sqrt(6.0 / double(in_dim));
            SplitMix64 rng = root.substream(stream++);
            for (float& w : fc.w.v) w = float((2.0 * rng.next_unit() - 1.0) * limit);
            fc.b = Tensor<float>::zeros({size});
            head_only.head.push_back(std::move(fc));
            in_dim = size;
        }
        DenseParams<float> last;
        last.w = Tensor<float>::zeros({arch.class_count, in_dim});
        double limit = std::sqrt(6.0 / double(in_dim));
        SplitMix64 rng = root.substream(stream++);
        for (float& w : last.w.v) w = float((2.0 * rng.next_unit() - 1.0) * limit);
        last.b = Tensor<float>::zeros({arch.class_count});
        head_only.head.push_back(std::move(last));
        return head_only;
    }();
    out.head = std::move(fresh.head);
    return out;
}

TrainReport fine_tune(ModelParams<float>& params, const DatasetSplit& target,
                      const TrainConfig& cfg, NormMode norm) {
    if (target.train.empty() || target.validation.empty())
        throw DataError("fine_tune: empty target train or validation set");
    if (target.train.bands() != params.input_bands)
        throw DataError("fine_tune: target has " + std::to_string(target.train.bands()) +
                        " bands, model expects " + std::to_string(params.input_bands));
    if (target.class_count != params.arch.class_count)
        throw DataError("fine_tune: head sized for " + std::to_string(params.arch.class_count) +
                        " classes, target has " + std::to_string(target.class_count));

    Normalizer normalizer = fit_normalizer(target.train, norm);
    SampleSet train = target.train;
    SampleSet val = target.validation;
    normalizer.apply(train);
    normalizer.apply(val);

    // Frozen extractor: compute features once in infer mode, then train the
    // head as a standalone MLP. Identical arithmetic to masked full-model
    // steps because infer-mode features are constant.
    auto featurize = [&](const SampleSet& samples) {
        SampleSet feats;
        Matrix<float> batch;
        std::vector<int32_t> labels;
        std::vector<size_t> idx(samples.size());
        std::iota(idx.begin(), idx.end(), 0);
        constexpr size_t kChunk = 256;
        bool first = true;
        for (size_t start = 0; start < samples.size(); start += kChunk) {
            size_t count = std::min(kChunk, samples.size() - start);
            assemble_batch(samples, std::span<const size_t>(idx.data() + start, count), batch,
                           labels);
            Matrix<float> f = extract_features(params, batch);
            if (first) {
                feats = SampleSet(uint32_t(f.cols));
                feats.reserve(samples.size());
                first = false;
            }
            std::vector<double> row(f.cols);
            for (size_t r = 0; r < f.rows; ++r) {
                for (size_t c = 0; c < f.cols; ++c) row[c] = f.row(r)[c];
                Sample s = samples[start + r];
                feats.push_back(row, s.cls, s.y, s.x);
            }
        }
        return feats;
    };

    SampleSet feat_train = featurize(train);
    SampleSet feat_val = featurize(val);

    ModelParams<float> head_model;
    head_model.arch = params.arch;
    head_model.input_bands = feat_train.bands();
    head_model.head = params.head;

    TrainReport report = fit(head_model, feat_train, feat_val, cfg, TrainMask::All);
    params.head = std::move(head_model.head);
    params.input_norm = std::move(normalizer);
    return report;
}

Variant variant_from_label(const std::string& label, std::string* source_id) {
    if (source_id) source_id->clear();
    if (label == "B(E)" || label == "BE") return Variant::BE;
    if (label == "B") return Variant::B;
    if (label == "Ex") return Variant::Ex;
    if (label.rfind("Ex(", 0) == 0 && label.back() == ')') {
        if (source_id) *source_id = label.substr(3, label.size() - 4);
        return Variant::Ex;
    }
    throw ConfigError("unknown variant '" + label + "' (expected B(E), B, Ex or Ex(<id>))");
}

std::string variant_label(Variant variant, const std::string& source_id) {
    switch (variant) {
        case Variant::BE: return "B(E)";
        case Variant::B: return "B";
        case Variant::Ex: return "Ex(" + source_id + ")";
    }
    return "?";
}

std::shared_ptr<const FitOutcome> PretrainCache::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : it->second;
}

void PretrainCache::store(const std::string& key, std::shared_ptr<const FitOutcome> outcome) {
    entries_[key] = std::move(outcome);
}

ExperimentRecord run_variant_seed(const VariantTask& task, uint64_t seed, PretrainCache* cache) {
    if (!task.target) throw ConfigError("run_variant: no target samples");
    ExperimentRecord rec;
    rec.seed = seed;
    rec.dataset = task.target_id;
    rec.variant = variant_label(task.variant, task.source_id);
    rec.blocks = task.arch.blocks;
    rec.band_count = task.band_label;

    ModelParams<float> model;
    const SampleSet* test = nullptr;
    DatasetSplit target_split;

    switch (task.variant) {
        case Variant::BE: {
            target_split = make_be_split(*task.target, task.target_be,
                                         derive(seed, kTargetSplit));
            TrainConfig cfg = task.train_cfg;
            cfg.seed = derive(seed, kTrain);
            FitOutcome out = train_on_split(task.arch, target_split, cfg, task.normalization);
            model = std::move(out.model);
            rec.pretrain_s = out.report.seconds;
            test = &target_split.test;
            break;
        }
        case Variant::B: {
            target_split =
                make_b_split(*task.target, task.target_b, derive(seed, kTargetSplit));
            TrainConfig cfg = task.train_cfg;
            cfg.seed = derive(seed, kTrain);
            FitOutcome out = train_on_split(task.arch, target_split, cfg, task.normalization);
            model = std::move(out.model);
            rec.pretrain_s = out.report.seconds;
            test = &target_split.test;
            break;
        }
        case Variant::Ex: {
            if (!task.source) throw ConfigError("run_variant: Ex requires source samples");
            if (task.source_id == task.target_id)
                throw ConfigError("run_variant: Ex requires source != target");
            std::string key = task.source_id + "|" + task.band_label + "|" +
                              arch_to_json(task.arch) + "|" + std::to_string(seed);
            std::shared_ptr<const FitOutcome> pretrained = cache ? cache->find(key) : nullptr;
            if (!pretrained) {
                DatasetSplit source_split = make_be_split(*task.source, task.source_be,
                                                          derive(seed, kSourceSplit));
                TrainConfig cfg = task.train_cfg;
                cfg.seed = derive(seed, kTrain);
                auto outcome = std::make_shared<FitOutcome>(
                    train_on_split(task.arch, source_split, cfg, task.normalization));
                if (cache) cache->store(key, outcome);
                pretrained = outcome;
            }
            rec.pretrain_s = pretrained->report.seconds;

            target_split =
                make_b_split(*task.target, task.target_b, derive(seed, kTargetSplit));
            model = reattach_head(pretrained->model, target_split.class_count,
                                  derive(seed, kHead));
            TrainConfig ft = task.finetune_cfg;
            ft.seed = derive(seed, kFinetune);
            TrainReport report = fine_tune(model, target_split, ft, task.normalization);
            rec.finetune_s = report.seconds;
            test = &target_split.test;
            break;
        }
    }

    auto [pred, ms_per_sample] = predict_timed(model, *test);
    std::vector<int32_t> truth(test->classes());
    ConfusionMatrix cm = confusion(truth, pred, target_split.class_count);
    MetricsReport m = metrics(cm);
    rec.oa = m.oa;
    rec.aa = m.aa;
    rec.kappa = m.kappa;
    rec.infer_ms_per_sample = ms_per_sample;
    return rec;
}

std::vector<ExperimentRecord> run_variant(const VariantTask& task,
                                          const std::vector<uint64_t>& seeds,
                                          PretrainCache* cache) {
    std::vector<ExperimentRecord> records;
    records.reserve(seeds.size());
    for (uint64_t seed : seeds) records.push_back(run_variant_seed(task, seed, cache));
    return records;
}

}  // namespace hsitl
