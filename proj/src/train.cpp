#include "hsitl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "hsitl/errors.hpp"
#include "hsitl/rng.hpp"

namespace hsitl {

namespace {

// Substream ids reserved off a TrainConfig seed. Epoch shuffles get
// kEpochStreamBase + epoch.
constexpr uint64_t kInitStream = 0x100;
constexpr uint64_t kEpochStreamBase = 0x1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
std::vector<int32_t> infer_labels(ModelParams<T>& params, const Matrix<T>& batch) {
    ForwardCache<T> cache;
    const Matrix<T>& probs = forward(params, batch, ForwardOpts::infer(), cache);
    std::vector<int32_t> out(probs.rows);
    for (size_t n = 0; n < probs.rows; ++n) {
        const T* p = probs.row(n);
        size_t best = 0;
        for (size_t c = 1; c < probs.cols; ++c)
            if (p[c] > p[best]) best = c;  // ties keep the smaller id
        out[n] = int32_t(best);
    }
    return out;
}

// Validation accuracy over already-normalized samples, batched.
template <typename T>
double val_accuracy(ModelParams<T>& params, const SampleSet& samples, uint32_t batch_size) {
    size_t correct = 0;
    Matrix<T> batch;
    std::vector<int32_t> labels;
    std::vector<size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t start = 0; start < samples.size(); start += batch_size) {
        size_t count = std::min<size_t>(batch_size, samples.size() - start);
        assemble_batch(samples, std::span<const size_t>(idx.data() + start, count), batch,
                       labels);
        auto pred = infer_labels(params, batch);
        for (size_t i = 0; i < count; ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    return double(correct) / double(samples.size());
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("train: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

template <typename T>
TrainReport fit(ModelParams<T>& params, const SampleSet& train, const SampleSet& val,
                const TrainConfig& cfg, TrainMask mask) {
    cfg.validate();
    if (train.empty() || val.empty()) throw DataError("fit: empty train or validation set");
    if (train.bands() != params.input_bands || val.bands() != params.input_bands)
        throw DataError("fit: sample bands do not match model input bands");

    auto start = Clock::now();
    TrainReport report;
    auto refs = trainable_tensors(params);
    AdamState<T> adam = AdamState<T>::template init_like<TensorRef<T>>(refs);
    SplitMix64 root(cfg.seed);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Matrix<T> batch;
    std::vector<int32_t> labels;
    ForwardCache<T> cache;
    GradientSet<T> grads;

    ModelParams<T> best_params = params;
    double best_oa = -1.0;
    uint32_t since_best = 0;
    uint64_t step = 0;

    const double kImproveTol = 1e-12;
    for (uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        SplitMix64 rng = root.substream(kEpochStreamBase + epoch);
        shuffle(order, rng);
        double loss_sum = 0.0;
        for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
            size_t count = std::min<size_t>(cfg.batch_size, order.size() - off);
            assemble_batch(train, std::span<const size_t>(order.data() + off, count), batch,
                           labels);
            double loss =
                loss_and_gradients(params, batch, labels, ForwardOpts::train(), cache, grads);
            adam_step(refs, grads, adam, ++step, cfg.adam(), mask);
            loss_sum += loss * double(count);
        }
        report.train_loss.push_back(loss_sum / double(order.size()));

        double oa = val_accuracy(params, val, cfg.batch_size);
        report.val_oa.push_back(oa);
        report.epochs_run = epoch;

        if (oa > best_oa + kImproveTol) {
            best_oa = oa;
            best_params = params;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            report.stop_reason = StopReason::Patience;
            break;
        }
    }
    if (report.epochs_run == cfg.max_epochs && report.stop_reason != StopReason::Patience)
        report.stop_reason = StopReason::MaxEpochs;
    if (report.best_epoch > 0) {
        params = std::move(best_params);
        report.best_val_oa = best_oa;
    }
    report.seconds = seconds_since(start);
    return report;
}

template <typename T>
std::pair<ModelParams<T>, TrainReport> train_model(const ArchitectureConfig& arch,
                                                   const SampleSet& train, const SampleSet& val,
                                                   const TrainConfig& cfg) {
    if (train.empty()) throw DataError("train: empty training set");
    ModelParams<T> params =
        init_params<T>(arch, train.bands(), SplitMix64(cfg.seed).substream(kInitStream).next());
    TrainReport report = fit(params, train, val, cfg, TrainMask::All);
    return {std::move(params), std::move(report)};
}

namespace {

template <typename T>
std::vector<int32_t> predict_impl(const ModelParams<T>& params, const SampleSet& samples,
                                  uint32_t batch_size) {
    if (samples.bands() != params.input_bands)
        throw DataError("predict: sample bands do not match model input bands");
    SampleSet local;
    const SampleSet* src = &samples;
    if (params.input_norm) {
        local = samples;
        params.input_norm->apply(local);
        src = &local;
    }
    auto& mutable_params = const_cast<ModelParams<T>&>(params);
    std::vector<int32_t> out;
    out.reserve(src->size());
    Matrix<T> batch;
    std::vector<int32_t> labels;
    std::vector<size_t> idx(src->size());
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t start = 0; start < src->size(); start += batch_size) {
        size_t count = std::min<size_t>(batch_size, src->size() - start);
        assemble_batch(*src, std::span<const size_t>(idx.data() + start, count), batch, labels);
        auto pred = infer_labels(mutable_params, batch);
        out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
}

}  // namespace

template <typename T>
std::vector<int32_t> predict(const ModelParams<T>& params, const SampleSet& samples,
                             uint32_t batch_size) {
    return predict_impl(params, samples, batch_size);
}

template <typename T>
std::pair<std::vector<int32_t>, double> predict_timed(const ModelParams<T>& params,
                                                      const SampleSet& samples,
                                                      uint32_t batch_size) {
    auto start = Clock::now();
    auto labels = predict_impl(params, samples, batch_size);
    double ms = seconds_since(start) * 1e3;
    return {std::move(labels), samples.empty() ? 0.0 : ms / double(samples.size())};
}

template <typename T>
double overall_accuracy(const ModelParams<T>& params, const SampleSet& samples,
                        uint32_t batch_size) {
    auto pred = predict(params, samples, batch_size);
    size_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == samples.cls(i)) ++correct;
    return samples.empty() ? 0.0 : double(correct) / double(pred.size());
}

GradCheckReport grad_check(const ArchitectureConfig& arch, uint32_t input_bands,
                           uint32_t batch_rows, uint64_t seed, double fd_step) {
    if (batch_rows < 2) throw ConfigError("grad_check: need a batch of at least 2 rows");
    SplitMix64 root(seed);
    ModelParams<double> params = init_params<double>(arch, input_bands, root.substream(1).next());

    Matrix<double> batch(batch_rows, input_bands);
    SplitMix64 data_rng = root.substream(2);
    for (double& x : batch.v) x = 2.0 * data_rng.next_unit() - 1.0;
    std::vector<int32_t> labels(batch_rows);
    for (auto& label : labels)
        label = int32_t(data_rng.next_below(arch.class_count));

    // Analytic gradients, train-mode statistics, no running-stat update so
    // repeated evaluations see identical parameters.
    ForwardOpts opts{true, false};
    ForwardCache<double> cache;
    GradientSet<double> grads;
    loss_and_gradients(params, batch, labels, opts, cache, grads);

    auto refs = trainable_tensors(params);
    GradCheckReport report;
    for (size_t i = 0; i < refs.size(); ++i) {
        Tensor<double>& tensor = *refs[i].tensor;
        for (size_t k = 0; k < tensor.v.size(); ++k) {
            double saved = tensor.v[k];
            tensor.v[k] = saved + fd_step;
            double up = cross_entropy_loss(params, batch, labels, opts);
            tensor.v[k] = saved - fd_step;
            double down = cross_entropy_loss(params, batch, labels, opts);
            tensor.v[k] = saved;
            double numeric = (up - down) / (2.0 * fd_step);
            double analytic = grads[i].v[k];
            // negligible gradients compare at absolute scale; relative error
            // there measures round-off, not correctness
            double denom = std::max(std::fabs(numeric), std::fabs(analytic));
            double rel = denom <= 1e-6 ? 0.0 : std::fabs(numeric - analytic) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_tensor = refs[i].name;
            }
            ++report.params_checked;
        }
    }
    return report;
}

#define HSITL_INSTANTIATE_TRAIN(T)                                                              \
    template TrainReport fit<T>(ModelParams<T>&, const SampleSet&, const SampleSet&,            \
                                const TrainConfig&, TrainMask);                                 \
    template std::pair<ModelParams<T>, TrainReport> train_model<T>(                             \
        const ArchitectureConfig&, const SampleSet&, const SampleSet&, const TrainConfig&);     \
    template std::vector<int32_t> predict<T>(const ModelParams<T>&, const SampleSet&,           \
                                             uint32_t);                                         \
    template std::pair<std::vector<int32_t>, double> predict_timed<T>(                          \
        const ModelParams<T>&, const SampleSet&, uint32_t);                                     \
    template double overall_accuracy<T>(const ModelParams<T>&, const SampleSet&, uint32_t);

HSITL_INSTANTIATE_TRAIN(float)
HSITL_INSTANTIATE_TRAIN(double)

#undef HSITL_INSTANTIATE_TRAIN

}  // namespace hsitl
