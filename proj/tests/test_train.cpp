#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsitl/checkpoint.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/train.hpp"
#include "support/synthetic.hpp"

using namespace hsitl;

namespace {

struct SeparableData {
    SampleSet train, val, test;
};

SeparableData separable_data() {
    auto task = synth::separable_two_class(64);
    SeparableData data{task.draw(100, 1), task.draw(25, 2), task.draw(100, 3)};
    Normalizer norm = fit_normalizer(data.train, NormMode::ZScore);
    norm.apply(data.train);
    norm.apply(data.val);
    norm.apply(data.test);
    return data;
}

ArchitectureConfig small_cnn(uint32_t classes = 2) {
    ArchitectureConfig arch = ArchitectureConfig::cnn1d(1, classes, 16);
    arch.fc_sizes = {32, 16};
    return arch;
}

TrainConfig quick_cfg(uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.patience = 25;
    cfg.max_epochs = 200;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("separable two-class spectra train to validation OA >= 0.99") {
    SeparableData data = separable_data();
    auto [model, report] = train_model<float>(small_cnn(), data.train, data.val, quick_cfg(5));
    CHECK(report.best_val_oa >= 0.99);
    CHECK(overall_accuracy(model, data.test) >= 0.95);
    CHECK(report.train_loss.size() == report.epochs_run);
    CHECK(report.val_oa.size() == report.epochs_run);
    // loss comes down over the first epochs
    CHECK(report.train_loss.back() < report.train_loss.front());
}

TEST_CASE("constant validation OA stops after patience + 1 epochs") {
    SeparableData data = separable_data();
    TrainConfig cfg = quick_cfg(6);
    cfg.learning_rate = 1e-30;  // updates vanish in 32-bit: OA frozen
    cfg.max_epochs = 100;
    auto [model, report] = train_model<float>(small_cnn(), data.train, data.val, cfg);
    CHECK(report.stop_reason == StopReason::Patience);
    CHECK(report.epochs_run <= cfg.patience + 1);
    CHECK(report.best_epoch == 1);
}

TEST_CASE("max_epochs bounds the run") {
    SeparableData data = separable_data();
    TrainConfig cfg = quick_cfg(7);
    cfg.max_epochs = 3;
    auto [model, report] = train_model<float>(small_cnn(), data.train, data.val, cfg);
    CHECK(report.epochs_run == 3);
    CHECK(report.stop_reason == StopReason::MaxEpochs);
}

TEST_CASE("training twice with one seed is bit-identical") {
    SeparableData data = separable_data();
    TrainConfig cfg = quick_cfg(11);
    cfg.max_epochs = 8;
    auto [model_a, report_a] = train_model<float>(small_cnn(), data.train, data.val, cfg);
    auto [model_b, report_b] = train_model<float>(small_cnn(), data.train, data.val, cfg);
    CHECK(report_a.train_loss == report_b.train_loss);
    CHECK(report_a.val_oa == report_b.val_oa);
    CHECK(params_bytes(model_a) == params_bytes(model_b));

    TrainConfig other = cfg;
    other.seed = 12;
    auto [model_c, report_c] = train_model<float>(small_cnn(), data.train, data.val, other);
    CHECK(params_bytes(model_a) != params_bytes(model_c));
}

TEST_CASE("fit rejects empty sets and band mismatches") {
    SeparableData data = separable_data();
    ModelParams<float> params = init_params<float>(small_cnn(), 64, 1);
    SampleSet empty(64);
    CHECK_THROWS_AS(fit(params, empty, data.val, quick_cfg(0), TrainMask::All), DataError);
    CHECK_THROWS_AS(fit(params, data.train, empty, quick_cfg(0), TrainMask::All), DataError);
    SampleSet wrong(32);
    wrong.push_back(std::vector<double>(32, 0.0), 0, 0, 0);
    CHECK_THROWS_AS(fit(params, wrong, wrong, quick_cfg(0), TrainMask::All), DataError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.patience = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

// Head-only model emitting fixed class probabilities for any input.
ModelParams<float> fixed_probability_model(const std::vector<double>& probs) {
    ModelParams<float> params;
    params.arch = ArchitectureConfig::cnn1d(1, uint32_t(probs.size()));
    params.arch.use_batch_norm = false;
    params.arch.fc_sizes = {};
    params.input_bands = 1;
    DenseParams<float> out;
    out.w = Tensor<float>::zeros({uint32_t(probs.size()), 1});
    out.b = Tensor<float>::zeros({uint32_t(probs.size())});
    for (size_t c = 0; c < probs.size(); ++c) out.b.v[c] = float(std::log(probs[c]));
    params.head.push_back(out);
    return params;
}

SampleSet one_band_samples(size_t n) {
    SampleSet set(1);
    for (size_t i = 0; i < n; ++i) set.push_back(std::vector<double>{0.5}, 0, uint32_t(i), 0);
    return set;
}

}  // namespace

TEST_CASE("predict takes the argmax with ties toward the smaller class") {
    SUBCASE("probabilities (0.2, 0.5, 0.3) give class 1") {
        ModelParams<float> model = fixed_probability_model({0.2, 0.5, 0.3});
        auto labels = predict(model, one_band_samples(3));
        for (int32_t label : labels) CHECK(label == 1);
    }
    SUBCASE("exact tie (0.5, 0.5) gives class 0") {
        ModelParams<float> model = fixed_probability_model({0.5, 0.5});
        auto labels = predict(model, one_band_samples(2));
        for (int32_t label : labels) CHECK(label == 0);
    }
    SUBCASE("predict twice is identical, and predict_timed matches") {
        ModelParams<float> model = fixed_probability_model({0.1, 0.2, 0.7});
        SampleSet samples = one_band_samples(64);
        auto a = predict(model, samples);
        auto b = predict(model, samples);
        CHECK(a == b);
        auto [c, ms] = predict_timed(model, samples);
        CHECK(c == a);
        CHECK(ms >= 0.0);
    }
}
