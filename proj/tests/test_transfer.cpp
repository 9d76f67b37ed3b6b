#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsitl/checkpoint.hpp"
#include "hsitl/errors.hpp"
#include "hsitl/stats.hpp"
#include "hsitl/transfer.hpp"
#include "support/transfer_protocol.hpp"

using namespace hsitl;

namespace {

// Shared fixture: pretrain once, reuse across cases.
struct Pretrained {
    synth::TransferProtocol proto;
    FitOutcome outcome;
    DatasetSplit target_split;

    Pretrained() : proto(synth::transfer_protocol()) {
        proto.task.source = &proto.source;
        proto.task.target = &proto.target;
        DatasetSplit source_split =
            make_be_split(proto.source, proto.task.source_be, derive_seed(3, seed_stream::kSourceSplit));
        TrainConfig cfg = proto.task.train_cfg;
        cfg.seed = derive_seed(3, seed_stream::kTrain);
        cfg.max_epochs = 12;  // good enough features for contract tests
        outcome = train_on_split(proto.task.arch, source_split, cfg, NormMode::ZScore);
        target_split = make_b_split(proto.target, proto.task.target_b,
                                    derive_seed(3, seed_stream::kTargetSplit));
    }
};

Pretrained& fixture() {
    static Pretrained fix;
    return fix;
}

}  // namespace

TEST_CASE("reattach_head swaps the classifier and keeps the extractor byte-identical") {
    auto& fix = fixture();
    const ModelParams<float>& pre = fix.outcome.model;
    REQUIRE(pre.arch.class_count == 8);

    ModelParams<float> swapped = reattach_head(pre, 4, 555);
    CHECK(swapped.arch.class_count == 4);
    CHECK(swapped.head.back().w.shape[0] == 4);
    CHECK(extractor_bytes(swapped) == extractor_bytes(pre));
    CHECK_FALSE(swapped.input_norm.has_value());

    SUBCASE("same class count still reinitializes the head") {
        ModelParams<float> same = reattach_head(pre, 8, 555);
        CHECK(same.head.back().w.shape[0] == 8);
        CHECK(same.head[0].w.v != pre.head[0].w.v);
    }
    SUBCASE("reattach is deterministic per seed") {
        ModelParams<float> again = reattach_head(pre, 4, 555);
        CHECK(params_bytes(again) == params_bytes(swapped));
        ModelParams<float> other = reattach_head(pre, 4, 556);
        CHECK(params_bytes(other) != params_bytes(swapped));
    }
}

TEST_CASE("fine_tune freezes the extractor bit-exactly") {
    auto& fix = fixture();
    ModelParams<float> model = reattach_head(fix.outcome.model, 4, 99);
    auto frozen = extractor_bytes(model);

    TrainConfig cfg = fix.proto.task.finetune_cfg;
    cfg.seed = 1234;
    cfg.max_epochs = 6;
    TrainReport report = fine_tune(model, fix.target_split, cfg, NormMode::ZScore);
    CHECK(report.epochs_run >= 1);
    CHECK(extractor_bytes(model) == frozen);
    CHECK(model.input_norm.has_value());  // fitted on target train
    CHECK(model.arch.class_count == 4);
}

TEST_CASE("fine_tune validates its inputs") {
    auto& fix = fixture();
    TrainConfig cfg = fix.proto.task.finetune_cfg;

    SUBCASE("empty validation set") {
        ModelParams<float> model = reattach_head(fix.outcome.model, 4, 1);
        DatasetSplit broken = fix.target_split;
        broken.validation = SampleSet(broken.train.bands());
        CHECK_THROWS_AS(fine_tune(model, broken, cfg, NormMode::ZScore), DataError);
    }
    SUBCASE("band mismatch") {
        ModelParams<float> model = reattach_head(fix.outcome.model, 2, 1);
        auto narrow_task = synth::separable_two_class(32);
        SampleSet narrow = narrow_task.draw(30, 5);
        DatasetSplit split = split_be(narrow, 10, 5, 1);
        CHECK_THROWS_AS(fine_tune(model, split, cfg, NormMode::ZScore), DataError);
    }
    SUBCASE("head sized for the wrong class count") {
        ModelParams<float> model = reattach_head(fix.outcome.model, 7, 1);
        CHECK_THROWS_AS(fine_tune(model, fix.target_split, cfg, NormMode::ZScore), DataError);
    }
}

TEST_CASE("zero-epoch fine-tuning equals applying extractor + fresh head directly") {
    auto& fix = fixture();
    ModelParams<float> tuned = reattach_head(fix.outcome.model, 4, 42);
    TrainConfig cfg = fix.proto.task.finetune_cfg;
    cfg.max_epochs = 0;
    fine_tune(tuned, fix.target_split, cfg, NormMode::ZScore);

    ModelParams<float> direct = reattach_head(fix.outcome.model, 4, 42);
    direct.input_norm = fit_normalizer(fix.target_split.train, NormMode::ZScore);

    auto a = predict(tuned, fix.target_split.test);
    auto b = predict(direct, fix.target_split.test);
    CHECK(a == b);
}

TEST_CASE("run_variant_seed covers the three variants") {
    auto& fix = fixture();
    VariantTask task = fix.proto.task;
    task.target_be = {150, 20};
    // shrink budgets: these are contract checks, not the accuracy benchmark
    task.train_cfg.max_epochs = 4;
    task.finetune_cfg.max_epochs = 4;

    SUBCASE("Ex with source == target is rejected") {
        VariantTask bad = task;
        bad.variant = Variant::Ex;
        bad.source_id = bad.target_id;
        CHECK_THROWS_AS(run_variant_seed(bad, 0), ConfigError);
    }
    SUBCASE("records carry metrics from the held-out test set") {
        for (Variant v : {Variant::BE, Variant::B, Variant::Ex}) {
            VariantTask t = task;
            t.variant = v;
            ExperimentRecord rec = run_variant_seed(t, 1);
            CHECK(rec.feasible);
            CHECK(rec.oa >= 0.0);
            CHECK(rec.oa <= 1.0);
            CHECK(rec.kappa <= 1.0);
            CHECK(rec.blocks == 2);
            CHECK(rec.band_count == "64");
            if (v == Variant::Ex) {
                CHECK(rec.variant == "Ex(source)");
                CHECK(rec.finetune_s >= 0.0);
            }
        }
    }
    SUBCASE("records are deterministic per seed") {
        VariantTask t = task;
        t.variant = Variant::B;
        ExperimentRecord a = run_variant_seed(t, 7);
        ExperimentRecord b = run_variant_seed(t, 7);
        CHECK(a.oa == b.oa);
        CHECK(a.aa == b.aa);
        CHECK(a.kappa == b.kappa);
        ExperimentRecord c = run_variant_seed(t, 8);
        CHECK((a.oa != c.oa || a.kappa != c.kappa));
    }
    SUBCASE("B ignores the source entirely") {
        VariantTask t = task;
        t.variant = Variant::B;
        t.source = nullptr;  // would crash if the B path touched it
        t.source_id = "";
        ExperimentRecord rec = run_variant_seed(t, 2);
        CHECK(rec.feasible);
    }
    SUBCASE("the pretrain cache reproduces uncached results") {
        VariantTask t = task;
        t.variant = Variant::Ex;
        PretrainCache cache;
        ExperimentRecord a = run_variant_seed(t, 3, &cache);
        ExperimentRecord b = run_variant_seed(t, 3, &cache);  // cache hit
        ExperimentRecord c = run_variant_seed(t, 3, nullptr);
        CHECK(a.kappa == b.kappa);
        CHECK(a.kappa == c.kappa);
    }
}

TEST_CASE("variant labels parse and print") {
    std::string src;
    CHECK(variant_from_label("B(E)", &src) == Variant::BE);
    CHECK(variant_from_label("B", &src) == Variant::B);
    CHECK(variant_from_label("Ex", &src) == Variant::Ex);
    CHECK(src.empty());
    CHECK(variant_from_label("Ex(pavia)", &src) == Variant::Ex);
    CHECK(src == "pavia");
    CHECK_THROWS_AS(variant_from_label("bogus", &src), ConfigError);
    CHECK(variant_label(Variant::Ex, "x") == "Ex(x)");
    CHECK(variant_label(Variant::BE) == "B(E)");
}

TEST_CASE("fine-tuned transfer beats cold start on most seeds (reduced sweep)") {
    // the full 25-seed protocol with the Wilcoxon gate runs in the
    // acceptance suite; this is a 6-seed smoke of the same task
    auto proto = synth::transfer_protocol();
    proto.task.source = &proto.source;
    proto.task.target = &proto.target;
    int wins = 0;
    PretrainCache cache;
    for (uint64_t seed = 0; seed < 6; ++seed) {
        ExperimentRecord cold = run_variant_seed(proto.cold_task(), seed, &cache);
        ExperimentRecord ex = run_variant_seed(proto.ex_task(), seed, &cache);
        if (ex.kappa >= cold.kappa) ++wins;
    }
    CHECK(wins >= 4);
}
