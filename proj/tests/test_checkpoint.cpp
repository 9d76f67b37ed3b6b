#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "hsitl/checkpoint.hpp"
#include "hsitl/errors.hpp"
#include "support/synthetic.hpp"

using namespace hsitl;

namespace {

ModelParams<float> sample_model() {
    ArchitectureConfig arch = ArchitectureConfig::cnn1d(2, 5, 6);
    arch.fc_sizes = {10, 7};
    ModelParams<float> params = init_params<float>(arch, 32, 77);
    // non-default running stats and normalizer to exercise those sections
    params.blocks[0].run_mean.v[2] = 0.25f;
    params.blocks[1].run_var.v[3] = 2.5f;
    Normalizer norm;
    norm.mode = NormMode::ZScore;
    norm.shift.assign(32, 0.125);
    norm.scale.assign(32, 3.0);
    params.input_norm = norm;
    return params;
}

}  // namespace

TEST_CASE("checkpoint round-trips parameters, running stats and normalizer") {
    ModelParams<float> params = sample_model();
    std::string path = synth::tmp_path("model.hsim");
    save_model(params, path);
    LoadedModel loaded = load_model(path);

    CHECK(params_bytes(loaded.params) == params_bytes(params));
    CHECK(loaded.params.input_bands == 32);
    CHECK(loaded.params.arch.class_count == 5);
    CHECK(loaded.params.arch.fc_sizes == std::vector<uint32_t>{10, 7});
    REQUIRE(loaded.params.input_norm.has_value());
    CHECK(loaded.params.input_norm->shift[0] == doctest::Approx(0.125));
    CHECK(loaded.params.input_norm->scale[0] == doctest::Approx(3.0));
    CHECK_FALSE(loaded.optimizer.has_value());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint round-trips optimizer state when asked") {
    ModelParams<float> params = sample_model();
    auto refs = trainable_tensors(params);
    AdamState<float> state = AdamState<float>::init_like(refs);
    state.t = 17;
    state.m[0].v[0] = 0.5f;
    state.v[3].v[1] = 0.25f;

    std::string path = synth::tmp_path("model_opt.hsim");
    save_model(params, path, &state);
    LoadedModel loaded = load_model(path);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->t == 17);
    CHECK(loaded.optimizer->m[0].v[0] == 0.5f);
    CHECK(loaded.optimizer->v[3].v[1] == 0.25f);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corruption") {
    ModelParams<float> params = sample_model();
    std::string path = synth::tmp_path("corrupt.hsim");

    SUBCASE("bad magic") {
        std::ofstream out(path, std::ios::binary);
        out << "NOPEnope";
        out.close();
        CHECK_THROWS_AS(load_model(path), DataError);
    }
    SUBCASE("truncated tensor payload") {
        save_model(params, path);
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), std::streamsize(all.size() / 2));
        out.close();
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("truncated"), DataError);
    }
    std::remove(path.c_str());
}

TEST_CASE("extractor_bytes covers exactly the frozen tensors") {
    ModelParams<float> params = sample_model();
    auto base = extractor_bytes(params);

    // head edits leave the extractor bytes alone
    ModelParams<float> head_edit = params;
    head_edit.head[0].w.v[0] += 1.0f;
    CHECK(extractor_bytes(head_edit) == base);

    // conv weight, BN affine and running-stat edits all show up
    ModelParams<float> conv_edit = params;
    conv_edit.blocks[0].w.v[0] += 1.0f;
    CHECK(extractor_bytes(conv_edit) != base);
    ModelParams<float> bn_edit = params;
    bn_edit.blocks[1].run_mean.v[0] += 1.0f;
    CHECK(extractor_bytes(bn_edit) != base);
}
