#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "hsitl.h"
#include "support/synthetic.hpp"

// Exercises the shared-library surface: opaque handles, status codes and the
// thread-local error message.

TEST_CASE("cube handles round-trip through the C API") {
    float data[2 * 2 * 3];
    for (int i = 0; i < 12; ++i) data[i] = float(i);
    hsitl_cube* cube = nullptr;
    REQUIRE(hsitl_cube_create(2, 2, 3, data, &cube) == HSITL_OK);
    uint32_t h = 0, w = 0, b = 0;
    hsitl_cube_dims(cube, &h, &w, &b);
    CHECK(h == 2);
    CHECK(w == 2);
    CHECK(b == 3);
    CHECK(hsitl_cube_data(cube)[5] == 5.0f);

    std::string path = synth::tmp_path("capi.hsic");
    CHECK(hsitl_cube_save(cube, path.c_str()) == HSITL_OK);
    hsitl_cube* loaded = nullptr;
    REQUIRE(hsitl_cube_load(path.c_str(), &loaded) == HSITL_OK);
    CHECK(std::memcmp(hsitl_cube_data(loaded), data, sizeof(data)) == 0);

    hsitl_cube* reduced = nullptr;
    REQUIRE(hsitl_cube_reduce_window(loaded, 2, &reduced) == HSITL_OK);
    hsitl_cube_dims(reduced, &h, &w, &b);
    CHECK(b == 2);  // ceil(3/2)

    hsitl_cube* exact = nullptr;
    REQUIRE(hsitl_cube_reduce_to_count(loaded, 3, &exact) == HSITL_OK);
    hsitl_cube_dims(exact, &h, &w, &b);
    CHECK(b == 3);

    hsitl_cube_free(cube);
    hsitl_cube_free(loaded);
    hsitl_cube_free(reduced);
    hsitl_cube_free(exact);
    std::remove(path.c_str());
}

TEST_CASE("error paths return status codes and messages") {
    hsitl_cube* cube = nullptr;
    CHECK(hsitl_cube_load("/nonexistent/nope.hsic", &cube) == HSITL_ERR_DATA);
    CHECK(std::strlen(hsitl_last_error()) > 0);
    CHECK(hsitl_cube_load(nullptr, &cube) == HSITL_ERR_CONFIG);

    float one = 1.0f;
    hsitl_cube* tiny = nullptr;
    REQUIRE(hsitl_cube_create(1, 1, 1, &one, &tiny) == HSITL_OK);
    hsitl_cube* out = nullptr;
    CHECK(hsitl_cube_reduce_window(tiny, 0, &out) == HSITL_ERR_CONFIG);
    CHECK(hsitl_cube_reduce_to_count(tiny, 5, &out) == HSITL_ERR_CONFIG);
    hsitl_cube_free(tiny);

    uint64_t bits = 0;
    double secs = 0;
    CHECK(hsitl_downlink_budget(0, 1, 1, 1, 1.0, &bits, &secs) == HSITL_ERR_CONFIG);
}

TEST_CASE("downlink budget through the C API") {
    uint64_t bits = 0;
    double secs = 0;
    REQUIRE(hsitl_downlink_budget(2048, 2048, 200, 12, 3e6, &bits, &secs) == HSITL_OK);
    CHECK(bits == 10066329600ULL);
    CHECK(secs == doctest::Approx(3355.44).epsilon(1e-6));
}

TEST_CASE("labels and split surface") {
    auto task = synth::separable_two_class(8);
    auto [cube, labels] = synth::task_scene(task, 10, 10, 55);
    std::string cube_path = synth::tmp_path("capi_s.hsic");
    std::string labels_path = synth::tmp_path("capi_s.hsil");
    hsitl::save_cube(cube, cube_path);
    hsitl::save_labels(labels, labels_path);

    hsitl_labels* handle = nullptr;
    REQUIRE(hsitl_labels_load(labels_path.c_str(), &handle) == HSITL_OK);
    CHECK(hsitl_labels_class_count(handle) == 2);
    uint32_t h = 0, w = 0;
    hsitl_labels_dims(handle, &h, &w);
    CHECK(h == 10);
    CHECK(w == 10);
    hsitl_labels_free(handle);

    std::string out_csv = synth::tmp_path("split.csv");
    REQUIRE(hsitl_split_to_csv(cube_path.c_str(), labels_path.c_str(), "b", 10, 5, nullptr, 3,
                               out_csv.c_str()) == HSITL_OK);
    std::ifstream in(out_csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "set,y,x,class");
    size_t rows = 0, train_rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        if (line.rfind("train,", 0) == 0) ++train_rows;
    }
    CHECK(rows == 100);         // every labeled pixel lands in exactly one set
    CHECK(train_rows == 20);    // 10 per class

    CHECK(hsitl_split_to_csv(cube_path.c_str(), labels_path.c_str(), "nope", 1, 1, nullptr, 0,
                             out_csv.c_str()) == HSITL_ERR_CONFIG);
    std::remove(cube_path.c_str());
    std::remove(labels_path.c_str());
    std::remove(out_csv.c_str());
}

TEST_CASE("grad check through the C API") {
    double err = 1.0;
    REQUIRE(hsitl_grad_check("cnn1d", 1, 16, 3, 4, 42, &err) == HSITL_OK);
    CHECK(err < 1e-4);
    CHECK(hsitl_grad_check("bogus", 1, 16, 3, 4, 42, &err) == HSITL_ERR_CONFIG);
    // infeasible shape: 3 blocks cannot digest 25 bands
    CHECK(hsitl_grad_check("cnn1d", 3, 25, 3, 4, 42, &err) == HSITL_ERR_CONFIG);
}

TEST_CASE("wilcoxon through the C API") {
    std::string a = synth::tmp_path("wa.csv");
    std::string b = synth::tmp_path("wb.csv");
    std::ofstream(a) << "kappa\n1.0\n2.0\n3.0\n4.0\n5.0\n";
    std::ofstream(b) << "kappa\n0.5\n0.8\n1.5\n2.0\n2.5\n";
    double w = -1.0, p = -1.0;
    uint64_t n = 0;
    int exact = -1;
    REQUIRE(hsitl_wilcoxon_csv(a.c_str(), b.c_str(), "kappa", &w, &n, &p, &exact) == HSITL_OK);
    CHECK(n == 5);
    CHECK(w == 0.0);
    CHECK(p == doctest::Approx(0.0625));
    CHECK(exact == 1);
    CHECK(hsitl_wilcoxon_csv(a.c_str(), b.c_str(), "missing", &w, &n, &p, &exact) ==
          HSITL_ERR_DATA);
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("model pipeline: pretrain, info, predict, finetune via config files") {
    // tiny scenes so this stays fast
    auto task = synth::separable_two_class(16);
    auto [cube_a, labels_a] = synth::task_scene(task, 14, 14, 7);
    auto [cube_b, labels_b] = synth::task_scene(task, 14, 14, 8);
    std::string ca = synth::tmp_path("pre_a.hsic"), la = synth::tmp_path("pre_a.hsil");
    std::string cb = synth::tmp_path("pre_b.hsic"), lb = synth::tmp_path("pre_b.hsil");
    hsitl::save_cube(cube_a, ca);
    hsitl::save_labels(labels_a, la);
    hsitl::save_cube(cube_b, cb);
    hsitl::save_labels(labels_b, lb);

    std::string plan = synth::tmp_path("plan.json");
    std::ofstream(plan) << R"({
  "source": {"id": "a", "cube": ")" << ca << R"(", "labels": ")" << la << R"("},
  "split_be": {"train_per_class": 40, "val_per_class": 10},
  "reduction": 8,
  "arch": {"family": "cnn1d", "blocks": 1, "kernels": 4, "fc": [8, 6]},
  "train": {"learning_rate": 1e-3, "batch_size": 16, "patience": 5, "max_epochs": 8},
  "seed": 1
})";
    std::string model_path = synth::tmp_path("model.hsim");
    REQUIRE(hsitl_pretrain(plan.c_str(), model_path.c_str()) == HSITL_OK);

    hsitl_model* model = nullptr;
    REQUIRE(hsitl_model_load(model_path.c_str(), &model) == HSITL_OK);
    uint32_t bands = 0, classes = 0, blocks = 0;
    hsitl_model_info(model, &bands, &classes, &blocks);
    CHECK(bands == 8);
    CHECK(classes == 2);
    CHECK(blocks == 1);

    // predict on raw spectra (the model carries its normalizer)
    std::vector<float> spectra(4 * 8, 0.5f);
    std::vector<int32_t> out(4, -1);
    REQUIRE(hsitl_model_predict(model, spectra.data(), 4, 8, out.data()) == HSITL_OK);
    for (int32_t cls : out) CHECK((cls == 0 || cls == 1));
    CHECK(hsitl_model_predict(model, spectra.data(), 4, 16, out.data()) == HSITL_ERR_DATA);
    hsitl_model_free(model);

    std::string ft = synth::tmp_path("ft.json");
    std::ofstream(ft) << R"({
  "target": {"id": "b", "cube": ")" << cb << R"(", "labels": ")" << lb << R"("},
  "split_b": {"train_per_class": 12, "val_per_class": 6},
  "reduction": 8,
  "train": {"learning_rate": 1e-3, "batch_size": 16, "patience": 5, "max_epochs": 8},
  "seed": 2
})";
    std::string tuned_path = synth::tmp_path("tuned.hsim");
    REQUIRE(hsitl_finetune(ft.c_str(), model_path.c_str(), tuned_path.c_str()) == HSITL_OK);
    hsitl_model* tuned = nullptr;
    REQUIRE(hsitl_model_load(tuned_path.c_str(), &tuned) == HSITL_OK);
    hsitl_model_info(tuned, &bands, &classes, &blocks);
    CHECK(classes == 2);
    hsitl_model_free(tuned);

    for (const auto& p : {ca, la, cb, lb, plan, model_path, ft, tuned_path})
        std::remove(p.c_str());
}

TEST_CASE("run-grid and report via the C API") {
    auto task = synth::separable_two_class(16);
    auto [cube_a, labels_a] = synth::task_scene(task, 12, 12, 31);
    std::string ca = synth::tmp_path("gr_a.hsic"), la = synth::tmp_path("gr_a.hsil");
    hsitl::save_cube(cube_a, ca);
    hsitl::save_labels(labels_a, la);
    std::string grid = synth::tmp_path("grid.json");
    std::string out_csv = synth::tmp_path("results.csv");
    std::ofstream(grid) << R"({
  "datasets": [{"id": "a", "cube": ")" << ca << R"(", "labels": ")" << la << R"("}],
  "split_b": {"train_per_class": 10, "val_per_class": 4},
  "architectures": [{"family": "cnn1d", "blocks": 1, "kernels": 4, "fc": [8, 6]}],
  "reductions": [8],
  "variants": ["B"],
  "seeds": {"first": 0, "count": 2},
  "train": {"learning_rate": 1e-3, "batch_size": 16, "patience": 4, "max_epochs": 5},
  "output": ")" << out_csv << R"("
})";
    REQUIRE(hsitl_run_grid(grid.c_str(), nullptr) == HSITL_OK);

    char* text = nullptr;
    REQUIRE(hsitl_report(out_csv.c_str(), "per-seed", &text) == HSITL_OK);
    REQUIRE(text != nullptr);
    CHECK(std::string(text).find("Mean metrics") != std::string::npos);
    hsitl_string_free(text);

    CHECK(hsitl_report(out_csv.c_str(), "sideways", &text) == HSITL_ERR_CONFIG);
    CHECK(hsitl_run_grid("/nonexistent/grid.json", nullptr) == HSITL_ERR_CONFIG);

    std::remove(ca.c_str());
    std::remove(la.c_str());
    std::remove(grid.c_str());
    std::remove(out_csv.c_str());
}
