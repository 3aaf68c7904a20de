#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spikelab/dataset.hpp"
#include "spikelab/error.hpp"
#include "spikelab/train.hpp"
#include "test_helpers.hpp"

using namespace spikelab;

namespace {

GaussianBlobSpec two_blob_spec(double variance, std::size_t per_class, std::uint64_t seed) {
    Tensor means({2, 2}, {1.0, 0.0, -1.0, 0.0});  // +-e1
    return {2, means, variance, per_class, seed};
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("gaussian blobs: determinism, size, moments") {
    GaussianBlobSpec spec = two_blob_spec(0.04, 400, 11);
    LabeledDataset a = make_gaussian_blobs(spec);
    LabeledDataset b = make_gaussian_blobs(spec);
    CHECK(a.size() == 800);
    CHECK(bitwise_equal(a.images, b.images));
    CHECK(a.labels == b.labels);

    double mean0 = 0.0;
    for (std::size_t i = 0; i < 400; ++i) mean0 += a.images.data[i * 2] / 400.0;
    CHECK(mean0 == doctest::Approx(1.0).epsilon(0.05));

    LabeledDataset tiny = make_gaussian_blobs(two_blob_spec(1.0, 1, 3));
    CHECK(tiny.size() == 2);  // 1 sample per class -> k samples

    GaussianBlobSpec bad = two_blob_spec(0.0, 10, 1);
    CHECK_THROWS_AS(make_gaussian_blobs(bad), ArgumentError);
    Tensor dup({2, 2}, {1.0, 0.0, 1.0, 0.0});
    GaussianBlobSpec dup_spec{2, dup, 1.0, 10, 1};
    CHECK_THROWS_AS(make_gaussian_blobs(dup_spec), ArgumentError);
}

TEST_CASE("gaussian blobs: linearly separable task trains to >= 0.99") {
    LabeledDataset full = make_gaussian_blobs(two_blob_spec(0.01, 1000, 21));
    auto parts = split_dataset(full, {0.8, 0.1, 0.1}, 5);
    Classifier model = build_mlp(2, {}, 8, 2, 3);
    TrainConfig tc;
    tc.epochs = 5;
    tc.lr = 0.05;
    tc.seed = 4;
    train(model, parts[0], parts[1], tc);
    CHECK(accuracy(model, parts[2]) >= 0.99);
}

TEST_CASE("shape images: determinism, pixel range, float32-exact values") {
    LabeledDataset a = make_shape_images(3, 20, 3, 16, 16, 9);
    LabeledDataset b = make_shape_images(3, 20, 3, 16, 16, 9);
    CHECK(a.size() == 60);
    CHECK(bitwise_equal(a.images, b.images));
    for (double v : a.images.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == static_cast<double>(static_cast<float>(v)));  // survives SBL1 storage
    }
    CHECK_THROWS_AS(make_shape_images(3, 0, 3, 16, 16, 1), ArgumentError);
    CHECK_THROWS_AS(make_shape_images(3, 5, 3, 8, 16, 1), ArgumentError);
    CHECK_THROWS_AS(make_shape_images(9, 5, 3, 16, 16, 1), ArgumentError);
}

TEST_CASE("shape images: small CNN learns the classes quickly") {
    LabeledDataset full = make_shape_images(3, 150, 3, 16, 16, 33);
    auto parts = split_dataset(full, {0.7, 0.15, 0.15}, 8);
    Classifier model = build_small_cnn(3, 16, 16, 32, 3, 17);
    TrainConfig tc;
    tc.epochs = 5;
    tc.lr = 5e-3;
    tc.batch_size = 16;
    tc.seed = 18;
    train(model, parts[0], parts[1], tc);
    CHECK(accuracy(model, parts[2]) >= 0.9);
}

TEST_CASE("SBL1 container: lossless round trip") {
    LabeledDataset ds = make_shape_images(4, 6, 3, 16, 16, 44);
    std::string path = tmp_path("spikelab_ds.sbl");
    save_binary_dataset(ds, path);
    LabeledDataset back = load_binary_dataset(path);
    CHECK(bitwise_equal(ds.images, back.images));
    CHECK(ds.labels == back.labels);
    CHECK(ds.class_count == back.class_count);
    std::remove(path.c_str());
}

TEST_CASE("SBL1 container: corruption errors carry byte offsets") {
    LabeledDataset ds = make_shape_images(2, 3, 1, 16, 16, 7);
    std::string path = tmp_path("spikelab_bad.sbl");
    save_binary_dataset(ds, path);

    {  // bad magic
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_binary_dataset(path), FormatError);

    save_binary_dataset(ds, path);
    {  // label value >= class count, at a known offset
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        std::size_t label_at = 4 + 20 + ds.images.size() * 4;
        f.seekp(static_cast<std::streamoff>(label_at));
        std::uint16_t bad = 7;
        f.write(reinterpret_cast<const char*>(&bad), 2);
    }
    try {
        load_binary_dataset(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 4 + 20 + ds.images.size() * 4);
    }

    save_binary_dataset(ds, path);
    std::filesystem::resize_file(path, 30);  // truncate inside pixel data
    CHECK_THROWS_AS(load_binary_dataset(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("stratified split: sizes, union, proportions") {
    LabeledDataset ds = make_gaussian_blobs(two_blob_spec(1.0, 500, 77));
    auto parts = split_dataset(ds, {0.8, 0.1, 0.1}, 13);
    CHECK(parts[0].size() == 800);
    CHECK(parts[1].size() == 100);
    CHECK(parts[2].size() == 100);
    CHECK(parts[0].split == "train");

    // union of splits preserves the multiset of rows
    double sum_all = sum(ds.images);
    double sum_parts = sum(parts[0].images) + sum(parts[1].images) + sum(parts[2].images);
    CHECK(sum_parts == doctest::Approx(sum_all).epsilon(1e-12));
    CHECK(parts[0].size() + parts[1].size() + parts[2].size() == ds.size());

    // per-class proportions within one sample
    for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(static_cast<double>(parts[0].indices_of_class(c).size()) - 400.0) <= 1.0);
        CHECK(std::abs(static_cast<double>(parts[1].indices_of_class(c).size()) - 50.0) <= 1.0);
    }

    auto again = split_dataset(ds, {0.8, 0.1, 0.1}, 13);
    CHECK(bitwise_equal(parts[0].images, again[0].images));

    CHECK_THROWS_AS(split_dataset(ds, {0.8, 0.2, 0.0}, 1), ArgumentError);
    CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}, 1), ArgumentError);
}
