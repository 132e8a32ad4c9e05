#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "phmnet/data.hpp"

using namespace phm;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("phmnet-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_cifar10_file(const fs::path& file, std::size_t records, unsigned seed) {
    std::ofstream os(file, std::ios::binary);
    std::mt19937 rng(seed);
    for (std::size_t r = 0; r < records; ++r) {
        unsigned char label = static_cast<unsigned char>(r % 10);
        os.put(static_cast<char>(label));
        for (std::size_t i = 0; i < 3072; ++i)
            os.put(static_cast<char>(rng() & 0xff));
    }
}
}  // namespace

TEST_CASE("cifar-10 record arithmetic: a full batch file is 30,730,000 bytes") {
    CHECK(std::size_t{10000} * (1 + 3072) == std::size_t{30730000});
}

TEST_CASE("cifar-10 file parsing: labels, scaling and channel layout") {
    TempDir dir;
    const fs::path file = dir.path / "batch.bin";
    {
        std::ofstream os(file, std::ios::binary);
        os.put(7);  // label
        for (int i = 0; i < 3072; ++i) os.put(static_cast<char>(i % 251));
        os.put(2);
        for (int i = 0; i < 3072; ++i) os.put(static_cast<char>(255));
    }
    DatasetSplit split;
    detail::load_cifar_file(file, CifarVariant::c10, split);
    REQUIRE(split.size() == 2);
    CHECK(split.labels == std::vector<int>{7, 2});
    CHECK(split.images[0].shape == Shape{3, 32, 32});
    CHECK(split.images[0].data[0] == doctest::Approx(0.0));
    CHECK(split.images[0].data[5] == doctest::Approx(5.0 / 255.0));
    CHECK(split.images[1].data[3071] == doctest::Approx(1.0));
}

TEST_CASE("cifar-100 records use the fine label in byte 2") {
    TempDir dir;
    const fs::path file = dir.path / "train.bin";
    {
        std::ofstream os(file, std::ios::binary);
        os.put(3);   // coarse
        os.put(42);  // fine
        for (int i = 0; i < 3072; ++i) os.put(0);
    }
    DatasetSplit split;
    detail::load_cifar_file(file, CifarVariant::c100, split);
    REQUIRE(split.size() == 1);
    CHECK(split.labels[0] == 42);
}

TEST_CASE("truncated cifar files are rejected with the size arithmetic") {
    TempDir dir;
    const fs::path file = dir.path / "data_batch_1.bin";
    write_cifar10_file(file, 3, 1);
    // chop one byte off the last record
    fs::resize_file(file, fs::file_size(file) - 1);
    DatasetSplit split;
    try {
        detail::load_cifar_file(file, CifarVariant::c10, split);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("corrupt") != std::string::npos);
        CHECK(msg.find("3073") != std::string::npos);
    }
}

TEST_CASE("cifar loader enforces the 50000/10000 split sizes") {
    TempDir dir;
    for (int i = 1; i <= 5; ++i)
        write_cifar10_file(dir.path / ("data_batch_" + std::to_string(i) + ".bin"), 10,
                           static_cast<unsigned>(i));
    write_cifar10_file(dir.path / "test_batch.bin", 10, 99);
    CHECK_THROWS_AS(load_cifar(dir.path.string(), CifarVariant::c10), DataError);
}

TEST_CASE("missing cifar directory is a data error") {
    CHECK_THROWS_AS(load_cifar("/nonexistent/cifar", CifarVariant::c10), DataError);
}

TEST_CASE("synthetic dataset: determinism, separability and label balance") {
    auto [train1, val1] = make_synthetic(10, 20, 32, 5);
    auto [train2, val2] = make_synthetic(10, 20, 32, 5);
    REQUIRE(train1.size() == 200);
    REQUIRE(val1.size() == 100);
    CHECK(train1.labels == train2.labels);
    for (std::size_t i = 0; i < train1.size(); ++i)
        CHECK(train1.images[i].data == train2.images[i].data);

    std::vector<int> counts(10, 0);
    for (int l : train1.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) CHECK(c == 20);

    CHECK(nearest_centroid_accuracy(train1, train1) > 0.6);

    auto [train3, val3] = make_synthetic(10, 20, 32, 6);
    bool differs = false;
    for (std::size_t i = 0; i < train1.size() && !differs; ++i)
        differs = train1.images[i].data != train3.images[i].data;
    CHECK(differs);
}

TEST_CASE("horizontal flip is an involution") {
    std::mt19937_64 rng(61);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor img({3, 8, 8});
    for (auto& v : img.data) v = dist(rng);
    CHECK(hflip(hflip(img)).data == img.data);
}

TEST_CASE("standardization yields zero mean, unit variance per channel") {
    auto [train, val] = make_synthetic(4, 25, 16, 7);
    const ChannelStats stats = compute_channel_stats(train);
    for (auto& img : train.images) standardize(img, stats);
    const ChannelStats after = compute_channel_stats(train);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::fabs(after.mean[c]) < 1e-6);
        CHECK(std::fabs(after.stddev[c] - 1.0) < 1e-3);
    }
}

TEST_CASE("augmentation keeps shape and stays in the padded support") {
    auto [train, val] = make_synthetic(3, 5, 16, 8);
    const ChannelStats stats = compute_channel_stats(train);
    Rng rng(62);
    const Tensor out = augment(train.images[0], rng, stats);
    CHECK(out.shape == train.images[0].shape);
}

TEST_CASE("dataset serialization round-trips bit-identically") {
    TempDir dir;
    auto [train, val] = make_synthetic(5, 8, 12, 9);
    const std::string file = (dir.path / "train.ds").string();
    save_dataset(file, train);
    const DatasetSplit loaded = load_dataset(file, "train");
    CHECK(loaded.classes == train.classes);
    CHECK(loaded.image_size == train.image_size);
    CHECK(loaded.labels == train.labels);
    REQUIRE(loaded.size() == train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
        CHECK(loaded.images[i].data == train.images[i].data);
}
