#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "phmnet/checkpoint.hpp"

using namespace phm;
namespace fs = std::filesystem;

TEST_CASE("container round-trips tensors bit for bit") {
    std::mt19937_64 rng(81);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor a({3, 4});
    Tensor b({2, 2, 2, 2});
    Tensor c({7});
    for (Tensor* t : {&a, &b, &c})
        for (auto& v : t->data) v = dist(rng);
    c.data[0] = -0.0;  // signed zero must survive
    c.data[1] = 1e-300;

    const fs::path file = fs::temp_directory_path() / "phmnet-container-test.ckpt";
    save_container(file.string(), {{"a", &a}, {"layers/b", &b}, {"c", &c}});
    auto loaded = load_container(file.string());
    REQUIRE(loaded.size() == 3);
    CHECK(loaded.at("a").shape == a.shape);
    CHECK(loaded.at("a").data == a.data);
    CHECK(loaded.at("layers/b").shape == b.shape);
    CHECK(loaded.at("layers/b").data == b.data);
    CHECK(loaded.at("c").data == c.data);
    CHECK(std::signbit(loaded.at("c").data[0]));
    fs::remove(file);
}

TEST_CASE("corrupt container headers are rejected") {
    const fs::path file = fs::temp_directory_path() / "phmnet-container-bad.ckpt";
    {
        std::ofstream os(file, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS(load_container(file.string()), DataError);
    fs::remove(file);
    CHECK_THROWS_AS(load_container((fs::temp_directory_path() / "phmnet-missing.ckpt").string()),
                    DataError);
}
