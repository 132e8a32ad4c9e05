#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "phmnet/model.hpp"

using namespace phm;

namespace {
Tensor random_input(std::size_t n, std::size_t size, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t({n, 3, size, size});
    for (auto& v : t.data) v = dist(rng);
    return t;
}
}  // namespace

TEST_CASE("preset table: widths, multipliers and block kinds") {
    const ArchitectureSpec q50 = preset_architecture("qphm50");
    CHECK(q50.algebra == Algebra::quaternion);
    CHECK(q50.block == BlockKind::bottleneck);
    CHECK(q50.widths == std::array<std::size_t, 4>{112, 224, 448, 896});
    CHECK(q50.multipliers == std::vector<int>{3, 4, 6, 3});
    CHECK(q50.backend == BackendKind::phm);

    const ArchitectureSpec v18 = preset_architecture("vphm18");
    CHECK(v18.algebra == Algebra::vectormap);
    CHECK(v18.vect_dim == 3);
    CHECK(v18.widths == std::array<std::size_t, 4>{90, 180, 360, 720});
    CHECK(v18.multipliers == std::vector<int>{2, 2, 2, 2});

    const ArchitectureSpec r34 = preset_architecture("resnet34");
    CHECK(r34.block == BlockKind::basic);
    CHECK(r34.multipliers == std::vector<int>{3, 4, 6, 3});
    CHECK(r34.backend == BackendKind::dense);

    CHECK(preset_architecture("quat26").multipliers == std::vector<int>{1, 2, 4, 1});
    CHECK(preset_architecture("rphm35").multipliers == std::vector<int>{2, 3, 4, 2});
    CHECK_THROWS_AS(preset_architecture("hexnet18"), ConfigError);
    CHECK_THROWS_AS(preset_architecture("resnet19"), ConfigError);
}

TEST_CASE("registry is stable across all families and depths") {
    for (const char* fam : {"resnet", "rphm", "quat", "qphm", "vect", "vphm"})
        for (int depth : {18, 26, 34, 35, 50}) {
            const std::string arch = std::string(fam) + std::to_string(depth);
            const ArchitectureSpec a = preset_architecture(arch);
            const ArchitectureSpec b = preset_architecture(arch);
            CHECK(a.name == arch);
            CHECK(a.widths == b.widths);
            CHECK(a.multipliers == b.multipliers);
            CHECK(a.block == b.block);
        }
}

TEST_CASE("phm backend dimension auto-selection") {
    {
        ArchitectureSpec s = preset_architecture("qphm50");
        s.classes = 100;
        const Model m = build_model(s);
        CHECK(m.feature_dim == 3584);
        CHECK(m.backend_n == 4);  // 5 does not divide 3584
    }
    {
        ArchitectureSpec s = preset_architecture("vphm50");
        s.classes = 100;
        const Model m = build_model(s);
        CHECK(m.feature_dim == 2880);
        CHECK(m.backend_n == 5);
    }
    {
        ArchitectureSpec s = preset_architecture("qphm18");
        s.classes = 10;
        const Model m = build_model(s);
        CHECK(m.feature_dim == 896);
        CHECK(m.backend_n == 2);  // 10 rules out 4, 896 rules out 5
    }
}

TEST_CASE("29 classes cannot back a PHM model; 28 and 30 can") {
    for (const char* arch : {"rphm18", "qphm18", "vphm18", "vphm50"}) {
        ArchitectureSpec s = preset_architecture(arch);
        s.classes = 29;
        CHECK_THROWS_AS(build_model(s), DivisibilityError);
    }
    for (std::size_t classes : {std::size_t{28}, std::size_t{30}}) {
        ArchitectureSpec s = preset_architecture("vphm18");
        s.classes = classes;
        const Model m = build_model(s);
        CHECK(m.backend_n > 1);
    }
}

TEST_CASE("a residual block with a zeroed body passes the activation through") {
    ResidualBlock block("blk", BlockKind::basic, Algebra::real, 1, 8, 8, 1);
    Rng rng(51);
    block.init(rng);
    REQUIRE(!block.shortcut.has_value());
    // zero the second conv so the body contributes only a zero-input BN
    for (auto& kp : block.body[1].conv->kernels) kp.value.fill(0.0);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor x({2, 8, 4, 4});
    for (auto& v : x.data) v = dist(rng);
    Tape t;
    const Tensor& y = t.value(block.forward(t, t.constant(x), true));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(std::max(x.data[i], 0.0)).epsilon(1e-12));
}

TEST_CASE("backend swap leaves the frontend init bit-identical") {
    ArchitectureSpec dense = preset_architecture("quat18");
    ArchitectureSpec phm = preset_architecture("qphm18");
    dense.classes = phm.classes = 100;
    Model a = build_model(dense, 7);
    Model b = build_model(phm, 7);
    CHECK(a.stem.conv->kernels[0].value.data == b.stem.conv->kernels[0].value.data);
    REQUIRE(a.blocks.size() == b.blocks.size());
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        std::vector<Parameter*> pa, pb;
        a.blocks[i]->collect_params(pa);
        b.blocks[i]->collect_params(pb);
        REQUIRE(pa.size() == pb.size());
        for (std::size_t j = 0; j < pa.size(); ++j)
            CHECK(pa[j]->value.data == pb[j]->value.data);
    }
}

TEST_CASE("forward produces finite deterministic logits of the right shape") {
    ArchitectureSpec s = preset_architecture("vphm18");
    s.classes = 10;
    s.widths = {6, 12, 24, 30};  // desk-scale copy of the stage plan
    Model m = build_model(s, 3);
    Rng rng(52);
    const Tensor x = random_input(2, 32, rng);
    auto run = [&]() {
        Tape t;
        return t.value(m.forward(t, t.constant(x), true));
    };
    const Tensor y1 = run();
    CHECK(y1.shape == Shape{2, 10});
    for (double v : y1.data) CHECK(std::isfinite(v));
    CHECK(run().data == run().data);
}

TEST_CASE("model rejects wrongly shaped input") {
    ArchitectureSpec s = preset_architecture("resnet18");
    s.classes = 10;
    s.widths = {8, 8, 8, 8};
    Model m = build_model(s);
    Tape t;
    Tensor bad({2, 3, 16, 16});
    CHECK_THROWS_AS(m.forward(t, t.constant(bad), true), ShapeError);
}
