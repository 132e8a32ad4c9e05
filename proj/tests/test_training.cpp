#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "phmnet/train.hpp"

using namespace phm;
namespace fs = std::filesystem;

TEST_CASE("learning-rate schedule hits the published anchors") {
    TrainConfig cfg;  // lr 0.1, warmup 10, cosine, 120 epochs
    CHECK(lr_at(1, cfg) == doctest::Approx(0.01));
    CHECK(lr_at(10, cfg) == doctest::Approx(0.1));
    // cosine midpoint: halfway through the 110 post-warmup epochs
    CHECK(lr_at(65, cfg) == doctest::Approx(0.05));
    CHECK(lr_at(120, cfg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("schedule is continuous at the warmup boundary") {
    TrainConfig cfg;
    const double step = cfg.lr * 0.5 *
                        (1.0 - std::cos(3.14159265358979323846 / 110.0));
    CHECK(std::fabs(lr_at(11, cfg) - lr_at(10, cfg)) <= step + 1e-12);
}

TEST_CASE("linear schedule decays to zero") {
    TrainConfig cfg;
    cfg.schedule = "linear";
    CHECK(lr_at(65, cfg) == doctest::Approx(0.1 * (1.0 - 55.0 / 110.0)));
    CHECK(lr_at(120, cfg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("schedule rejects bad configurations") {
    TrainConfig cfg;
    cfg.schedule = "step";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.schedule = "cosine";
    cfg.warmup_epochs = 120;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.warmup_epochs = 10;
    CHECK_THROWS_AS(lr_at(0, cfg), ConfigError);
    CHECK_THROWS_AS(lr_at(121, cfg), ConfigError);
}

TEST_CASE("nesterov step matches the hand-computed value") {
    // theta = 1, g = 1, lr = 0.1, mu = 0.9, no decay:
    // v = 1, theta' = 1 - 0.1 * (1 + 0.9) = 0.81
    Parameter p("p", Tensor({1}, {1.0}), /*decay=*/false);
    p.grad.data[0] = 1.0;
    TrainConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    SgdState state;
    sgd_nesterov_step({&p}, state, 0.1, cfg);
    CHECK(p.value.data[0] == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(state.velocity[0].data[0] == doctest::Approx(1.0));
}

TEST_CASE("weight decay only applies to flagged parameters") {
    Parameter decayed("w", Tensor({1}, {2.0}), true);
    Parameter plain("gamma", Tensor({1}, {2.0}), false);
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.1;
    SgdState state;
    sgd_nesterov_step({&decayed, &plain}, state, 1.0, cfg);
    CHECK(decayed.value.data[0] == doctest::Approx(2.0 - 0.1 * 2.0));
    CHECK(plain.value.data[0] == doctest::Approx(2.0));
}

TEST_CASE("model decay audit: batch-norm and L parameters are excluded") {
    ArchitectureSpec s = preset_architecture("vphm18");
    s.classes = 10;
    s.widths = {6, 12, 24, 30};
    Model m = build_model(s);
    std::size_t excluded = 0;
    for (auto* p : m.parameters()) {
        const bool is_bn = p->name.find(".gamma") != std::string::npos ||
                           p->name.find(".beta") != std::string::npos;
        const bool is_l = p->name.size() >= 2 && p->name.rfind(".L") == p->name.size() - 2;
        CHECK(p->apply_decay == !(is_bn || is_l));
        if (!p->apply_decay) ++excluded;
    }
    CHECK(excluded > 0);
}

TEST_CASE("lr = 0 leaves all parameters untouched") {
    Parameter p("p", Tensor({3}, {1.0, -2.0, 3.0}));
    p.grad.data = {5.0, 5.0, 5.0};
    TrainConfig cfg;
    SgdState state;
    sgd_nesterov_step({&p}, state, 0.0, cfg);
    CHECK(p.value.data == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("non-finite gradients are flagged with the parameter name") {
    Parameter p("stage1.block0.conv1.k0", Tensor({1}, {1.0}));
    p.grad.data[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    SgdState state;
    try {
        sgd_nesterov_step({&p}, state, 0.1, cfg);
        FAIL("expected NumericsError");
    } catch (const NumericsError& e) {
        CHECK(std::string(e.what()).find("stage1.block0.conv1.k0") != std::string::npos);
    }
}

TEST_CASE("sgd minimizes a quadratic bowl") {
    Parameter p("p", Tensor({2}, {3.0, -4.0}));
    TrainConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    SgdState state;
    for (int step = 0; step < 200; ++step) {
        p.zero_grad();
        Tape t;
        t.backward(t.sum_squares(t.param(p)));
        sgd_nesterov_step({&p}, state, 0.05, cfg);
    }
    CHECK(std::fabs(p.value.data[0]) < 1e-4);
    CHECK(std::fabs(p.value.data[1]) < 1e-4);
}

TEST_CASE("short training runs are reproducible byte for byte") {
    auto [train_split, val_split] = make_synthetic(4, 6, 12, 11);
    ArchitectureSpec s = preset_architecture("qphm18");
    s.classes = 4;
    s.input_size = 12;
    s.widths = {4, 4, 8, 8};
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.warmup_epochs = 1;
    cfg.lr = 0.01;
    cfg.augment = false;
    cfg.seed = 13;

    const fs::path base = fs::temp_directory_path() / "phmnet-train-test";
    fs::remove_all(base);
    auto run = [&](const std::string& tag) {
        Model m = build_model(s, 21);
        train(m, train_split, val_split, cfg, (base / tag).string());
        std::ifstream is(base / tag / "metrics.jsonl");
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    const std::string m1 = run("a");
    const std::string m2 = run("b");
    CHECK(!m1.empty());
    CHECK(m1 == m2);
    std::size_t lines = 0;
    for (char c : m1)
        if (c == '\n') ++lines;
    CHECK(lines == 2);
    CHECK(fs::exists(base / "a" / "best.ckpt"));
    CHECK(fs::exists(base / "a" / "last.ckpt"));
    CHECK(fs::exists(base / "a" / "timing.jsonl"));
    fs::remove_all(base);
}

TEST_CASE("checkpoint save and load restore the exact model state") {
    ArchitectureSpec s = preset_architecture("qphm18");
    s.classes = 4;
    s.input_size = 12;
    s.widths = {4, 4, 8, 8};
    Model m = build_model(s, 33);
    {
        // touch the batch-norm running stats
        Rng rng(34);
        std::normal_distribution<double> dist(0.0, 1.0);
        Tensor x({2, 3, 12, 12});
        for (auto& v : x.data) v = dist(rng);
        Tape t;
        m.forward(t, t.constant(x), true);
    }
    const fs::path file = fs::temp_directory_path() / "phmnet-ckpt-test.ckpt";
    save_model_checkpoint(file.string(), m);

    Model fresh = build_model(s, 99);
    load_model_checkpoint(file.string(), fresh);
    auto pa = m.parameters();
    auto pb = fresh.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
    std::vector<BatchNormLayer*> ba, bb;
    m.collect_bn(ba);
    fresh.collect_bn(bb);
    for (std::size_t i = 0; i < ba.size(); ++i) {
        CHECK(bb[i]->state.initialized);
        CHECK(ba[i]->state.running_mean.data == bb[i]->state.running_mean.data);
        CHECK(ba[i]->state.running_var.data == bb[i]->state.running_var.data);
    }
    fs::remove(file);
}
