#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <functional>
#include <random>

#include "phmnet/gradcheck.hpp"
#include "phmnet/layers.hpp"
#include "phmnet/model.hpp"

using namespace phm;

namespace {
Tensor random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(s);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

// run grad_check against a tape-building function returning the scalar loss
double checked_error(const std::vector<Parameter*>& params,
                     const std::function<Val(Tape&)>& build, double eps = 1e-5) {
    auto loss_value = [&]() {
        Tape t;
        return t.value(build(t)).data[0];
    };
    auto loss_backward = [&]() {
        Tape t;
        t.backward(build(t));
    };
    return grad_check(params, loss_value, loss_backward, eps).max_rel_error;
}
}  // namespace

TEST_CASE("gradcheck: add / scale / relu chain") {
    Rng rng(21);
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({3, 4}, rng));
    // keep inputs away from the relu kink
    for (auto& v : a.value.data) v += (v >= 0 ? 0.5 : -0.5);
    const double err = checked_error({&a, &b}, [&](Tape& t) {
        return t.sum_squares(t.relu(t.add(t.param(a), t.scale(t.param(b), 0.7))));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("gradcheck: matmul and linear") {
    Rng rng(22);
    Parameter a("a", random_tensor({3, 5}, rng));
    Parameter m("m", random_tensor({5, 4}, rng));
    Parameter w("w", random_tensor({4, 5}, rng));
    Parameter bias("bias", random_tensor({4}, rng));
    CHECK(checked_error({&a, &m}, [&](Tape& t) {
              return t.sum_squares(t.matmul(t.param(a), t.param(m)));
          }) < 1e-5);
    CHECK(checked_error({&a, &w, &bias}, [&](Tape& t) {
              return t.sum_squares(t.linear(t.param(a), t.param(w), t.param(bias)));
          }) < 1e-5);
}

TEST_CASE("gradcheck: conv2d kernel and input gradients") {
    Rng rng(23);
    Parameter x("x", random_tensor({2, 3, 5, 5}, rng, 0.5));
    Parameter k("k", random_tensor({2, 3, 3, 3}, rng, 0.5));
    for (const ConvSpec spec : {ConvSpec{1, 1}, ConvSpec{2, 1}, ConvSpec{1, 0}}) {
        const double err = checked_error({&x, &k}, [&](Tape& t) {
            return t.sum_squares(t.conv2d(t.param(x), t.param(k), spec));
        });
        CHECK(err < 1e-5);
    }
}

TEST_CASE("gradcheck: quaternion block kernel") {
    Rng rng(24);
    ConvLayer layer("q", Algebra::quaternion, 4, 4, 4, 3, 1, 1);
    layer.init(rng);
    const Tensor x = random_tensor({2, 4, 5, 5}, rng, 0.5);
    std::vector<Parameter*> ps;
    layer.collect_params(ps);
    CHECK(checked_error(ps, [&](Tape& t) {
              return t.sum_squares(layer.forward(t, t.constant(x), false));
          }) < 1e-5);
}

TEST_CASE("gradcheck: vectormap block kernel including L gradients") {
    Rng rng(25);
    ConvLayer layer("v", Algebra::vectormap, 3, 3, 3, 3, 1, 1);
    layer.init(rng);
    std::normal_distribution<double> dist(0.0, 0.3);
    for (auto& v : layer.lmat.value.data) v += dist(rng);
    const Tensor x = random_tensor({2, 3, 5, 5}, rng, 0.5);
    std::vector<Parameter*> ps;
    layer.collect_params(ps);
    REQUIRE(ps.size() == 4);  // 3 kernels + L
    CHECK(checked_error(ps, [&](Tape& t) {
              return t.sum_squares(layer.forward(t, t.constant(x), false));
          }) < 1e-5);
}

TEST_CASE("gradcheck: phm linear at n = 4 and 5") {
    Rng rng(26);
    for (const std::size_t n : {std::size_t{4}, std::size_t{5}}) {
        PhmLinearLayer layer("p", n, 2 * n, n);
        layer.init(rng);
        const Tensor x = random_tensor({3, 2 * n}, rng);
        std::vector<Parameter*> ps;
        layer.collect_params(ps);
        CHECK(checked_error(ps, [&](Tape& t) {
                  return t.sum_squares(layer.forward(t, t.constant(x), false));
              }) < 1e-5);
    }
}

TEST_CASE("gradcheck: batch norm, training mode") {
    Rng rng(27);
    Parameter x("x", random_tensor({3, 2, 4, 4}, rng));
    Parameter gamma("gamma", random_tensor({2}, rng, 0.2));
    Parameter beta("beta", random_tensor({2}, rng, 0.2));
    for (auto& v : gamma.value.data) v += 1.0;
    const double err = checked_error({&x, &gamma, &beta}, [&](Tape& t) {
        BNState state;  // fresh stats each pass; loss depends only on batch stats
        return t.sum_squares(t.relu(
            t.batch_norm(t.param(x), t.param(gamma), t.param(beta), state, true)));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("gradcheck: softmax cross entropy through a dense layer") {
    Rng rng(28);
    DenseLayer layer("d", 6, 4);
    layer.init(rng);
    const Tensor x = random_tensor({5, 6}, rng);
    const std::vector<int> labels{0, 1, 2, 3, 1};
    std::vector<Parameter*> ps;
    layer.collect_params(ps);
    CHECK(checked_error(ps, [&](Tape& t) {
              return t.softmax_cross_entropy(layer.forward(t, t.constant(x), false), labels);
          }) < 1e-5);
}

TEST_CASE("gradcheck: global average pool and channel padding") {
    Rng rng(29);
    Parameter x("x", random_tensor({2, 3, 4, 4}, rng));
    CHECK(checked_error({&x}, [&](Tape& t) {
              return t.sum_squares(t.global_avg_pool(t.pad_channels(t.param(x), 1)));
          }) < 1e-5);
}

TEST_CASE("gradcheck: full quaternion bottleneck block, batch norm in eval mode") {
    Rng rng(30);
    ResidualBlock block("blk", BlockKind::bottleneck, Algebra::quaternion, 3, 8, 8, 1);
    Rng irng(31);
    block.init(irng);
    const Tensor x = random_tensor({2, 8, 4, 4}, rng, 0.5);
    {
        Tape t;  // one training pass seeds the running statistics
        block.forward(t, t.constant(x), true);
    }
    std::vector<Parameter*> ps;
    block.collect_params(ps);
    CHECK(checked_error(ps, [&](Tape& t) {
              return t.sum_squares(block.forward(t, t.constant(x), false));
          }) < 1e-5);
}

TEST_CASE("backward is deterministic") {
    Rng rng(32);
    ConvLayer layer("q", Algebra::quaternion, 4, 4, 4, 3, 1, 1);
    layer.init(rng);
    const Tensor x = random_tensor({2, 4, 5, 5}, rng);
    std::vector<Parameter*> ps;
    layer.collect_params(ps);
    auto run = [&]() {
        for (auto* p : ps) p->zero_grad();
        Tape t;
        t.backward(t.sum_squares(layer.forward(t, t.constant(x), false)));
        std::vector<std::vector<double>> grads;
        for (auto* p : ps) grads.push_back(p->grad.data);
        return grads;
    };
    CHECK(run() == run());
}
