#pragma once

// Trainable layers: real / quaternion / vectormap convolutions (all three
// lowered onto one fused block-kernel convolution), PHM and plain dense
// layers, and batch normalization.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "phmnet/algebra.hpp"
#include "phmnet/tape.hpp"

namespace phm {

using Rng = std::mt19937_64;

struct InitSpec {
    std::string scheme = "he-shared";
    std::uint64_t seed = 0;
};

enum class Algebra { real, quaternion, vectormap };

inline const char* algebra_name(Algebra a) {
    switch (a) {
        case Algebra::real: return "real";
        case Algebra::quaternion: return "quaternion";
        default: return "vectormap";
    }
}

struct Layer {
    std::string name;
    virtual ~Layer() = default;
    virtual Val forward(Tape& t, Val x, bool training) = 0;
    virtual void collect_params(std::vector<Parameter*>& out) = 0;
    virtual void init(Rng& rng) = 0;
    virtual Shape out_shape(const Shape& in) const = 0;
    virtual std::uint64_t macs(const Shape& in) const = 0;
};

// One convolution in any of the three algebras. Hypercomplex variants keep
// D shared kernels of shape [O/D, C/D, k, k] and expand them into the full
// [O, C, k, k] block kernel at forward time, so a single real convolution
// runs underneath.
class ConvLayer : public Layer {
public:
    Algebra algebra;
    std::size_t group_dim;  // 1 for real, 4 for quaternion, D for vectormap
    std::size_t in_c, out_c, ksize;
    ConvSpec spec;
    std::vector<Parameter> kernels;
    Parameter lmat;  // vectormap only, learnable, excluded from weight decay
    SignMatrixSet signs;

    ConvLayer(std::string nm, Algebra alg, std::size_t vect_d, std::size_t in_channels,
              std::size_t out_channels, std::size_t k, std::size_t stride, std::size_t pad)
        : algebra(alg), in_c(in_channels), out_c(out_channels), ksize(k) {
        name = std::move(nm);
        spec.stride = stride;
        spec.pad = pad;
        group_dim = alg == Algebra::real ? 1 : (alg == Algebra::quaternion ? 4 : vect_d);
        if (in_c % group_dim != 0 || out_c % group_dim != 0)
            throw DivisibilityError("layer " + name + ": channels (" + std::to_string(in_c) + "," +
                                    std::to_string(out_c) + ") must be divisible by " +
                                    std::to_string(group_dim) + " for " + algebra_name(alg) +
                                    " convolution");
        if (group_dim > 1) signs = build_phm_sign_matrices(group_dim);
        const Shape kshape{out_c / group_dim, in_c / group_dim, ksize, ksize};
        for (std::size_t i = 0; i < group_dim; ++i)
            kernels.emplace_back(name + ".k" + std::to_string(i), Tensor(kshape));
        if (algebra == Algebra::vectormap)
            lmat = Parameter(name + ".L", Tensor({group_dim, group_dim}), /*decay=*/false);
    }

    void init(Rng& rng) override {
        // variance-matched init: effective fan-in is the full C*k*k because
        // each kernel is reused across the D channel groups
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in_c * ksize * ksize));
        std::normal_distribution<double> dist(0.0, std_dev);
        for (auto& kp : kernels)
            for (auto& v : kp.value.data) v = dist(rng);
        if (algebra == Algebra::vectormap) lmat.value = build_L_matrix(group_dim).entries;
    }

    Val forward(Tape& t, Val x, bool /*training*/) override {
        Val k;
        if (algebra == Algebra::real) {
            k = t.param(kernels[0]);
        } else {
            std::vector<Val> kv;
            for (auto& kp : kernels) kv.push_back(t.param(kp));
            Val l = algebra == Algebra::vectormap ? t.param(lmat) : Val{};
            k = t.block_kernel(kv, signs, l);
        }
        return t.conv2d(x, k, spec);
    }

    void collect_params(std::vector<Parameter*>& out) override {
        for (auto& kp : kernels) out.push_back(&kp);
        if (algebra == Algebra::vectormap) out.push_back(&lmat);
    }

    std::size_t kernel_param_count() const {
        return group_dim * (out_c / group_dim) * (in_c / group_dim) * ksize * ksize;
    }

    Shape out_shape(const Shape& in) const override {
        return {in[0], out_c, spec.out_extent(in[2], ksize), spec.out_extent(in[3], ksize)};
    }

    std::uint64_t macs(const Shape& in) const override {
        // hypercomplex variants evaluate D*D grouped convolutions, which is
        // exactly the MAC count of the full-channel real convolution
        const auto o = out_shape(in);
        return static_cast<std::uint64_t>(out_c) * in_c * ksize * ksize * o[2] * o[3];
    }
};

class BatchNormLayer : public Layer {
public:
    Parameter gamma, beta;
    BNState state;
    std::size_t channels;

    BatchNormLayer(std::string nm, std::size_t c) : channels(c) {
        name = std::move(nm);
        gamma = Parameter(name + ".gamma", Tensor({c}), /*decay=*/false);
        beta = Parameter(name + ".beta", Tensor({c}), /*decay=*/false);
    }

    void init(Rng&) override {
        gamma.value.fill(1.0);
        beta.value.fill(0.0);
        state = BNState{};
    }

    Val forward(Tape& t, Val x, bool training) override {
        return t.batch_norm(x, t.param(gamma), t.param(beta), state, training);
    }

    void collect_params(std::vector<Parameter*>& out) override {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    Shape out_shape(const Shape& in) const override { return in; }
    std::uint64_t macs(const Shape&) const override { return 0; }
};

class DenseLayer : public Layer {
public:
    std::size_t d, k;
    Parameter weight, bias;

    DenseLayer(std::string nm, std::size_t in_dim, std::size_t out_dim) : d(in_dim), k(out_dim) {
        name = std::move(nm);
        weight = Parameter(name + ".W", Tensor({k, d}));
        bias = Parameter(name + ".b", Tensor({k}));
    }

    void init(Rng& rng) override {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(d)));
        for (auto& v : weight.value.data) v = dist(rng);
        bias.value.fill(0.0);
    }

    Val forward(Tape& t, Val x, bool) override {
        return t.linear(x, t.param(weight), t.param(bias));
    }

    void collect_params(std::vector<Parameter*>& out) override {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Shape out_shape(const Shape& in) const override { return {in[0], k}; }
    std::uint64_t macs(const Shape&) const override {
        return static_cast<std::uint64_t>(k) * d;
    }
};

// y = H x + b with H = sum_i A_i (x) S_i. Input splits into N channel
// groups and the output recombines from the same N groups; the A_i are
// fixed, only the S_i blocks and the bias train.
class PhmLinearLayer : public Layer {
public:
    std::size_t n, d, k;
    SignMatrixSet signs;
    std::vector<Parameter> s_blocks;
    Parameter bias;

    PhmLinearLayer(std::string nm, std::size_t dim_n, std::size_t in_dim, std::size_t out_dim)
        : n(dim_n), d(in_dim), k(out_dim) {
        name = std::move(nm);
        if (n < 1) throw DivisibilityError("layer " + name + ": PHM dimension must be >= 1");
        if (d % n != 0 || k % n != 0)
            throw DivisibilityError(
                "layer " + name + ": PHM dimension " + std::to_string(n) +
                " must divide both input width " + std::to_string(d) + " and output width " +
                std::to_string(k) + "; choose N dividing both d and k");
        signs = build_phm_sign_matrices(n);
        for (std::size_t i = 0; i < n; ++i)
            s_blocks.emplace_back(name + ".S" + std::to_string(i), Tensor({k / n, d / n}));
        bias = Parameter(name + ".b", Tensor({k}));
    }

    void init(Rng& rng) override {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
        for (auto& s : s_blocks)
            for (auto& v : s.value.data) v = dist(rng);
        bias.value.fill(0.0);
    }

    Val forward(Tape& t, Val x, bool) override {
        std::vector<Val> sv;
        for (auto& s : s_blocks) sv.push_back(t.param(s));
        Val h = t.phm_assemble(signs, sv);
        return t.linear(x, h, t.param(bias));
    }

    void collect_params(std::vector<Parameter*>& out) override {
        for (auto& s : s_blocks) out.push_back(&s);
        out.push_back(&bias);
    }

    Shape out_shape(const Shape& in) const override { return {in[0], k}; }
    std::uint64_t macs(const Shape&) const override {
        // the materialized k x d operator is applied to the input
        return static_cast<std::uint64_t>(k) * d;
    }
};

}  // namespace phm
