#pragma once

// Reverse-mode autodiff over the op set the networks need. A Tape records a
// DAG of eagerly evaluated nodes; backward() walks it once in reverse order
// and accumulates gradients into Parameter objects at the leaves.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phmnet/algebra.hpp"
#include "phmnet/ops.hpp"
#include "phmnet/tensor.hpp"

namespace phm {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;            // same shape as value, lazily sized
    bool apply_decay = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool decay = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape), apply_decay(decay) {}

    void zero_grad() { grad.fill(0.0); }
};

// Per-layer batch-norm running statistics.
struct BNState {
    Tensor running_mean;
    Tensor running_var;
    bool initialized = false;
    double momentum = 0.1;
    double eps = 1e-5;
};

class Tape {
public:
    struct Val {
        int id;
        Val() : id(-1) {}
        explicit Val(int i) : id(i) {}
        bool valid() const { return id >= 0; }
    };

    const Tensor& value(Val v) const { return nodes_[v.id].value; }
    const Tensor& grad(Val v) const { return nodes_[v.id].grad; }

    Val leaf(Tensor t, Parameter* p = nullptr) {
        Val v = push(std::move(t), p != nullptr);
        nodes_[v.id].param = p;
        return v;
    }
    Val param(Parameter& p) { return leaf(p.value, &p); }
    Val constant(Tensor t) { return push(std::move(t), false); }

    // ---- elementwise / structural ----

    Val add(Val a, Val b) {
        check_same_shape(value(a), value(b), "add");
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += value(b).data[i];
        return unary_or_nary({a, b}, std::move(out), [a, b](Tape& t, const Tensor& gy) {
            t.accum(a, gy);
            t.accum(b, gy);
        });
    }

    // y = sum_i coeff[i] * xs[i], all same shape
    Val linear_combine(std::vector<Val> xs, std::vector<double> coeffs) {
        Tensor out(value(xs[0]).shape);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            check_same_shape(value(xs[0]), value(xs[i]), "linear_combine");
            const auto& xi = value(xs[i]);
            for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += coeffs[i] * xi.data[j];
        }
        return unary_or_nary(xs, std::move(out), [xs, coeffs](Tape& t, const Tensor& gy) {
            for (std::size_t i = 0; i < xs.size(); ++i) t.accum_scaled(xs[i], gy, coeffs[i]);
        });
    }

    Val scale(Val x, double c) { return linear_combine({x}, {c}); }

    // y = s[idx] * x where s is a (possibly learnable) tensor entry
    Val scale_by_entry(Val x, Val s, std::size_t idx) {
        const double sv = value(s).data[idx];
        Tensor out = value(x);
        for (auto& v : out.data) v *= sv;
        return unary_or_nary({x, s}, std::move(out), [x, s, idx, sv](Tape& t, const Tensor& gy) {
            t.accum_scaled(x, gy, sv);
            double acc = 0.0;
            const auto& xv = t.value(x);
            for (std::size_t i = 0; i < gy.size(); ++i) acc += gy.data[i] * xv.data[i];
            t.accum_entry(s, idx, acc);
        });
    }

    Val relu(Val x) {
        Tensor out = value(x);
        for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
        return unary_or_nary({x}, std::move(out), [x](Tape& t, const Tensor& gy) {
            const auto& xv = t.value(x);
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx.data[i] = xv.data[i] > 0.0 ? gy.data[i] : 0.0;
            t.accum(x, gx);
        });
    }

    Val channel_slice(Val x, std::size_t c0, std::size_t c1) {
        const Tensor& xv = value(x);
        const std::size_t n = xv.shape[0], c = xv.shape[1], plane = xv.shape[2] * xv.shape[3];
        Tensor out({n, c1 - c0, xv.shape[2], xv.shape[3]});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = c0; ch < c1; ++ch)
                std::copy_n(xv.data.data() + (i * c + ch) * plane, plane,
                            out.data.data() + (i * (c1 - c0) + (ch - c0)) * plane);
        return unary_or_nary({x}, std::move(out), [x, c0, c1](Tape& t, const Tensor& gy) {
            const Tensor& xv = t.value(x);
            const std::size_t n = xv.shape[0], c = xv.shape[1], plane = xv.shape[2] * xv.shape[3];
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = c0; ch < c1; ++ch)
                    std::copy_n(gy.data.data() + (i * (c1 - c0) + (ch - c0)) * plane, plane,
                                gx.data.data() + (i * c + ch) * plane);
            t.accum(x, gx);
        });
    }

    Val channel_concat(std::vector<Val> xs) {
        const Tensor& x0 = value(xs[0]);
        std::size_t ctot = 0;
        for (auto v : xs) ctot += value(v).shape[1];
        const std::size_t n = x0.shape[0], h = x0.shape[2], w = x0.shape[3], plane = h * w;
        Tensor out({n, ctot, h, w});
        std::size_t off = 0;
        for (auto v : xs) {
            const Tensor& xv = value(v);
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(xv.data.data() + i * xv.shape[1] * plane, xv.shape[1] * plane,
                            out.data.data() + (i * ctot + off) * plane);
            off += xv.shape[1];
        }
        return unary_or_nary(xs, std::move(out), [xs, ctot, plane, n](Tape& t, const Tensor& gy) {
            std::size_t off = 0;
            for (auto v : xs) {
                const std::size_t cv = t.value(v).shape[1];
                Tensor gx(t.value(v).shape);
                for (std::size_t i = 0; i < n; ++i)
                    std::copy_n(gy.data.data() + (i * ctot + off) * plane, cv * plane,
                                gx.data.data() + i * cv * plane);
                t.accum(v, gx);
                off += cv;
            }
        });
    }

    // zero-pad extra channels on the right: [N,C,H,W] -> [N,C+extra,H,W]
    Val pad_channels(Val x, std::size_t extra) {
        const Tensor& xv = value(x);
        const std::size_t n = xv.shape[0], c = xv.shape[1], plane = xv.shape[2] * xv.shape[3];
        Tensor out({n, c + extra, xv.shape[2], xv.shape[3]});
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(xv.data.data() + i * c * plane, c * plane,
                        out.data.data() + i * (c + extra) * plane);
        return unary_or_nary({x}, std::move(out), [x, c, extra, plane, n](Tape& t, const Tensor& gy) {
            Tensor gx(t.value(x).shape);
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(gy.data.data() + i * (c + extra) * plane, c * plane,
                            gx.data.data() + i * c * plane);
            t.accum(x, gx);
        });
    }

    // ---- dense ----

    Val matmul(Val a, Val b) {
        Tensor out = phm::matmul(value(a), value(b));
        return unary_or_nary({a, b}, std::move(out), [a, b](Tape& t, const Tensor& gy) {
            const Tensor& av = t.value(a);
            const Tensor& bv = t.value(b);
            if (t.needs_grad(a)) {
                Tensor ga(av.shape);
                gemm_nt(gy.data.data(), bv.data.data(), ga.data.data(), av.shape[0], bv.shape[1],
                        av.shape[1], true);
                t.accum_move(a, std::move(ga));
            }
            if (t.needs_grad(b)) {
                Tensor gb(bv.shape);
                gemm_tn(av.data.data(), gy.data.data(), gb.data.data(), av.shape[1], av.shape[0],
                        bv.shape[1], true);
                t.accum_move(b, std::move(gb));
            }
        });
    }

    // y[B,k] = x[B,d] * W[k,d]^T + bias[k]
    Val linear(Val x, Val w, Val bias) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(w);
        if (xv.ndim() != 2 || wv.ndim() != 2 || xv.shape[1] != wv.shape[1])
            throw ShapeError("linear: incompatible shapes " + shape_str(xv.shape) + " and " +
                             shape_str(wv.shape));
        const std::size_t bsz = xv.shape[0], d = xv.shape[1], k = wv.shape[0];
        Tensor out({bsz, k});
        gemm_nt(xv.data.data(), wv.data.data(), out.data.data(), bsz, d, k, true);
        if (bias.valid()) {
            const Tensor& bv = value(bias);
            for (std::size_t i = 0; i < bsz; ++i)
                for (std::size_t j = 0; j < k; ++j) out.at2(i, j) += bv.data[j];
        }
        std::vector<Val> ins{x, w};
        if (bias.valid()) ins.push_back(bias);
        return unary_or_nary(ins, std::move(out), [x, w, bias, bsz, d, k](Tape& t, const Tensor& gy) {
            const Tensor& xv = t.value(x);
            const Tensor& wv = t.value(w);
            if (t.needs_grad(x)) {
                Tensor gx({bsz, d});
                gemm_nn(gy.data.data(), wv.data.data(), gx.data.data(), bsz, k, d, true);
                t.accum_move(x, std::move(gx));
            }
            if (t.needs_grad(w)) {
                Tensor gw({k, d});
                gemm_tn(gy.data.data(), xv.data.data(), gw.data.data(), k, bsz, d, true);
                t.accum_move(w, std::move(gw));
            }
            if (bias.valid() && t.needs_grad(bias)) {
                Tensor gb({k});
                for (std::size_t i = 0; i < bsz; ++i)
                    for (std::size_t j = 0; j < k; ++j) gb.data[j] += gy.at2(i, j);
                t.accum_move(bias, std::move(gb));
            }
        });
    }

    // ---- convolution ----

    Val conv2d(Val x, Val k, ConvSpec spec) {
        Tensor out = phm::conv2d(value(x), value(k), spec);
        return unary_or_nary({x, k}, std::move(out), [x, k, spec](Tape& t, const Tensor& gy) {
            Tensor gx, gk;
            Tensor* pgx = nullptr;
            Tensor* pgk = nullptr;
            if (t.needs_grad(x)) { gx = Tensor(t.value(x).shape); pgx = &gx; }
            if (t.needs_grad(k)) { gk = Tensor(t.value(k).shape); pgk = &gk; }
            conv2d_backward(t.value(x), t.value(k), spec, gy, pgx, pgk);
            if (pgx) t.accum_move(x, std::move(gx));
            if (pgk) t.accum_move(k, std::move(gk));
        });
    }

    // Fuse D grouped kernels into one full [O,C,kH,kW] block kernel.
    // Block (i,j) = coeff(i,j) * K_{src(i,j)} where src is the circulant /
    // Hamilton placement from `signs`; coeff is the fixed sign unless a
    // learnable matrix L is supplied, in which case coeff(i,j) = L[i,j].
    Val block_kernel(const std::vector<Val>& kernels, const SignMatrixSet& signs, Val lmat = Val()) {
        const std::size_t d = signs.n;
        const Tensor& k0 = value(kernels[0]);
        const std::size_t ob = k0.shape[0], cb = k0.shape[1], kh = k0.shape[2], kw = k0.shape[3];
        const std::size_t kpix = cb * kh * kw;
        Tensor out({d * ob, d * cb, kh, kw});
        // cell (i,j): which kernel lands there and with what fixed sign
        std::vector<int> src(d * d, -1);
        std::vector<double> sgn(d * d, 0.0);
        for (std::size_t t = 0; t < d; ++t)
            for (std::size_t i = 0; i < d; ++i) {
                const auto& e = signs.support[t][i];
                if (e.sign == 0.0) continue;
                src[i * d + e.col] = static_cast<int>(t);
                sgn[i * d + e.col] = e.sign;
            }
        const Tensor* lv = lmat.valid() ? &value(lmat) : nullptr;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const int t = src[i * d + j];
                if (t < 0) continue;
                const double coeff = lv ? lv->at2(i, j) : sgn[i * d + j];
                const Tensor& kt = value(kernels[static_cast<std::size_t>(t)]);
                for (std::size_t oo = 0; oo < ob; ++oo) {
                    double* dst = out.data.data() + ((i * ob + oo) * (d * cb) + j * cb) * kh * kw;
                    const double* ssrc = kt.data.data() + oo * kpix;
                    for (std::size_t p = 0; p < kpix; ++p) dst[p] += coeff * ssrc[p];
                }
            }
        std::vector<Val> ins = kernels;
        if (lmat.valid()) ins.push_back(lmat);
        return unary_or_nary(
            ins, std::move(out),
            [kernels, lmat, src, sgn, d, ob, cb, kh, kw, kpix](Tape& t, const Tensor& gy) {
                const Tensor* lv = lmat.valid() ? &t.value(lmat) : nullptr;
                std::vector<Tensor> gk(kernels.size());
                for (std::size_t q = 0; q < kernels.size(); ++q)
                    gk[q] = Tensor(t.value(kernels[q]).shape);
                Tensor gl = lv ? Tensor({d, d}) : Tensor();
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const int q = src[i * d + j];
                        if (q < 0) continue;
                        const double coeff = lv ? lv->at2(i, j) : sgn[i * d + j];
                        const Tensor& kq = t.value(kernels[static_cast<std::size_t>(q)]);
                        double lacc = 0.0;
                        for (std::size_t oo = 0; oo < ob; ++oo) {
                            const double* g = gy.data.data() +
                                              ((i * ob + oo) * (d * cb) + j * cb) * kh * kw;
                            double* dst = gk[static_cast<std::size_t>(q)].data.data() + oo * kpix;
                            const double* kv = kq.data.data() + oo * kpix;
                            for (std::size_t p = 0; p < kpix; ++p) {
                                dst[p] += coeff * g[p];
                                lacc += g[p] * kv[p];
                            }
                        }
                        if (lv) gl.at2(i, j) += lacc;
                    }
                for (std::size_t q = 0; q < kernels.size(); ++q)
                    t.accum_move(kernels[q], std::move(gk[q]));
                if (lmat.valid()) t.accum_move(lmat, std::move(gl));
            });
    }

    // H = sum_i A_i (x) S_i as a tape op (linear in the S blocks).
    Val phm_assemble(const SignMatrixSet& signs, const std::vector<Val>& blocks) {
        std::vector<Tensor> sv;
        sv.reserve(blocks.size());
        for (auto b : blocks) sv.push_back(value(b));
        Tensor h = assemble_H(signs, sv);
        const std::size_t kb = sv[0].shape[0], db = sv[0].shape[1], n = signs.n;
        auto support = signs.support;
        return unary_or_nary(blocks, std::move(h),
                             [blocks, support, kb, db, n](Tape& t, const Tensor& gy) {
                                 for (std::size_t q = 0; q < n; ++q) {
                                     Tensor gs({kb, db});
                                     for (std::size_t i = 0; i < n; ++i) {
                                         const auto& e = support[q][i];
                                         if (e.sign == 0.0) continue;
                                         for (std::size_t r = 0; r < kb; ++r)
                                             for (std::size_t c = 0; c < db; ++c)
                                                 gs.at2(r, c) += e.sign *
                                                                 gy.at2(i * kb + r, e.col * db + c);
                                     }
                                     t.accum_move(blocks[q], std::move(gs));
                                 }
                             });
    }

    // ---- normalization / pooling ----

    Val batch_norm(Val x, Val gamma, Val beta, BNState& state, bool training) {
        const Tensor& xv = value(x);
        if (xv.ndim() != 4) throw ShapeError("batch_norm: expected NCHW input");
        const std::size_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
        if (value(gamma).size() != c || value(beta).size() != c)
            throw ShapeError("batch_norm: gamma/beta length must equal channel count");
        const std::size_t m = n * h * w;
        const double eps = state.eps;

        Tensor mean({c}), var({c});
        if (training) {
            if (m < 2) throw ShapeError("batch_norm: training mode needs N*H*W >= 2");
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double* p = xv.data.data() + (i * c + ch) * h * w;
                    for (std::size_t q = 0; q < h * w; ++q) acc += p[q];
                }
                mean.data[ch] = acc / static_cast<double>(m);
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                const double mu = mean.data[ch];
                for (std::size_t i = 0; i < n; ++i) {
                    const double* p = xv.data.data() + (i * c + ch) * h * w;
                    for (std::size_t q = 0; q < h * w; ++q) {
                        const double dd = p[q] - mu;
                        acc += dd * dd;
                    }
                }
                var.data[ch] = acc / static_cast<double>(m);
            }
            if (!state.initialized) {
                state.running_mean = mean;
                state.running_var = var;
                for (auto& v : state.running_var.data)
                    v *= static_cast<double>(m) / static_cast<double>(m - 1);
                state.initialized = true;
            } else {
                const double mom = state.momentum;
                const double unb = static_cast<double>(m) / static_cast<double>(m - 1);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    state.running_mean.data[ch] =
                        (1 - mom) * state.running_mean.data[ch] + mom * mean.data[ch];
                    state.running_var.data[ch] =
                        (1 - mom) * state.running_var.data[ch] + mom * var.data[ch] * unb;
                }
            }
        } else {
            if (!state.initialized)
                throw NumericsError("batch_norm: eval mode with uninitialized running stats");
            mean = state.running_mean;
            var = state.running_var;
        }

        Tensor out(xv.shape);
        std::vector<double> inv_std(c);
        for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var.data[ch] + eps);
        const Tensor& gv = value(gamma);
        const Tensor& bv = value(beta);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double a = gv.data[ch] * inv_std[ch];
                const double b = bv.data[ch] - a * mean.data[ch];
                const double* p = xv.data.data() + (i * c + ch) * h * w;
                double* o = out.data.data() + (i * c + ch) * h * w;
                for (std::size_t q = 0; q < h * w; ++q) o[q] = a * p[q] + b;
            }

        auto mean_c = std::make_shared<Tensor>(std::move(mean));
        auto istd_c = std::make_shared<std::vector<double>>(std::move(inv_std));
        return unary_or_nary(
            {x, gamma, beta}, std::move(out),
            [x, gamma, beta, mean_c, istd_c, training, n, c, h, w, m](Tape& t, const Tensor& gy) {
                const Tensor& xv = t.value(x);
                const Tensor& gv = t.value(gamma);
                Tensor gx(xv.shape), gg({c}), gb({c});
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double mu = mean_c->data[ch];
                    const double is = (*istd_c)[ch];
                    double sum_gy = 0.0, sum_gy_xhat = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* px = xv.data.data() + (i * c + ch) * h * w;
                        const double* pg = gy.data.data() + (i * c + ch) * h * w;
                        for (std::size_t q = 0; q < h * w; ++q) {
                            sum_gy += pg[q];
                            sum_gy_xhat += pg[q] * (px[q] - mu) * is;
                        }
                    }
                    gb.data[ch] = sum_gy;
                    gg.data[ch] = sum_gy_xhat;
                    const double gch = gv.data[ch];
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* px = xv.data.data() + (i * c + ch) * h * w;
                        const double* pg = gy.data.data() + (i * c + ch) * h * w;
                        double* po = gx.data.data() + (i * c + ch) * h * w;
                        for (std::size_t q = 0; q < h * w; ++q) {
                            const double xhat = (px[q] - mu) * is;
                            if (training)
                                po[q] = gch * is *
                                        (pg[q] - inv_m * sum_gy - xhat * inv_m * sum_gy_xhat);
                            else
                                po[q] = gch * is * pg[q];
                        }
                    }
                }
                t.accum_move(x, std::move(gx));
                t.accum_move(gamma, std::move(gg));
                t.accum_move(beta, std::move(gb));
            });
    }

    Val global_avg_pool(Val x) {
        const Tensor& xv = value(x);
        if (xv.ndim() != 4) throw ShapeError("global_avg_pool: expected NCHW input");
        const std::size_t n = xv.shape[0], c = xv.shape[1], plane = xv.shape[2] * xv.shape[3];
        Tensor out({n, c});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* p = xv.data.data() + (i * c + ch) * plane;
                double acc = 0.0;
                for (std::size_t q = 0; q < plane; ++q) acc += p[q];
                out.at2(i, ch) = acc / static_cast<double>(plane);
            }
        return unary_or_nary({x}, std::move(out), [x, n, c, plane](Tape& t, const Tensor& gy) {
            Tensor gx(t.value(x).shape);
            const double inv = 1.0 / static_cast<double>(plane);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double g = gy.at2(i, ch) * inv;
                    double* p = gx.data.data() + (i * c + ch) * plane;
                    for (std::size_t q = 0; q < plane; ++q) p[q] = g;
                }
            t.accum_move(x, std::move(gx));
        });
    }

    // ---- losses ----

    // mean over the batch of -log softmax(logits)[label]
    Val softmax_cross_entropy(Val logits, const std::vector<int>& labels) {
        const Tensor& lv = value(logits);
        const std::size_t bsz = lv.shape[0], k = lv.shape[1];
        if (labels.size() != bsz)
            throw ShapeError("softmax_cross_entropy: label count does not match batch");
        auto probs = std::make_shared<Tensor>(Shape{bsz, k});
        double loss = 0.0;
        for (std::size_t i = 0; i < bsz; ++i) {
            double mx = lv.at2(i, 0);
            for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv.at2(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) z += std::exp(lv.at2(i, j) - mx);
            const double logz = std::log(z) + mx;
            for (std::size_t j = 0; j < k; ++j)
                probs->at2(i, j) = std::exp(lv.at2(i, j) - logz);
            loss -= lv.at2(i, labels[i]) - logz;
        }
        loss /= static_cast<double>(bsz);
        return unary_or_nary({logits}, Tensor::scalar(loss),
                             [logits, probs, labels, bsz, k](Tape& t, const Tensor& gy) {
                                 const double g = gy.data[0] / static_cast<double>(bsz);
                                 Tensor gx({bsz, k});
                                 for (std::size_t i = 0; i < bsz; ++i)
                                     for (std::size_t j = 0; j < k; ++j)
                                         gx.at2(i, j) =
                                             g * (probs->at2(i, j) -
                                                  (static_cast<int>(j) == labels[i] ? 1.0 : 0.0));
                                 t.accum_move(logits, std::move(gx));
                             });
    }

    Val sum(Val x) {
        double acc = 0.0;
        for (double v : value(x).data) acc += v;
        return unary_or_nary({x}, Tensor::scalar(acc), [x](Tape& t, const Tensor& gy) {
            Tensor gx(t.value(x).shape);
            gx.fill(gy.data[0]);
            t.accum_move(x, std::move(gx));
        });
    }

    Val sum_squares(Val x) {
        double acc = 0.0;
        for (double v : value(x).data) acc += v * v;
        return unary_or_nary({x}, Tensor::scalar(0.5 * acc), [x](Tape& t, const Tensor& gy) {
            const auto& xv = t.value(x);
            Tensor gx(xv.shape);
            for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] = gy.data[0] * xv.data[i];
            t.accum_move(x, std::move(gx));
        });
    }

    // ---- backward ----

    void backward(Val loss) {
        if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
        for (auto& n : nodes_)
            if (n.grad.size() != 0) n.grad.fill(0.0);
        ensure_grad(loss.id);
        nodes_[loss.id].grad.data[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.size() == 0) continue;
            if (n.back) n.back(*this, n.grad);
            if (n.param) {
                for (std::size_t j = 0; j < n.grad.size(); ++j)
                    n.param->grad.data[j] += n.grad.data[j];
            }
        }
    }

    bool needs_grad(Val v) const { return nodes_[v.id].needs_grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    void accum(Val v, const Tensor& g) {
        if (!needs_grad(v)) return;
        ensure_grad(v.id);
        Tensor& dst = nodes_[v.id].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
    }
    void accum_move(Val v, Tensor&& g) {
        if (!needs_grad(v)) return;
        if (nodes_[v.id].grad.size() == 0) {
            nodes_[v.id].grad = std::move(g);
            return;
        }
        accum(v, g);
    }
    void accum_scaled(Val v, const Tensor& g, double c) {
        if (!needs_grad(v)) return;
        ensure_grad(v.id);
        Tensor& dst = nodes_[v.id].grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += c * g.data[i];
    }
    void accum_entry(Val v, std::size_t idx, double g) {
        if (!needs_grad(v)) return;
        ensure_grad(v.id);
        nodes_[v.id].grad.data[idx] += g;
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until needed
        bool needs_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, const Tensor&)> back;
    };

    std::vector<Node> nodes_;

    void ensure_grad(int id) {
        if (nodes_[id].grad.size() == 0) nodes_[id].grad = Tensor(nodes_[id].value.shape);
    }

    Val push(Tensor t, bool needs) {
        nodes_.push_back(Node{std::move(t), Tensor(), needs, nullptr, nullptr});
        return Val(static_cast<int>(nodes_.size()) - 1);
    }

    Val unary_or_nary(const std::vector<Val>& ins, Tensor out,
                      std::function<void(Tape&, const Tensor&)> back) {
        bool needs = false;
        for (auto v : ins) needs = needs || nodes_[v.id].needs_grad;
        Val r = push(std::move(out), needs);
        if (needs) nodes_[r.id].back = std::move(back);
        return r;
    }
};

using Val = Tape::Val;

}  // namespace phm
