#pragma once

// Independent reference implementations used for verification only: naive
// direct loops with no shared code path into the fast kernels they check.

#include <vector>

#include "phmnet/algebra.hpp"
#include "phmnet/ops.hpp"
#include "phmnet/tensor.hpp"

namespace phm::oracle {

inline Tensor matmul_naive(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
            c.at2(i, j) = acc;
        }
    return c;
}

// seven nested loops, straight from the definition
inline Tensor conv2d_naive(const Tensor& x, const Tensor& k, const ConvSpec& spec) {
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t o = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t ho = spec.out_extent(h, kh), wo = spec.out_extent(w, kw);
    Tensor y({n, o, ho, wo});
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oi = 0; oi < o; ++oi)
            for (std::size_t yi = 0; yi < ho; ++yi)
                for (std::size_t xi = 0; xi < wo; ++xi) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t ki = 0; ki < kh; ++ki)
                            for (std::size_t kj = 0; kj < kw; ++kj) {
                                const long ii = static_cast<long>(yi * spec.stride + ki) -
                                                static_cast<long>(spec.pad);
                                const long jj = static_cast<long>(xi * spec.stride + kj) -
                                                static_cast<long>(spec.pad);
                                if (ii < 0 || ii >= static_cast<long>(h) || jj < 0 ||
                                    jj >= static_cast<long>(w))
                                    continue;
                                acc += x.at4(ni, ci, static_cast<std::size_t>(ii),
                                             static_cast<std::size_t>(jj)) *
                                       k.at4(oi, ci, ki, kj);
                            }
                    y.at4(ni, oi, yi, xi) = acc;
                }
    return y;
}

namespace detail {
inline Tensor slice_group(const Tensor& x, std::size_t g, std::size_t d) {
    const std::size_t n = x.shape[0], c = x.shape[1], plane = x.shape[2] * x.shape[3];
    const std::size_t cg = c / d;
    Tensor out({n, cg, x.shape[2], x.shape[3]});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < cg; ++ch)
            std::copy_n(x.data.data() + (i * c + g * cg + ch) * plane, plane,
                        out.data.data() + (i * cg + ch) * plane);
    return out;
}

inline void add_group(Tensor& dst, const Tensor& src, std::size_t g, std::size_t d, double coeff) {
    const std::size_t n = dst.shape[0], c = dst.shape[1], plane = dst.shape[2] * dst.shape[3];
    const std::size_t cg = c / d;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < cg; ++ch) {
            double* p = dst.data.data() + (i * c + g * cg + ch) * plane;
            const double* s = src.data.data() + (i * cg + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) p[q] += coeff * s[q];
        }
}
}  // namespace detail

// The sixteen-convolution expansion of the quaternion product, written out
// sign by sign. kernels = {R, X, Y, Z}, each [O/4, C/4, kH, kW].
inline Tensor quaternion_conv2d_16(const Tensor& x, const std::vector<Tensor>& kernels,
                                   const ConvSpec& spec) {
    // out_r = R*r - X*x - Y*y - Z*z ; out_i = R*x + X*r + Y*z - Z*y
    // out_j = R*y - X*z + Y*r + Z*x ; out_k = R*z + X*y - Y*x + Z*r
    static constexpr int src[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
    static constexpr int sgn[4][4] = {{+1, -1, -1, -1}, {+1, +1, -1, +1},
                                      {+1, +1, +1, -1}, {+1, -1, +1, +1}};
    std::vector<Tensor> groups;
    for (std::size_t g = 0; g < 4; ++g) groups.push_back(detail::slice_group(x, g, 4));
    const std::size_t ob = kernels[0].shape[0];
    const std::size_t ho = spec.out_extent(x.shape[2], kernels[0].shape[2]);
    const std::size_t wo = spec.out_extent(x.shape[3], kernels[0].shape[3]);
    Tensor out({x.shape[0], 4 * ob, ho, wo});
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            const Tensor part =
                conv2d_naive(groups[b], kernels[static_cast<std::size_t>(src[a][b])], spec);
            detail::add_group(out, part, a, 4, sgn[a][b]);
        }
    return out;
}

// Materializes the full signed block kernel and runs one real convolution.
inline Tensor quaternion_conv2d_blockmat(const Tensor& x, const std::vector<Tensor>& kernels,
                                         const ConvSpec& spec) {
    static constexpr int src[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
    static constexpr int sgn[4][4] = {{+1, -1, -1, -1}, {+1, +1, -1, +1},
                                      {+1, +1, +1, -1}, {+1, -1, +1, +1}};
    const std::size_t ob = kernels[0].shape[0], cb = kernels[0].shape[1];
    const std::size_t kh = kernels[0].shape[2], kw = kernels[0].shape[3];
    Tensor full({4 * ob, 4 * cb, kh, kw});
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            const Tensor& kt = kernels[static_cast<std::size_t>(src[a][b])];
            for (std::size_t oo = 0; oo < ob; ++oo)
                for (std::size_t cc = 0; cc < cb; ++cc)
                    for (std::size_t p = 0; p < kh * kw; ++p)
                        full.data[(((a * ob + oo) * 4 * cb) + b * cb + cc) * kh * kw + p] =
                            sgn[a][b] * kt.data[(oo * cb + cc) * kh * kw + p];
        }
    return conv2d_naive(x, full, spec);
}

// Per-group double loop: out group i = sum_j L[i,j] * conv(g_j, K_{(j-i) mod D}).
inline Tensor vectormap_conv2d_groups(const Tensor& x, const std::vector<Tensor>& kernels,
                                      const Tensor& lmat, const ConvSpec& spec) {
    const std::size_t d = kernels.size();
    std::vector<Tensor> groups;
    for (std::size_t g = 0; g < d; ++g) groups.push_back(detail::slice_group(x, g, d));
    const std::size_t ob = kernels[0].shape[0];
    const std::size_t ho = spec.out_extent(x.shape[2], kernels[0].shape[2]);
    const std::size_t wo = spec.out_extent(x.shape[3], kernels[0].shape[3]);
    Tensor out({x.shape[0], d * ob, ho, wo});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t kidx = (j + d - i) % d;  // circulant row shift
            const Tensor part = conv2d_naive(groups[j], kernels[kidx], spec);
            detail::add_group(out, part, i, d, lmat.at2(i, j));
        }
    return out;
}

// Materializes H by expanding every Kronecker product, then multiplies.
inline Tensor phm_linear_expand(const Tensor& x, const SignMatrixSet& signs,
                                const std::vector<Tensor>& s_blocks, const Tensor& bias) {
    Tensor h = kron(signs.matrices[0], s_blocks[0]);
    for (std::size_t t = 1; t < signs.n; ++t) {
        const Tensor part = kron(signs.matrices[t], s_blocks[t]);
        for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += part.data[i];
    }
    const std::size_t bsz = x.shape[0], k = h.shape[0];
    Tensor y({bsz, k});
    for (std::size_t i = 0; i < bsz; ++i)
        for (std::size_t r = 0; r < k; ++r) {
            double acc = bias.size() ? bias.data[r] : 0.0;
            for (std::size_t c = 0; c < h.shape[1]; ++c) acc += h.at2(r, c) * x.at2(i, c);
            y.at2(i, r) = acc;
        }
    return y;
}

}  // namespace phm::oracle
