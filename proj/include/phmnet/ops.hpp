#pragma once

// Real-valued numeric kernels: matrix multiply and 2-D cross-correlation
// (im2col + gemm fast path). Loop orders are fixed so results are bitwise
// reproducible run to run.

#include <cstddef>

#include "phmnet/tensor.hpp"

namespace phm {

struct ConvSpec {
    std::size_t stride = 1;
    std::size_t pad = 0;
    // kernel extent lives in the kernel tensor itself

    std::size_t out_extent(std::size_t in, std::size_t k) const {
        std::size_t padded = in + 2 * pad;
        if (padded < k)
            throw ShapeError("conv: kernel extent " + std::to_string(k) +
                             " exceeds padded input " + std::to_string(padded));
        return (padded - k) / stride + 1;
    }
};

// C[M,N] (+)= A[M,K] * B[K,N]
inline void gemm_nn(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate)
        for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
inline void gemm_nt(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate)
        for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate)
        for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul: expected 2-D operands, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    Tensor c({a.shape[0], b.shape[1]});
    gemm_nn(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1], b.shape[1], true);
    return c;
}

// cols[C*kH*kW, Ho*Wo] for one image x[C,H,W]
inline void im2col(const double* x, std::size_t c_in, std::size_t h, std::size_t w,
                   std::size_t kh, std::size_t kw, const ConvSpec& spec, double* cols) {
    const std::size_t ho = spec.out_extent(h, kh);
    const std::size_t wo = spec.out_extent(w, kw);
    const std::size_t plane = ho * wo;
    std::size_t row = 0;
    for (std::size_t c = 0; c < c_in; ++c) {
        const double* xc = x + c * h * w;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
                double* out = cols + row * plane;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    const long ii = static_cast<long>(oi * spec.stride + ki) - static_cast<long>(spec.pad);
                    if (ii < 0 || ii >= static_cast<long>(h)) {
                        for (std::size_t oj = 0; oj < wo; ++oj) out[oi * wo + oj] = 0.0;
                        continue;
                    }
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const long jj = static_cast<long>(oj * spec.stride + kj) - static_cast<long>(spec.pad);
                        out[oi * wo + oj] =
                            (jj < 0 || jj >= static_cast<long>(w)) ? 0.0 : xc[ii * w + jj];
                    }
                }
            }
        }
    }
}

inline void col2im_add(const double* cols, std::size_t c_in, std::size_t h, std::size_t w,
                       std::size_t kh, std::size_t kw, const ConvSpec& spec, double* x) {
    const std::size_t ho = spec.out_extent(h, kh);
    const std::size_t wo = spec.out_extent(w, kw);
    const std::size_t plane = ho * wo;
    std::size_t row = 0;
    for (std::size_t c = 0; c < c_in; ++c) {
        double* xc = x + c * h * w;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
                const double* in = cols + row * plane;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    const long ii = static_cast<long>(oi * spec.stride + ki) - static_cast<long>(spec.pad);
                    if (ii < 0 || ii >= static_cast<long>(h)) continue;
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const long jj = static_cast<long>(oj * spec.stride + kj) - static_cast<long>(spec.pad);
                        if (jj < 0 || jj >= static_cast<long>(w)) continue;
                        xc[ii * w + jj] += in[oi * wo + oj];
                    }
                }
            }
        }
    }
}

inline void conv2d_check(const Tensor& x, const Tensor& k) {
    if (x.ndim() != 4 || k.ndim() != 4)
        throw ShapeError("conv2d: expected 4-D input and kernel, got " + shape_str(x.shape) +
                         " and " + shape_str(k.shape));
    if (x.shape[1] != k.shape[1])
        throw ShapeError("conv2d: input channels " + shape_str(x.shape) +
                         " do not match kernel " + shape_str(k.shape));
}

// x[N,C,H,W] (*) k[O,C,kH,kW] -> y[N,O,Ho,Wo]; cross-correlation, zero pad.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const ConvSpec& spec) {
    conv2d_check(x, k);
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t o = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t ho = spec.out_extent(h, kh), wo = spec.out_extent(w, kw);
    Tensor y({n, o, ho, wo});
    const std::size_t ckk = c * kh * kw;
    std::vector<double> cols(ckk * ho * wo);
    for (std::size_t i = 0; i < n; ++i) {
        im2col(x.data.data() + i * c * h * w, c, h, w, kh, kw, spec, cols.data());
        gemm_nn(k.data.data(), cols.data(), y.data.data() + i * o * ho * wo, o, ckk, ho * wo, false);
    }
    return y;
}

// Accumulates into gx/gk when non-null; both must be pre-shaped.
inline void conv2d_backward(const Tensor& x, const Tensor& k, const ConvSpec& spec,
                            const Tensor& gy, Tensor* gx, Tensor* gk) {
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t o = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const std::size_t ho = gy.shape[2], wo = gy.shape[3];
    const std::size_t ckk = c * kh * kw;
    std::vector<double> cols(ckk * ho * wo);
    std::vector<double> gcols;
    if (gx) gcols.resize(ckk * ho * wo);
    for (std::size_t i = 0; i < n; ++i) {
        const double* gyi = gy.data.data() + i * o * ho * wo;
        im2col(x.data.data() + i * c * h * w, c, h, w, kh, kw, spec, cols.data());
        if (gk)
            gemm_nt(gyi, cols.data(), gk->data.data(), o, ho * wo, ckk, true);
        if (gx) {
            gemm_tn(k.data.data(), gyi, gcols.data(), ckk, o, ho * wo, false);
            col2im_add(gcols.data(), c, h, w, kh, kw, spec, gx->data.data() + i * c * h * w);
        }
    }
}

}  // namespace phm
