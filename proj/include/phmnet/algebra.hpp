#pragma once

// Hypercomplex algebra primitives: Hamilton products, the circulant
// permutation tau, the +-1 sign-rule matrix L, Kronecker products, and the
// signed-permutation matrices that assemble a PHM operator H = sum A_i (x) S_i.

#include <array>
#include <cstddef>
#include <vector>

#include "phmnet/tensor.hpp"

namespace phm {

struct Quaternion {
    double r = 0, x = 0, y = 0, z = 0;
};

inline Quaternion hamilton_product(const Quaternion& p, const Quaternion& q) {
    return Quaternion{
        p.r * q.r - p.x * q.x - p.y * q.y - p.z * q.z,
        p.r * q.x + p.x * q.r + p.y * q.z - p.z * q.y,
        p.r * q.y - p.x * q.z + p.y * q.r + p.z * q.x,
        p.r * q.z + p.x * q.y - p.y * q.x + p.z * q.r,
    };
}

inline double quat_norm2(const Quaternion& q) {
    return q.r * q.r + q.x * q.x + q.y * q.y + q.z * q.z;
}

// Circular right shift: component i takes component i-1, component 1 takes
// component D. Applied `power` times.
template <typename T>
std::vector<T> permute_tau(std::vector<T> v, std::size_t power = 1) {
    const std::size_t d = v.size();
    if (d == 0) return v;
    power %= d;
    std::vector<T> out(d);
    for (std::size_t i = 0; i < d; ++i) out[(i + power) % d] = std::move(v[i]);
    return out;
}

struct LMatrix {
    std::size_t dim = 0;
    Tensor entries;  // [dim, dim]
};

// Sign rule: +1 on the first row, the diagonal, and column (2i-1 wrapped
// into 1..D); -1 elsewhere.
inline LMatrix build_L_matrix(std::size_t d) {
    if (d < 1) throw ShapeError("build_L_matrix: dimension must be >= 1");
    LMatrix l{d, Tensor({d, d})};
    for (std::size_t i = 1; i <= d; ++i) {
        std::size_t cal = 2 * i - 1;
        while (cal > d) cal -= d;
        for (std::size_t j = 1; j <= d; ++j) {
            const bool plus = (i == 1) || (i == j) || (j == cal);
            l.entries.at2(i - 1, j - 1) = plus ? 1.0 : -1.0;
        }
    }
    return l;
}

inline Tensor kron(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("kron: expected 2-D operands");
    const std::size_t m = a.shape[0], n = a.shape[1], p = b.shape[0], q = b.shape[1];
    Tensor out({m * p, n * q});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double av = a.at2(i, j);
            if (av == 0.0) continue;
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t s = 0; s < q; ++s)
                    out.at2(i * p + r, j * q + s) = av * b.at2(r, s);
        }
    return out;
}

// The fixed structure matrices A_1..A_N of a PHM layer. Each is a signed
// permutation; together their supports tile the N x N grid and A_1 = I.
struct SignMatrixSet {
    std::size_t n = 0;
    std::vector<Tensor> matrices;  // N matrices, each [n, n]

    // support of matrix t: row i -> (col, sign); cached for fast assembly
    struct Entry {
        std::size_t col;
        double sign;
    };
    std::vector<std::vector<Entry>> support;  // [t][row]

    void rebuild_support() {
        support.assign(matrices.size(), {});
        for (std::size_t t = 0; t < matrices.size(); ++t) {
            support[t].resize(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double v = matrices[t].at2(i, j);
                    if (v != 0.0) support[t][i] = {j, v};
                }
        }
    }
};

// N=4 uses the Hamilton multiplication pattern so that PHM at four
// dimensions reproduces the quaternion product. Other N use circulant
// placement (matrix t puts its value at column i+t-1, wrapped) signed by
// build_L_matrix(n).
inline SignMatrixSet build_phm_sign_matrices(std::size_t n) {
    if (n < 1) throw ShapeError("build_phm_sign_matrices: dimension must be >= 1");
    SignMatrixSet set;
    set.n = n;
    set.matrices.assign(n, Tensor({n, n}));
    if (n == 4) {
        // decomposition of the quaternion right-multiplication matrix:
        // rows act on (r, x, y, z)
        static constexpr int src[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
        static constexpr int sgn[4][4] = {{+1, -1, -1, -1}, {+1, +1, -1, +1},
                                          {+1, +1, +1, -1}, {+1, -1, +1, +1}};
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                set.matrices[src[i][j]].at2(i, j) = sgn[i][j];
    } else {
        const LMatrix l = build_L_matrix(n);
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = (i + t) % n;
                set.matrices[t].at2(i, j) = (t == 0) ? 1.0 : l.entries.at2(i, j);
            }
    }
    set.rebuild_support();
    return set;
}

// H = sum_i A_i (x) S_i with all S_i of shape [k/N, d/N].
inline Tensor assemble_H(const SignMatrixSet& a, const std::vector<Tensor>& s) {
    if (s.size() != a.n)
        throw ShapeError("assemble_H: expected " + std::to_string(a.n) + " blocks, got " +
                         std::to_string(s.size()));
    for (std::size_t t = 1; t < s.size(); ++t) check_same_shape(s[0], s[t], "assemble_H");
    const std::size_t kb = s[0].shape[0], db = s[0].shape[1];
    Tensor h({a.n * kb, a.n * db});
    for (std::size_t t = 0; t < a.n; ++t)
        for (std::size_t i = 0; i < a.n; ++i) {
            const auto& e = a.support[t][i];
            const double sign = e.sign;
            if (sign == 0.0) continue;
            for (std::size_t r = 0; r < kb; ++r)
                for (std::size_t c = 0; c < db; ++c)
                    h.at2(i * kb + r, e.col * db + c) += sign * s[t].at2(r, c);
        }
    return h;
}

}  // namespace phm
