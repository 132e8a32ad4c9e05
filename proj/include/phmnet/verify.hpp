#pragma once

// Self-contained algebra identity suite: Hamilton identities, tau
// cyclicity, L-matrix rule outputs, Kronecker properties, the
// signed-permutation structure of the PHM matrices, and the printed
// five-dimensional H reproduction (including its one deviating cell).

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phmnet/algebra.hpp"
#include "phmnet/layers.hpp"

namespace phm {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {
inline void check(std::vector<CheckResult>& out, const std::string& name, bool ok,
                  const std::string& info = "") {
    out.push_back({name, ok, info});
}
}  // namespace detail

// The five printed structure matrices for N = 5 and the printed right-hand
// side of the assembled H (which carries a sign typo at cell (4,2)).
inline std::vector<Tensor> printed_A5() {
    auto mat = [](std::initializer_list<double> v) { return Tensor({5, 5}, std::vector<double>(v)); };
    return {
        mat({1,0,0,0,0, 0,1,0,0,0, 0,0,1,0,0, 0,0,0,1,0, 0,0,0,0,1}),
        mat({0,1,0,0,0, 0,0,1,0,0, 0,0,0,-1,0, 0,0,0,0,-1, -1,0,0,0,0}),
        mat({0,0,1,0,0, 0,0,0,-1,0, 0,0,0,0,1, -1,0,0,0,0, 0,-1,0,0,0}),
        mat({0,0,0,1,0, 0,0,0,0,-1, -1,0,0,0,0, 0,1,0,0,0, 0,0,-1,0,0}),
        mat({0,0,0,0,1, -1,0,0,0,0, 0,-1,0,0,0, 0,0,-1,0,0, 0,0,0,1,0}),
    };
}

// Printed RHS with symbols P_r..P_z encoded as signed indices 1..5.
inline Tensor printed_H5_pattern() {
    return Tensor({5, 5}, {1,  2,  3,  4,  5,
                           -5, 1,  2,  -3, -4,
                           -4, -5, 1,  -2, 3,
                           -3, -4, -5, 1,  -2,
                           -2, -3, -4, 5,  1});
}

struct Eq7Report {
    bool a_matrices_match = false;
    int matching_cells = 0;       // out of 25
    std::vector<std::pair<std::size_t, std::size_t>> deviating_cells;  // 1-based
    std::string text;
};

// Assemble H from the generated A_1..A_5 with scalar blocks and compare
// cell by cell against the printed matrix. The Kronecker sum is treated as
// authoritative; the printed matrix deviates at exactly one cell.
inline Eq7Report verify_eq7_reproduction() {
    Eq7Report rep;
    const SignMatrixSet set = build_phm_sign_matrices(5);
    const auto printed = printed_A5();
    rep.a_matrices_match = true;
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t i = 0; i < 25; ++i)
            if (set.matrices[t].data[i] != printed[t].data[i]) rep.a_matrices_match = false;

    // scalar blocks: S_t = [t+1] so each cell of H identifies its source
    std::vector<Tensor> scalars;
    for (double v : {1.0, 2.0, 3.0, 4.0, 5.0}) scalars.push_back(Tensor({1, 1}, {v}));
    const Tensor h = assemble_H(set, scalars);
    const Tensor expect = printed_H5_pattern();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            if (h.at2(i, j) == expect.at2(i, j))
                ++rep.matching_cells;
            else
                rep.deviating_cells.push_back({i + 1, j + 1});
        }
    std::ostringstream os;
    os << "five-dimensional H reproduction: " << rep.matching_cells
       << "/25 cells match the printed matrix";
    for (auto [i, j] : rep.deviating_cells) {
        os << "; cell (" << i << "," << j << ") assembles to "
           << (assemble_H(set, scalars).at2(i - 1, j - 1) > 0 ? "+" : "-") << "P_"
           << "rwxyz"[static_cast<int>(std::fabs(h.at2(i - 1, j - 1))) - 1]
           << " while the printed matrix shows the opposite sign (treated as a print error)";
    }
    rep.text = os.str();
    return rep;
}

inline std::vector<CheckResult> run_verification() {
    using detail::check;
    std::vector<CheckResult> out;
    Rng rng(12345);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto near = [](double a, double b, double tol) { return std::fabs(a - b) <= tol; };

    // ---- Hamilton identities ----
    {
        const Quaternion one{1, 0, 0, 0}, qi{0, 1, 0, 0}, qj{0, 0, 1, 0}, qk{0, 0, 0, 1};
        auto eq = [&](const Quaternion& a, const Quaternion& b) {
            return a.r == b.r && a.x == b.x && a.y == b.y && a.z == b.z;
        };
        check(out, "hamilton: 1*q = q", eq(hamilton_product(one, qj), qj));
        check(out, "hamilton: i^2 = -1", eq(hamilton_product(qi, qi), Quaternion{-1, 0, 0, 0}));
        check(out, "hamilton: j^2 = -1", eq(hamilton_product(qj, qj), Quaternion{-1, 0, 0, 0}));
        check(out, "hamilton: k^2 = -1", eq(hamilton_product(qk, qk), Quaternion{-1, 0, 0, 0}));
        check(out, "hamilton: i*j = k", eq(hamilton_product(qi, qj), qk));
        check(out, "hamilton: j*k = i", eq(hamilton_product(qj, qk), qi));
        check(out, "hamilton: k*i = j", eq(hamilton_product(qk, qi), qj));
        check(out, "hamilton: i*j*k = -1",
              eq(hamilton_product(hamilton_product(qi, qj), qk), Quaternion{-1, 0, 0, 0}));
        bool norm_ok = true;
        for (int t = 0; t < 100; ++t) {
            Quaternion p{dist(rng), dist(rng), dist(rng), dist(rng)};
            Quaternion q{dist(rng), dist(rng), dist(rng), dist(rng)};
            const double lhs = quat_norm2(hamilton_product(p, q));
            const double rhs = quat_norm2(p) * quat_norm2(q);
            if (!near(lhs, rhs, 1e-10 * std::max(1.0, rhs))) norm_ok = false;
        }
        check(out, "hamilton: |pq|^2 = |p|^2 |q|^2 (random)", norm_ok);
    }

    // ---- tau cyclicity ----
    {
        const std::vector<int> v{1, 2, 3};
        check(out, "tau: tau([v1,v2,v3]) = [v3,v1,v2]",
              permute_tau(v) == std::vector<int>{3, 1, 2});
        check(out, "tau: tau^2([v1,v2,v3]) = [v2,v3,v1]",
              permute_tau(v, 2) == std::vector<int>{2, 3, 1});
        bool cyc = true;
        for (std::size_t d = 1; d <= 8; ++d) {
            std::vector<int> w(d);
            for (std::size_t i = 0; i < d; ++i) w[i] = static_cast<int>(i);
            if (permute_tau(w, d) != w) cyc = false;
            // bijection: one application hits every slot exactly once
            auto t1 = permute_tau(w, 1);
            std::vector<int> seen(d, 0);
            for (int e : t1) ++seen[static_cast<std::size_t>(e)];
            for (int s : seen)
                if (s != 1) cyc = false;
        }
        check(out, "tau: bijection and tau^D = identity for D <= 8", cyc);
    }

    // ---- L-matrix rule ----
    {
        auto expect_L = [&](std::size_t d, std::vector<double> v) {
            const auto l = build_L_matrix(d);
            return l.entries.data == v;
        };
        check(out, "L-matrix: d=1", expect_L(1, {1}));
        check(out, "L-matrix: d=3", expect_L(3, {1, 1, 1, -1, 1, 1, -1, 1, 1}));
        check(out, "L-matrix: d=5",
              expect_L(5, {1, 1, 1, 1, 1, -1, 1, 1, -1, -1, -1, -1, 1, -1, 1,
                           -1, 1, -1, 1, -1, -1, -1, -1, 1, 1}));
    }

    // ---- Kronecker product ----
    {
        const Tensor i2 = Tensor::identity(2);
        const Tensor s({1, 1}, {3.0});
        const Tensor k1 = kron(i2, s);
        check(out, "kron: I2 (x) [s] = s*I2",
              k1.data == std::vector<double>{3, 0, 0, 3});
        bool mixed = true;
        for (int t = 0; t < 20; ++t) {
            Tensor a({2, 3}), b({3, 2}), x({3, 2}), y({2, 3});
            for (auto* m : {&a, &b, &x, &y})
                for (auto& v : m->data) v = dist(rng);
            // (a (x) b)(x (x) y) == (a x) (x) (b y)
            const Tensor lhs = matmul(kron(a, b), kron(x, y));
            const Tensor rhs = kron(matmul(a, x), matmul(b, y));
            for (std::size_t i = 0; i < lhs.size(); ++i)
                if (!near(lhs.data[i], rhs.data[i], 1e-10)) mixed = false;
        }
        check(out, "kron: mixed-product property (random)", mixed);
    }

    // ---- signed-permutation / tiling structure of A_1..A_N ----
    {
        bool ok = true;
        std::string fail;
        for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{4},
                              std::size_t{5}}) {
            const auto set = build_phm_sign_matrices(n);
            Tensor tiling({n, n});
            for (std::size_t t = 0; t < n; ++t) {
                const Tensor& a = set.matrices[t];
                for (std::size_t i = 0; i < n; ++i) {
                    int row_nz = 0, col_nz = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (a.at2(i, j) != 0.0) ++row_nz;
                        if (a.at2(j, i) != 0.0) ++col_nz;
                        tiling.at2(i, j) += std::fabs(a.at2(i, j));
                    }
                    if (row_nz != 1 || col_nz != 1) ok = false;
                }
            }
            for (double v : tiling.data)
                if (v != 1.0) ok = false;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (set.matrices[0].at2(i, j) != (i == j ? 1.0 : 0.0)) ok = false;
            if (!ok && fail.empty()) fail = "n=" + std::to_string(n);
        }
        check(out, "A_i: signed permutations, disjoint supports tile NxN, A_1 = I", ok, fail);
    }

    // ---- N=4 bridge: PHM with scalar blocks is the Hamilton product ----
    {
        const auto set = build_phm_sign_matrices(4);
        bool ok = true;
        for (int t = 0; t < 200; ++t) {
            std::vector<Tensor> s;
            Quaternion p{dist(rng), dist(rng), dist(rng), dist(rng)};
            for (double v : {p.r, p.x, p.y, p.z}) s.push_back(Tensor({1, 1}, {v}));
            const Tensor h = assemble_H(set, s);
            Quaternion q{dist(rng), dist(rng), dist(rng), dist(rng)};
            const Tensor v({4, 1}, {q.r, q.x, q.y, q.z});
            const Tensor hv = matmul(h, v);
            const Quaternion pq = hamilton_product(p, q);
            const double err = std::max({std::fabs(hv.data[0] - pq.r), std::fabs(hv.data[1] - pq.x),
                                         std::fabs(hv.data[2] - pq.y),
                                         std::fabs(hv.data[3] - pq.z)});
            if (err > 1e-12) ok = false;
        }
        check(out, "bridge: PHM(n=4, scalar blocks) = Hamilton product (random)", ok);
    }

    // ---- cross-construction: L(n) signs vs sum_i A_i (x) [1] ----
    // (holds for the circulant-constructed dimensions; n=4 follows the
    // Hamilton pattern instead, which the bridge check above pins down)
    {
        bool ok = true;
        for (std::size_t n : {std::size_t{3}, std::size_t{5}}) {
            const auto set = build_phm_sign_matrices(n);
            std::vector<Tensor> ones(n, Tensor({1, 1}, {1.0}));
            const Tensor h = assemble_H(set, ones);
            const auto l = build_L_matrix(n);
            for (std::size_t i = 0; i < n * n; ++i)
                if (h.data[i] != l.entries.data[i]) ok = false;
        }
        check(out, "cross-construction: signs of sum A_i(x)[1] equal L(n) for n in {3,5}", ok);
    }

    // ---- printed five-dimensional H ----
    {
        const auto rep = verify_eq7_reproduction();
        check(out, "printed A_1..A_5 reproduced exactly", rep.a_matrices_match);
        check(out,
              "assembled H matches printed matrix at 24/25 cells with the (4,2) sign deviation",
              rep.matching_cells == 24 && rep.deviating_cells.size() == 1 &&
                  rep.deviating_cells[0] == std::make_pair(std::size_t{4}, std::size_t{2}),
              rep.text);
    }

    return out;
}

}  // namespace phm
