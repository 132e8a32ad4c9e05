#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "phmnet/algebra.hpp"
#include "phmnet/verify.hpp"

using namespace phm;

TEST_CASE("hamilton product identities") {
    const Quaternion qi{0, 1, 0, 0}, qj{0, 0, 1, 0}, qk{0, 0, 0, 1};
    auto eq = [](const Quaternion& a, const Quaternion& b) {
        return a.r == b.r && a.x == b.x && a.y == b.y && a.z == b.z;
    };
    CHECK(eq(hamilton_product(qi, qi), Quaternion{-1, 0, 0, 0}));
    CHECK(eq(hamilton_product(qj, qj), Quaternion{-1, 0, 0, 0}));
    CHECK(eq(hamilton_product(qk, qk), Quaternion{-1, 0, 0, 0}));
    CHECK(eq(hamilton_product(qi, qj), qk));
    CHECK(eq(hamilton_product(qj, qk), qi));
    CHECK(eq(hamilton_product(qk, qi), qj));
    CHECK(eq(hamilton_product(qj, qi), Quaternion{0, 0, 0, -1}));
    CHECK(eq(hamilton_product(hamilton_product(qi, qj), qk), Quaternion{-1, 0, 0, 0}));
}

TEST_CASE("hamilton norm multiplicativity") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const Quaternion p{dist(rng), dist(rng), dist(rng), dist(rng)};
        const Quaternion q{dist(rng), dist(rng), dist(rng), dist(rng)};
        const double lhs = quat_norm2(hamilton_product(p, q));
        const double rhs = quat_norm2(p) * quat_norm2(q);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("tau rotates one step per power and is cyclic") {
    const std::vector<int> v{1, 2, 3};
    CHECK(permute_tau(v) == std::vector<int>{3, 1, 2});
    CHECK(permute_tau(v, 2) == std::vector<int>{2, 3, 1});
    CHECK(permute_tau(v, 3) == v);
    for (std::size_t d = 1; d <= 8; ++d) {
        std::vector<int> w(d);
        for (std::size_t i = 0; i < d; ++i) w[i] = static_cast<int>(i);
        CHECK(permute_tau(w, d) == w);
    }
}

TEST_CASE("L matrix rule outputs for D in {1,3,5}") {
    CHECK(build_L_matrix(1).entries.data == std::vector<double>{1});
    CHECK(build_L_matrix(3).entries.data == std::vector<double>{1, 1, 1, -1, 1, 1, -1, 1, 1});
    CHECK(build_L_matrix(5).entries.data ==
          std::vector<double>{1, 1, 1, 1, 1, -1, 1, 1, -1, -1, -1, -1, 1, -1, 1,
                              -1, 1, -1, 1, -1, -1, -1, -1, 1, 1});
}

TEST_CASE("kron small example and shapes") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({1, 2}, {5, 6});
    const Tensor k = kron(a, b);
    CHECK(k.shape == Shape{2, 4});
    CHECK(k.data == std::vector<double>{5, 6, 10, 12, 15, 18, 20, 24});
}

TEST_CASE("n=4 sign matrices follow the Hamilton pattern") {
    const auto set = build_phm_sign_matrices(4);
    static constexpr int src[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
    static constexpr int sgn[4][4] = {{+1, -1, -1, -1}, {+1, +1, -1, +1},
                                      {+1, +1, +1, -1}, {+1, -1, +1, +1}};
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const double expect =
                    src[i][j] == static_cast<int>(t) ? static_cast<double>(sgn[i][j]) : 0.0;
                CHECK(set.matrices[t].at2(i, j) == expect);
            }
}

TEST_CASE("assembled n=5 H: first column reads P_r, -P_z, -P_y, -P_x, -P_w") {
    const auto set = build_phm_sign_matrices(5);
    std::vector<Tensor> scalars;
    for (double v : {1.0, 2.0, 3.0, 4.0, 5.0}) scalars.push_back(Tensor({1, 1}, {v}));
    const Tensor h = assemble_H(set, scalars);
    CHECK(h.at2(0, 0) == 1.0);
    CHECK(h.at2(1, 0) == -5.0);
    CHECK(h.at2(2, 0) == -4.0);
    CHECK(h.at2(3, 0) == -3.0);
    CHECK(h.at2(4, 0) == -2.0);
}

TEST_CASE("printed five-dimensional reproduction deviates only at cell (4,2)") {
    const Eq7Report rep = verify_eq7_reproduction();
    CHECK(rep.a_matrices_match);
    CHECK(rep.matching_cells == 24);
    REQUIRE(rep.deviating_cells.size() == 1);
    CHECK(rep.deviating_cells[0] == std::make_pair(std::size_t{4}, std::size_t{2}));
    CHECK(rep.text.find("+P_y") != std::string::npos);
    CHECK(rep.text.find("print error") != std::string::npos);
}

TEST_CASE("full verification suite passes") {
    for (const auto& r : run_verification()) {
        INFO(r.name << " " << r.detail);
        CHECK(r.pass);
    }
}
