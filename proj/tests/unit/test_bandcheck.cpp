#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ergolab/bandcheck.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/rng.hpp"

using namespace ergolab;

namespace {

// First-quantized reference: the operator sum_{p != q} sum V_jklm |j><m|_p |k><l|_q on the
// M^P product space, projected onto (anti)symmetrized occupation states.
Eigen::MatrixXd first_quantized(const FockSystem& sys, const TwoBodyPotential& V) {
    const std::size_t M = sys.levels.size(), P = sys.particles;
    std::size_t D = 1;
    for (std::size_t k = 0; k < P; ++k) D *= M;
    auto digits = [&](std::size_t x) {
        std::vector<std::size_t> d(P);
        for (std::size_t k = P; k-- > 0;) {
            d[k] = x % M;
            x /= M;
        }
        return d;
    };
    auto encode = [&](const std::vector<std::size_t>& d) {
        std::size_t x = 0;
        for (auto v : d) x = x * M + v;
        return x;
    };
    Eigen::MatrixXd O = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    for (std::size_t col = 0; col < D; ++col) {
        const auto in = digits(col);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t q = 0; q < P; ++q) {
                if (p == q) continue;
                for (std::size_t j = 0; j < M; ++j)
                    for (std::size_t k = 0; k < M; ++k) {
                        auto out = in;
                        out[p] = j;
                        out[q] = k;
                        O(static_cast<Eigen::Index>(encode(out)), static_cast<Eigen::Index>(col)) +=
                            V(j, k, in[q], in[p]);
                    }
            }
    }
    const bool fermi = sys.statistics == Statistics::fermion;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(sys.size()));
    for (std::size_t a = 0; a < sys.size(); ++a) {
        std::vector<std::size_t> modes;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t c = 0; c < sys.basis[a][i]; ++c) modes.push_back(i);
        std::vector<std::size_t> perm(P);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            std::vector<std::size_t> d(P);
            for (std::size_t k = 0; k < P; ++k) d[k] = modes[perm[k]];
            int sign = 1;
            if (fermi)
                for (std::size_t x = 0; x < P; ++x)
                    for (std::size_t y = x + 1; y < P; ++y)
                        if (perm[x] > perm[y]) sign = -sign;
            S(static_cast<Eigen::Index>(encode(d)), static_cast<Eigen::Index>(a)) += sign;
        } while (std::next_permutation(perm.begin(), perm.end()));
        S.col(static_cast<Eigen::Index>(a)).normalize();
    }
    return S.transpose() * O * S;
}

TwoBodyPotential random_hermitian(std::size_t M, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> g(M * M * M * M);
    for (auto& v : g) v = r.normal();
    auto at = [&](std::size_t j, std::size_t k, std::size_t l, std::size_t m) { return g[((j * M + k) * M + l) * M + m]; };
    return make_potential(M, [&](std::size_t j, std::size_t k, std::size_t l, std::size_t m) {
        return at(j, k, l, m) + at(m, l, k, j);
    });
}

}  // namespace

TEST_SUITE("bandcheck") {
    TEST_CASE("basis sizes and ordering") {
        const auto b = build_fock_system(4, 3, Statistics::boson);
        CHECK(b.size() == 20);
        CHECK(std::is_sorted(b.basis.begin(), b.basis.end()));
        const auto f = build_fock_system(5, 2, Statistics::fermion);
        CHECK(f.size() == 10);
        const auto capped = build_fock_system(5, 2, Statistics::boson, 1.0, 1);
        CHECK(capped.size() == 10);
        for (std::size_t a = 0; a < b.size(); ++a) {
            double e = 0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                e += b.basis[a][i] * static_cast<double>(i);
                n += b.basis[a][i];
            }
            CHECK(n == 3);
            CHECK(b.energies[a] == doctest::Approx(e));
            CHECK(b.index.at(b.basis[a]) == a);
        }
        const auto lv = b.energy_levels();
        std::size_t total = 0;
        for (const auto& [e, m] : lv) total += m;
        CHECK(total == 20);
        CHECK_THROWS_AS(build_fock_system(40, 12, Statistics::boson), ConfigError);
        CHECK_THROWS_AS(build_fock_system(3, 4, Statistics::fermion), ConfigError);
    }

    TEST_CASE("potential symmetry") {
        const auto V = make_gaussian_potential(6, 2.0, 1.5);
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t k = 0; k < 6; ++k)
                for (std::size_t l = 0; l < 6; ++l)
                    for (std::size_t m = 0; m < 6; ++m) {
                        REQUIRE(V(j, k, l, m) == V(m, l, k, j));
                        const double q2 = std::pow(double(j) - double(m), 2) + std::pow(double(k) - double(l), 2);
                        REQUIRE(V(j, k, l, m) == doctest::Approx(1.5 * std::exp(-q2 / 16.0)));
                    }
        CHECK(V.bound() == doctest::Approx(1.5));
        CHECK_THROWS_AS(make_potential(2, [](std::size_t j, std::size_t, std::size_t, std::size_t) {
                            return static_cast<double>(j);
                        }),
                        ConfigError);
    }

    TEST_CASE("second-quantized matrix equals the first-quantized oracle") {
        for (auto st : {Statistics::boson, Statistics::fermion}) {
            const auto sys = build_fock_system(4, 3, st);
            const auto V = random_hermitian(4, st == Statistics::boson ? 1 : 2);
            const Eigen::MatrixXd ref = first_quantized(sys, V);
            const Eigen::MatrixXd got = Eigen::MatrixXd(two_body_matrix(sys, V));
            CHECK((ref - got).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((got - got.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            for (std::size_t a = 0; a < sys.size(); a += 3)
                for (std::size_t b = 0; b < sys.size(); b += 2)
                    CHECK(matrix_element(sys, V, a, b) ==
                          doctest::Approx(got(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))));
        }
    }

    TEST_CASE("temperature from the entropy slope") {
        const auto sys = build_fock_system(8, 4, Statistics::boson);
        const double T = finite_difference_temperature(sys, 5.6, 1.0);
        CHECK(T > 0.0);
        CHECK_THROWS_AS(finite_difference_temperature(sys, 5.6, 0.0), ConfigError);
    }

    TEST_CASE("averaged elements fall off with the gap") {
        const auto sys = build_fock_system(8, 4, Statistics::boson);
        const auto r = averaged_offdiagonal_decay(sys, make_gaussian_potential(8, 8.0));
        CHECK(r.temperature > 0.0);
        CHECK(r.bins.size() >= 5);
        CHECK(r.decreasing_beyond_T);
        CHECK(r.slope < 0.0);
        CHECK(!r.warnings.empty());  // empty high-gap bins are reported
        CHECK_THROWS_AS(averaged_offdiagonal_decay(sys, make_gaussian_potential(6, 8.0)), ConfigError);
    }
}
