#include <cmath>
#include <vector>

#include "doctest.h"
#include "ergolab/errors.hpp"
#include "ergolab/model.hpp"
#include "ergolab/observables.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/spectra.hpp"

using namespace ergolab;

namespace {

EigenSystem system_for(std::size_t n, double eps, std::uint64_t seed) {
    const auto spec = build_unperturbed_spectrum(n, 1.0);
    PerturbationParams p;
    p.epsilon = eps;
    p.band_cutoff = n / 3;
    p.seed = seed;
    return diagonalize(assemble_hamiltonian(spec, sample_perturbation(spec, p)));
}

}  // namespace

TEST_SUITE("observables") {
    TEST_CASE("builders") {
        const auto A = make_diagonal_profile(10, [](double x) { return 2 * x; });
        CHECK(A.diagonal(5) == doctest::Approx(1.0));
        CHECK(A.band_width() == 0);
        const auto B = make_banded_random(50, 3, 0.5, 9);
        CHECK(B.band_width() == 3);
        CHECK(B.matrix()(10, 14) == 0.0);
        CHECK(B.matrix()(10, 13) == B.matrix()(13, 10));
        CHECK(B.square_diagonal(7) == doctest::Approx(B.matrix().row(7).squaredNorm()));
        const auto B2 = make_banded_random(50, 3, 0.5, 9);
        CHECK((B.matrix() - B2.matrix()).norm() == 0.0);
        CHECK_THROWS_AS(make_banded_random(5, 5, 1.0, 1), ConfigError);
        SymmetricMatrix m(4);
        m.set(0, 3, 1.0);
        CHECK(make_custom(m).band_width() == 3);
    }

    TEST_CASE("expectations agree with c^T A c") {
        const auto s = system_for(60, 1.5, 2);
        for (std::size_t w : {2ul, 30ul}) {
            const auto A = make_banded_random(60, w, 1.0, 4);
            const auto all = all_eigenstate_expectations(s, A);
            for (std::size_t i : {0ul, 17ul, 59ul}) {
                const Eigen::VectorXd c = s.vectors.col(static_cast<Eigen::Index>(i));
                const double direct = c.dot(A.matrix() * c);
                CHECK(eigenstate_expectation(s, A, i) == doctest::Approx(direct).epsilon(1e-12));
                CHECK(all(static_cast<Eigen::Index>(i)) == doctest::Approx(direct).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("microcanonical averages of a linear profile") {
        const std::size_t n = 200;
        const auto spec = build_unperturbed_spectrum(n, 1.0);
        const auto A = make_diagonal_profile(n, [](double x) { return x; });
        MicrocanonicalWindow w{100.0, 10.0, Weighting::flat, 0.0};
        CHECK(microcanonical_average(A, spec, w) == doctest::Approx(100.0 / n));
        w.weighting = Weighting::lorentzian;
        w.delta = 3.0;
        CHECK(microcanonical_average(A, spec, w) == doctest::Approx(100.0 / n));
        // population variance of 21 consecutive values j/n
        CHECK(unperturbed_variance(A, spec, w) == doctest::Approx((21.0 * 21.0 - 1.0) / 12.0 / (n * n)));
        w.half_width = 0.1;
        w.center = 100.5;
        CHECK_THROWS_AS(microcanonical_average(A, spec, w), ConfigError);
    }

    TEST_CASE("envelope-weighted average with a delta envelope") {
        const auto A = make_diagonal_profile(30, [](double x) { return x * x; });
        LagProfile delta;
        delta.min_lag = 0;
        delta.values = {1.0};
        CHECK(envelope_weighted_average(A, delta, 12) == doctest::Approx(A.diagonal(12)));
    }

    TEST_CASE("predicted variance against a brute-force double sum") {
        const std::size_t n = 80;
        const auto A = make_banded_random(n, 2, 1.0, 21);
        const auto lam = lorentzian_profile(1.0, 3.0, 30);
        for (std::size_t i : {5ul, 40ul, 78ul}) {
            double exact = 0, micro = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const double lj = lam.at(static_cast<int>(i) - static_cast<int>(j));
                micro += lj * A.square_diagonal(j);
                for (std::size_t k = 0; k < n; ++k)
                    exact += lj * lam.at(static_cast<int>(i) - static_cast<int>(k)) * A.matrix()(j, k) *
                             A.matrix()(j, k);
            }
            const auto p = eth_variance_predicted(lam, A, i);
            CHECK(p.exact_sum == doctest::Approx(2 * exact).epsilon(1e-12));
            CHECK(p.upper_bound == doctest::Approx(2 * lam.peak() * micro).epsilon(1e-12));
            CHECK(p.exact_sum <= p.upper_bound);
        }
        const auto p = eth_variance_predicted(lam, A, 40);
        CHECK(p.gaussian_regime);
        CHECK(p.peak == doctest::Approx(lam.at(0)));
    }

    TEST_CASE("measured variance of known Gaussian samples") {
        Rng r(8);
        std::vector<std::vector<double>> s(2000, std::vector<double>(2));
        for (auto& row : s)
            for (auto& v : row) v = 1.0 + 2.0 * r.normal();
        const auto m = eth_variance_measured(s, 200, 3);
        CHECK(m.variance == doctest::Approx(4.0).epsilon(0.06));
        CHECK(m.standard_error > 0.0);
        CHECK(m.standard_error < 0.3);
        std::vector<std::vector<double>> one(1, std::vector<double>(30, 1.0));
        CHECK_THROWS_AS(eth_variance_measured(one), ConfigError);
    }
}
