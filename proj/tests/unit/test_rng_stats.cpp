#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "ergolab/rng.hpp"
#include "ergolab/stats.hpp"

using namespace ergolab;

TEST_SUITE("rng") {
    TEST_CASE("same seed gives the same stream") {
        Rng a(42), b(42), c(43);
        bool differs = false;
        for (int k = 0; k < 1000; ++k) {
            const auto x = a.next();
            CHECK(x == b.next());
            differs = differs || x != c.next();
        }
        CHECK(differs);
    }

    TEST_CASE("substreams are distinct") {
        std::set<std::uint64_t> seen;
        for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(substream_seed(7, k));
        CHECK(seen.size() == 1000);
        CHECK(substream_seed(7, 3) == substream_seed(7, 3));
        CHECK(substream_seed(7, 3) != substream_seed(8, 3));
    }

    TEST_CASE("uniform and normal moments") {
        Rng r(2024);
        const int n = 200000;
        double su = 0, su2 = 0, sn = 0, sn2 = 0, sn4 = 0;
        for (int k = 0; k < n; ++k) {
            const double u = r.uniform();
            REQUIRE(u >= 0.0);
            REQUIRE(u < 1.0);
            su += u;
            su2 += u * u;
            const double z = r.normal();
            sn += z;
            sn2 += z * z;
            sn4 += z * z * z * z;
        }
        CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
        CHECK(su2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
        CHECK(std::abs(sn / n) < 0.01);
        CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
        CHECK(sn4 / n == doctest::Approx(3.0).epsilon(0.03));
    }

    TEST_CASE("uniform_open never hits the ends and below stays in range") {
        Rng r(5);
        std::vector<int> hist(7, 0);
        for (int k = 0; k < 70000; ++k) {
            const double u = r.uniform_open();
            REQUIRE(u > 0.0);
            REQUIRE(u < 1.0);
            const auto b = r.below(7);
            REQUIRE(b < 7);
            ++hist[b];
        }
        for (int h : hist) CHECK(h == doctest::Approx(10000).epsilon(0.05));
    }
}

TEST_SUITE("stats") {
    TEST_CASE("variance conventions") {
        const std::vector<double> x = {1, 2, 3, 4};
        CHECK(mean(x) == doctest::Approx(2.5));
        CHECK(sample_variance(x) == doctest::Approx(5.0 / 3.0));
        CHECK(population_variance(x) == doctest::Approx(1.25));
        CHECK(standard_error(x) == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    }

    TEST_CASE("linear fit recovers an exact line and its slope error vanishes") {
        std::vector<double> x, y;
        for (int k = 0; k < 10; ++k) {
            x.push_back(k);
            y.push_back(3.0 - 0.5 * k);
        }
        const auto f = linear_fit(x, y);
        CHECK(f.slope == doctest::Approx(-0.5));
        CHECK(f.intercept == doctest::Approx(3.0));
        CHECK(f.slope_se < 1e-12);
        CHECK(f.points == 10);
    }

    TEST_CASE("loglog fit of a power law") {
        std::vector<double> x, y;
        for (double v : {1.0, 2.0, 4.0, 8.0}) {
            x.push_back(v);
            y.push_back(7.0 * v * v);
        }
        CHECK(loglog_fit(x, y).slope == doctest::Approx(2.0));
    }

    TEST_CASE("slope standard error matches the textbook formula") {
        const std::vector<double> x = {0, 1, 2, 3, 4}, y = {0.1, 0.9, 2.2, 2.8, 4.1};
        const auto f = linear_fit(x, y);
        double sse = 0;
        for (int k = 0; k < 5; ++k) {
            const double e = y[k] - (f.intercept + f.slope * x[k]);
            sse += e * e;
        }
        CHECK(f.slope_se == doctest::Approx(std::sqrt(sse / 3.0 / 10.0)));
    }

    TEST_CASE("bootstrap SE of a mean is close to s/sqrt(n)") {
        Rng r(9);
        std::vector<double> x(400);
        for (auto& v : x) v = r.normal();
        const double se = bootstrap_se(
            x.size(),
            [&](const std::vector<std::size_t>& idx) {
                double s = 0;
                for (auto k : idx) s += x[k];
                return s / static_cast<double>(idx.size());
            },
            2000, 11);
        CHECK(se == doctest::Approx(standard_error(x)).epsilon(0.1));
    }
}
