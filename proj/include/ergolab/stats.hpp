#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ergolab {

double mean(std::span<const double> x);
// unbiased (n-1) sample variance
double sample_variance(std::span<const double> x);
// divides by n
double population_variance(std::span<const double> x);
double standard_error(std::span<const double> x);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t points = 0;
};

// Ordinary least squares y = intercept + slope x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);
// Same fit on (log x, log y).
LinearFit loglog_fit(std::span<const double> x, std::span<const double> y);

// Bootstrap standard error of a statistic over `count` independent units
// (realizations). `statistic` receives the resampled unit indices.
double bootstrap_se(std::size_t count,
                    const std::function<double(const std::vector<std::size_t>&)>& statistic,
                    std::size_t resamples, std::uint64_t seed);

}  // namespace ergolab
