#include "ergolab/stats.hpp"

#include <cmath>
#include <stdexcept>

#include "ergolab/rng.hpp"

namespace ergolab {

double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean: empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double population_variance(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

double standard_error(std::span<const double> x) {
    return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("linear_fit: size mismatch");
    if (x.size() < 2) throw std::invalid_argument("linear_fit: need at least 2 points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    LinearFit f;
    f.points = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            rss += r * r;
        }
        f.slope_se = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
    }
    return f;
}

LinearFit loglog_fit(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("loglog_fit: nonpositive value");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly);
}

double bootstrap_se(std::size_t count,
                    const std::function<double(const std::vector<std::size_t>&)>& statistic,
                    std::size_t resamples, std::uint64_t seed) {
    if (count < 2) throw std::invalid_argument("bootstrap_se: need at least 2 units");
    if (resamples < 2) throw std::invalid_argument("bootstrap_se: need at least 2 resamples");
    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(resamples);
    std::vector<std::size_t> idx(count);
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& k : idx) k = rng.below(count);
        stats.push_back(statistic(idx));
    }
    return std::sqrt(sample_variance(stats));
}

}  // namespace ergolab
