#include "ergolab/observables.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ergolab/errors.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/stats.hpp"

namespace ergolab {

namespace {

std::size_t detect_band(const Eigen::MatrixXd& m) {
    std::size_t band = 0;
    const auto n = m.rows();
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = j + 1; k < n; ++k)
            if (m(j, k) != 0.0) band = std::max(band, static_cast<std::size_t>(k - j));
    return band;
}

}  // namespace

Observable::Observable(ObservableKind kind, Eigen::MatrixXd matrix, std::size_t band_width)
    : kind_(kind), m_(std::move(matrix)), band_(band_width) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) throw ConfigError("observable must be a nonempty square matrix");
    if (!m_.allFinite()) throw ConfigError("observable has non-finite entries");
    for (Eigen::Index j = 0; j < m_.rows(); ++j)
        for (Eigen::Index k = j + 1; k < m_.cols(); ++k) {
            if (m_(j, k) != m_(k, j)) throw ConfigError("observable is not symmetric");
            if (m_(j, k) != 0.0 && static_cast<std::size_t>(k - j) > band_)
                throw ConfigError("observable has entries beyond its declared band");
        }
    if (kind_ == ObservableKind::diagonal_profile && band_ != 0)
        throw ConfigError("diagonal profile must have zero off-diagonal entries");
}

double Observable::square_diagonal(std::size_t j) const {
    const std::size_t n = size();
    const std::size_t lo = j >= band_ ? j - band_ : 0;
    const std::size_t hi = std::min(n - 1, j + band_);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double v = m_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        s += v * v;
    }
    return s;
}

Observable make_diagonal_profile(std::size_t n, const std::function<double(double)>& f) {
    if (n == 0) throw ConfigError("observable dimension must be positive");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) m(j, j) = f(static_cast<double>(j) / static_cast<double>(n));
    return Observable(ObservableKind::diagonal_profile, std::move(m), 0);
}

Observable make_banded_random(std::size_t n, std::size_t width, double scale, std::uint64_t seed) {
    if (n == 0) throw ConfigError("observable dimension must be positive");
    if (width > n - 1) throw ConfigError("banded observable width exceeds n-1");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("banded observable scale must be positive");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k <= std::min(n - 1, j + width); ++k) {
            const double v = scale * rng.normal();
            m(j, k) = v;
            m(k, j) = v;
        }
    return Observable(ObservableKind::banded_random, std::move(m), width);
}

Observable make_custom(const SymmetricMatrix& s) {
    return Observable(ObservableKind::custom, s.dense(), detect_band(s.dense()));
}

double eigenstate_expectation(const EigenSystem& s, const Observable& A, std::size_t i) {
    if (i >= s.size()) throw ConfigError("eigenstate index out of range");
    if (A.size() != s.size()) throw ConfigError("observable/eigensystem dimension mismatch");
    const auto v = s.vectors.col(static_cast<Eigen::Index>(i));
    return v.dot(A.matrix() * v);
}

Eigen::VectorXd all_eigenstate_expectations(const EigenSystem& s, const Observable& A) {
    if (A.size() != s.size()) throw ConfigError("observable/eigensystem dimension mismatch");
    const Eigen::Index n = static_cast<Eigen::Index>(s.size());
    const Eigen::MatrixXd& C = s.vectors;
    const std::size_t w = A.band_width();
    if (w <= static_cast<std::size_t>(n) / 8) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (std::size_t o = 0; o <= w; ++o) {
            const Eigen::Index m = n - static_cast<Eigen::Index>(o);
            Eigen::VectorXd diag(m);
            for (Eigen::Index j = 0; j < m; ++j) diag(j) = A.matrix()(j, j + static_cast<Eigen::Index>(o));
            const Eigen::MatrixXd prod = C.topRows(m).cwiseProduct(C.bottomRows(m));
            out += (o == 0 ? 1.0 : 2.0) * (prod.transpose() * diag);
        }
        return out;
    }
    const Eigen::MatrixXd AC = A.matrix() * C;
    return C.cwiseProduct(AC).colwise().sum().transpose();
}

double microcanonical_average(const Observable& A, std::span<const double> levels, const MicrocanonicalWindow& w) {
    if (levels.size() != A.size()) throw ConfigError("observable/spectrum dimension mismatch");
    if (!(w.half_width > 0.0)) throw ConfigError("window half-width must be positive");
    std::vector<std::size_t> in;
    for (std::size_t j = 0; j < levels.size(); ++j)
        if (std::abs(levels[j] - w.center) <= w.half_width) in.push_back(j);
    if (in.empty()) throw ConfigError("microcanonical window contains no levels");
    if (w.weighting == Weighting::flat) {
        double s = 0.0;
        for (auto j : in) s += A.diagonal(j);
        return s / static_cast<double>(in.size());
    }
    if (w.delta <= 0.0) {
        std::size_t best = in.front();
        for (auto j : in)
            if (std::abs(levels[j] - w.center) < std::abs(levels[best] - w.center)) best = j;
        return A.diagonal(best);
    }
    const double spacing = (levels.back() - levels.front()) / static_cast<double>(levels.size() - 1);
    double s = 0.0, z = 0.0;
    for (auto j : in) {
        const double x = (levels[j] - w.center) / spacing;
        const double wt = (w.delta / std::numbers::pi) / (x * x + w.delta * w.delta);
        s += wt * A.diagonal(j);
        z += wt;
    }
    return s / z;
}

double microcanonical_average(const Observable& A, const UnperturbedSpectrum& spec, const MicrocanonicalWindow& w) {
    return microcanonical_average(A, std::span<const double>(spec.levels()), w);
}

double envelope_weighted_average(const Observable& A, const LagProfile& lambda, std::size_t i) {
    const long n = static_cast<long>(A.size());
    double s = 0.0;
    for (int r = lambda.min_lag; r <= lambda.max_lag(); ++r) {
        const long j = static_cast<long>(i) - r;
        if (j < 0 || j >= n) continue;
        s += lambda.at(r) * A.diagonal(static_cast<std::size_t>(j));
    }
    return s;
}

EthVarianceResult eth_variance_measured(const std::vector<std::vector<double>>& samples, std::size_t resamples,
                                        std::uint64_t seed) {
    const std::size_t R = samples.size();
    const std::size_t P = R ? samples.front().size() : 0;
    if (R < 2 || P == 0 || R * P < 20) throw ConfigError("too few samples for an ETH variance (need an ensemble)");
    for (const auto& row : samples)
        if (row.size() != P) throw ConfigError("ragged ETH sample table");

    auto stat = [&](const std::vector<std::size_t>& idx, std::vector<double>* per_var, std::vector<double>* per_mean) {
        double total = 0.0;
        std::vector<double> col(idx.size());
        for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t k = 0; k < idx.size(); ++k) col[k] = samples[idx[k]][p];
            const double v = sample_variance(col);
            if (per_var) per_var->push_back(v);
            if (per_mean) per_mean->push_back(mean(col));
            total += v;
        }
        return total / static_cast<double>(P);
    };

    EthVarianceResult out;
    out.realizations = R;
    std::vector<std::size_t> all(R);
    for (std::size_t k = 0; k < R; ++k) all[k] = k;
    out.variance = stat(all, &out.per_probe_variance, &out.per_probe_mean);
    out.standard_error =
        bootstrap_se(R, [&](const std::vector<std::size_t>& idx) { return stat(idx, nullptr, nullptr); }, resamples,
                     seed);
    return out;
}

EthVarianceResult eth_variance_measured(std::span<const EigenSystem> systems, const Observable& A,
                                        std::span<const std::size_t> probes) {
    std::vector<std::vector<double>> samples;
    for (const auto& s : systems) {
        std::vector<double> row;
        for (auto i : probes) row.push_back(eigenstate_expectation(s, A, i));
        samples.push_back(std::move(row));
    }
    return eth_variance_measured(samples);
}

EthVariancePrediction eth_variance_predicted(const LagProfile& lambda, const Observable& A, std::size_t i) {
    const double t = lambda.total();
    if (!(std::abs(t - 1.0) <= 0.02)) throw ConfigError("envelope is not normalized");
    const long n = static_cast<long>(A.size());
    if (static_cast<long>(i) >= n) throw ConfigError("eigenstate index out of range");
    const long w = static_cast<long>(A.band_width());
    const Eigen::MatrixXd& M = A.matrix();

    // support of Lambda(i - j) in j
    const long jlo = std::max(0L, static_cast<long>(i) - lambda.max_lag());
    const long jhi = std::min(n - 1, static_cast<long>(i) - lambda.min_lag);

    EthVariancePrediction out;
    double sq = 0.0;
    for (double v : lambda.values) sq += v * v;
    out.peak = lambda.peak();
    out.participation = sq > 0.0 ? 1.0 / sq : std::numeric_limits<double>::infinity();
    out.gaussian_regime = out.participation >= 10.0;

    double exact = 0.0, micro = 0.0;
    for (long j = jlo; j <= jhi; ++j) {
        const double lj = lambda.at(static_cast<int>(static_cast<long>(i) - j));
        if (lj == 0.0) continue;
        const long klo = std::max(jlo, j - w), khi = std::min(jhi, j + w);
        for (long k = klo; k <= khi; ++k) {
            const double a = M(j, k);
            exact += lj * lambda.at(static_cast<int>(static_cast<long>(i) - k)) * a * a;
        }
        micro += lj * A.square_diagonal(static_cast<std::size_t>(j));
    }
    out.exact_sum = 2.0 * exact;
    out.upper_bound = 2.0 * out.peak * micro;
    return out;
}

double unperturbed_variance(const Observable& A, const UnperturbedSpectrum& spec, const MicrocanonicalWindow& w) {
    if (spec.size() != A.size()) throw ConfigError("observable/spectrum dimension mismatch");
    std::vector<double> vals;
    for (std::size_t j = 0; j < spec.size(); ++j)
        if (std::abs(spec.level(j) - w.center) <= w.half_width) vals.push_back(A.diagonal(j));
    if (vals.size() < 2) throw ConfigError("window must contain at least 2 levels");
    return population_variance(vals);
}

}  // namespace ergolab
