#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ergolab/envelope.hpp"
#include "ergolab/model.hpp"
#include "ergolab/spectra.hpp"

namespace ergolab {

enum class ObservableKind { diagonal_profile, banded_random, custom };

// Real symmetric operator in the unperturbed basis.
class Observable {
public:
    Observable(ObservableKind kind, Eigen::MatrixXd matrix, std::size_t band_width);

    ObservableKind kind() const { return kind_; }
    const Eigen::MatrixXd& matrix() const { return m_; }
    std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
    // entries vanish for |j-k| > band_width
    std::size_t band_width() const { return band_; }
    double diagonal(std::size_t j) const { return m_(j, j); }
    // (A^2)_jj = sum_k A_jk^2
    double square_diagonal(std::size_t j) const;

private:
    ObservableKind kind_;
    Eigen::MatrixXd m_;
    std::size_t band_;
};

// A_jj = f(j/n)
Observable make_diagonal_profile(std::size_t n, const std::function<double(double)>& f);
// Symmetric Gaussian entries of standard deviation `scale` for |j-k| <= width.
Observable make_banded_random(std::size_t n, std::size_t width, double scale, std::uint64_t seed);
Observable make_custom(const SymmetricMatrix& m);

double eigenstate_expectation(const EigenSystem& system, const Observable& A, std::size_t i);
// <i|A|i> for every eigenstate, using the band structure of A.
Eigen::VectorXd all_eigenstate_expectations(const EigenSystem& system, const Observable& A);

enum class Weighting { flat, lorentzian };

struct MicrocanonicalWindow {
    double center = 0.0;
    double half_width = 1.0;
    Weighting weighting = Weighting::flat;
    double delta = 0.0;  // Lorentzian half-width in level units
};

// Flat: mean of A_jj over levels in [e-W, e+W]. Lorentzian: weights
// (delta/pi)/((f_j-e)^2/spacing^2 + delta^2) over the same levels, normalized.
double microcanonical_average(const Observable& A, const UnperturbedSpectrum& spec, const MicrocanonicalWindow& w);
double microcanonical_average(const Observable& A, std::span<const double> levels, const MicrocanonicalWindow& w);

// sum_j Lambda(i-j) A_jj
double envelope_weighted_average(const Observable& A, const LagProfile& lambda, std::size_t i);

struct EthVarianceResult {
    double variance = 0.0;  // mean over probes of the unbiased across-realization variance
    double standard_error = 0.0;  // bootstrap over realizations
    std::vector<double> per_probe_variance;
    std::vector<double> per_probe_mean;
    std::size_t realizations = 0;
};

// samples[k][p] = <i_p|A|i_p> in realization k.
EthVarianceResult eth_variance_measured(const std::vector<std::vector<double>>& samples, std::size_t resamples = 400,
                                        std::uint64_t seed = 1);
EthVarianceResult eth_variance_measured(std::span<const EigenSystem> systems, const Observable& A,
                                        std::span<const std::size_t> probes);

struct EthVariancePrediction {
    double exact_sum = 0.0;    // 2 sum_jk Lambda(i-j) Lambda(i-k) A_jk^2
    double upper_bound = 0.0;  // 2 max Lambda * sum_j Lambda(i-j) (A^2)_jj
    double peak = 0.0;
    double participation = 0.0;  // 1 / sum Lambda^2
    bool gaussian_regime = false;
};

EthVariancePrediction eth_variance_predicted(const LagProfile& lambda, const Observable& A, std::size_t i);

// Population variance of A_jj over levels in [e-W, e+W].
double unperturbed_variance(const Observable& A, const UnperturbedSpectrum& spec, const MicrocanonicalWindow& w);

}  // namespace ergolab
