#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ergolab/spectra.hpp"

namespace ergolab {

// Values on consecutive integer lags min_lag, min_lag+1, ...
struct LagProfile {
    int min_lag = 0;
    std::vector<double> values;

    int max_lag() const { return min_lag + static_cast<int>(values.size()) - 1; }
    double at(int r) const;  // 0 outside the stored range
    double total() const;
    double peak() const;
};

struct EnvelopeEstimate {
    std::vector<int> lags;
    std::vector<double> values;
    std::vector<std::size_t> counts;  // pooled over realizations
    double edge_exclusion = 0.0;
    std::size_t realizations = 0;
    // per_realization[k][m]: mean of c^2 at lags[m] within realization k
    std::vector<std::vector<double>> per_realization;

    double value_at(int r) const;
    double total() const;
    LagProfile profile() const;
};

// Streams eigen systems one at a time so large ensembles need not be held.
class EnvelopeAccumulator {
public:
    EnvelopeAccumulator(std::size_t n, double edge_exclusion);
    void add(const EigenSystem& system);
    // Per-lag means of one realization; thread safe. add_means appends them.
    std::vector<double> lag_means(const EigenSystem& system) const;
    void add_means(std::vector<double> means);
    EnvelopeEstimate finish() const;
    std::size_t realizations() const { return per_realization_.size(); }

private:
    std::size_t n_, lo_, hi_;
    double edge_exclusion_;
    std::vector<std::size_t> counts_;  // per realization, identical each time
    std::vector<std::vector<double>> per_realization_;
};

EnvelopeEstimate estimate_envelope(std::span<const EigenSystem> systems, double edge_exclusion);

// Bootstrap standard error of each lag's value, resampling realizations.
std::vector<double> bootstrap_lag_se(const EnvelopeEstimate& est, std::size_t resamples, std::uint64_t seed);

struct LorentzianParams {
    double amplitude = 0.0;
    double half_width = 0.0;
};

// A = eps^2 / (2 Delta^2), delta = pi eps^2 / (2 Delta^2)
LorentzianParams predicted_params(double epsilon, double delta_spacing);

double lorentzian(double amplitude, double half_width, double r);
// A/(r^2+delta^2) sampled on |r| <= half_range, normalized to unit mass.
LagProfile lorentzian_profile(double amplitude, double half_width, int half_range);

struct LorentzianFit {
    double amplitude = 0.0;
    double half_width = 0.0;
    double residual = 0.0;           // sum of squared deviations
    double relative_residual = 0.0;  // sqrt(residual / sum y^2)
    double moment_half_width = 0.0;  // 1/(pi Lambda(0))
    double normalization = 0.0;      // pi A / delta
    int window = 0;                  // fitted lags |r| <= window
    int iterations = 0;
    bool converged = false;
    bool lorentzian_regime = false;
    std::string method = "levenberg-marquardt";

    LagProfile profile(int half_range) const;
};

struct FitOptions {
    LorentzianParams initial;      // usually predicted_params
    double window_multiple = 5.0;  // window = max(ceil(multiple * initial.half_width), min_window)
    int min_window = 4;
    int max_iterations = 500;
};

LorentzianFit fit_lorentzian(const LagProfile& data, const FitOptions& options);
// Also checks that the window holds at least 8 lags with nonzero counts.
LorentzianFit fit_lorentzian(const EnvelopeEstimate& est, const FitOptions& options);

// (eps/Delta)^2 / r^2
double perturbative_tail(double epsilon, double delta_spacing, int r);

// Self-convolution Lambda_2(s) = sum_r Lambda(r) Lambda(s - r). The input
// must sum to 1 within 2%; it is rescaled to unit mass first.
LagProfile convolve_envelope(const LagProfile& lambda);
LagProfile convolve_envelope(const EnvelopeEstimate& est);
LagProfile convolve_envelope(const LorentzianFit& fit, int half_range);

struct VariationalProblem {
    double epsilon_over_spacing = 1.0;
    int half_range = 0;  // 0 picks ceil(40 delta_pred), at least 50
    bool include_repulsion = true;
    bool include_incompressibility = true;
    double floor = 1e-14;
    int max_iterations = 20000;
    double gradient_tolerance = 1e-10;
    std::optional<std::vector<double>> initial;  // length 2R+1, lags -R..R
};

struct VariationalResult {
    LagProfile envelope;
    double free_energy = 0.0;
    std::vector<double> history;  // F at each accepted iterate
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;  // max |dF/du| at the returned point
    LorentzianFit fit;  // over |r| <= 5 delta_pred
    double moment_half_width = 0.0;
};

// Free energy per row of the translation-invariant envelope on a ring of
// 2R+1 lags. Exposed for testing.
double free_energy(const VariationalProblem& problem, std::span<const double> lambda,
                   std::vector<double>* gradient = nullptr);

VariationalResult minimize_free_energy(const VariationalProblem& problem);

struct TailBoundResult {
    double integral = 0.0;
    double bound = 0.0;
    double peak_location = 0.0;   // grid argmax of the integrand on [0, T]
    double predicted_peak = 0.0;  // 2 delta^2 / T
    double grid_step = 0.0;
    bool satisfied = false;
};

// Integrates rho(e) exp((E-e)/T) Lambda_2(E-e) over E-e in [T/2, e_max]
// with Lambda_2 the continuous Lorentzian of half-width 2 delta and rho(e) = 1
// (energies in units of the level spacing). Compares with (8/pi) delta e^{e_max/T}.
TailBoundResult tail_integral_bound(double delta, double T_cut, double e_max, double grid_step = 0.0);

}  // namespace ergolab
