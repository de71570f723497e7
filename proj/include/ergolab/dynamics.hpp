#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "ergolab/envelope.hpp"
#include "ergolab/observables.hpp"
#include "ergolab/spectra.hpp"

namespace ergolab {

using cplx = std::complex<double>;

// Amplitudes Gamma_j over the unperturbed basis. Normalized to 1e-12.
class StatePrep {
public:
    explicit StatePrep(std::vector<cplx> amplitudes);

    const std::vector<cplx>& amplitudes() const { return amps_; }
    std::size_t size() const { return amps_.size(); }
    double norm() const { return norm_; }
    // indices with nonzero amplitude
    std::vector<std::size_t> support() const;

private:
    std::vector<cplx> amps_;
    double norm_;
};

StatePrep basis_state(std::size_t n, std::size_t e);
// Sparse superposition; amplitudes are used as given and must be normalized.
StatePrep superposition(std::size_t n, const std::vector<std::pair<std::size_t, cplx>>& components);

// Throws NumericalError if any eigenvalue gap is below the degeneracy threshold.
void require_nondegenerate(const EigenSystem& system);

// <i|psi> for every eigenstate i
std::vector<cplx> eigenbasis_amplitudes(const EigenSystem& system, const StatePrep& psi);

// sum_i |<i|psi>|^2 <i|A|i>
double infinite_time_average(const EigenSystem& system, const StatePrep& psi, const Observable& A);

// <psi(t)|A|psi(t)>, hbar = 1, t in units of 1/Delta
double finite_time_expectation(const EigenSystem& system, const StatePrep& psi, const Observable& A, double t);

// Evaluates <psi(t)|A|psi(t)> repeatedly with A rotated into the eigenbasis once.
class TimeEvolution {
public:
    TimeEvolution(const EigenSystem& system, const StatePrep& psi, const Observable& A);
    double expectation(double t) const;

private:
    Eigen::VectorXd energies_;
    Eigen::VectorXcd amps_;
    Eigen::MatrixXd rotated_;  // c^T A c
};

// Trapezoid mean of <psi(t)|A|psi(t)> over [0, T] with step dt.
double running_time_average(const TimeEvolution& evolution, double T, double dt);

struct QuenchResult {
    double value = 0.0;
    bool edge_warning = false;
};

QuenchResult quench_time_average(const EigenSystem& system, std::size_t e, const Observable& A,
                                 double edge_exclusion = 0.1);

struct QuenchPrediction {
    double value = 0.0;         // sum_j Lambda_2(e-j) A_jj / sum_j Lambda_2(e-j), j over existing states
    double dropped_term = 0.0;  // 2 sum_i Lambda(i-e)^2 A_ii
    double dropped_ratio = 0.0;
};

QuenchPrediction quench_prediction(const LagProfile& lambda, const LagProfile& lambda2, const Observable& A,
                                   std::size_t e);
// Convolves lambda internally.
QuenchPrediction quench_prediction(const LagProfile& lambda, const Observable& A, std::size_t e);

struct TimeAverageReport {
    double infinite_time_value = 0.0;
    double diagonal_term = 0.0;
    double interference_term = 0.0;
    std::optional<double> bound_value;
    std::optional<double> prediction;
};

// Splits the exact average into the nu = mu part and the nu != mu remainder.
// With lambda2 given, also fills the bound and the Lambda_2 prediction.
TimeAverageReport superposition_time_average(const EigenSystem& system, const StatePrep& psi, const Observable& A,
                                             const LagProfile* lambda2 = nullptr);

// sqrt(Lambda_2(0)) * sqrt(sum_mu |Gamma_mu|^2 (A^2)_mumu)
double interference_bound(const StatePrep& psi, const LagProfile& lambda2, const Observable& A);

}  // namespace ergolab
