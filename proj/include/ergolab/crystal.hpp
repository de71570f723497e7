#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ergolab/rng.hpp"

namespace ergolab {

struct CrystalMode {
    std::vector<int> wavenumber;  // integer lattice vector m, k = 2 pi m / L
    double k_magnitude = 0.0;     // |k| after folding into the first zone
    double omega = 0.0;
    double coefficient = 0.0;     // a_nu
};

struct CrystalSpec {
    int dimension = 1;
    int linear_size = 2;
    double speed = 1.0;
    double coupling = 1.0;  // a_nu = coupling / sqrt(N)
    std::vector<CrystalMode> modes;

    std::size_t sites() const;
    std::size_t mode_count() const { return modes.size(); }
    double min_omega() const;
};

CrystalSpec build_crystal(int d, int L, double c = 1.0, double coupling = 1.0);

struct OccupationState {
    std::vector<std::uint64_t> occupations;
    double total_energy = 0.0;
};

// Validates the mode count and computes sum Omega n.
OccupationState make_occupation(const CrystalSpec& spec, std::vector<std::uint64_t> occupations);

// sum a^2 (n + 1/2) / Omega
double x2_expectation(const CrystalSpec& spec, const OccupationState& occ);

// Canonical quantities at inverse temperature beta, energies above the ground state.
double canonical_energy(const CrystalSpec& spec, double beta);
double canonical_energy_variance(const CrystalSpec& spec, double beta);
double canonical_x2(const CrystalSpec& spec, double beta);
// beta with canonical_energy = E (bisection); throws if not bracketed.
double solve_beta(const CrystalSpec& spec, double energy);

// Exact uniform sampler on the shell |E - E_target| <= tolerance: canonical
// draws at the matching beta, rejected outside the shell and thinned by
// exp(beta (E - E_hi)) inside it.
class MicrocanonicalSampler {
public:
    MicrocanonicalSampler(const CrystalSpec& spec, double E_target, double tolerance, std::uint64_t seed,
                          std::size_t max_attempts = 50'000'000);
    OccupationState next();
    double beta() const { return beta_; }
    std::size_t attempts() const { return attempts_; }
    std::size_t accepted() const { return accepted_; }

private:
    const CrystalSpec* spec_;
    double target_, tol_, beta_;
    std::size_t max_attempts_;
    std::size_t attempts_ = 0, accepted_ = 0;
    bool vacuum_only_ = false;
    Rng rng_;
};

OccupationState sample_microcanonical_occupations(const CrystalSpec& spec, double E_target, double tolerance,
                                                  std::uint64_t seed);

struct ScalingPoint {
    int linear_size = 0;
    std::size_t sites = 0;
    double mean_x2 = 0.0;
    double variance_x2 = 0.0;
    double relative_variance = 0.0;  // variance / mean^2
    std::size_t samples = 0;
    double tolerance = 0.0;
    double acceptance = 0.0;
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    double exponent = 0.0;
    double exponent_se = 0.0;
};

// Tolerance is tolerance_fraction * canonical energy standard deviation.
ScalingResult x2_fluctuation_scaling(int d, const std::vector<int>& L_list, double energy_per_site,
                                     std::size_t samples, std::uint64_t seed, double tolerance_fraction = 0.05);

struct CanonicalCorrection {
    double beta = 0.0;
    double canonical_value = 0.0;
    double second_term = 0.0;  // a'' / (2 G'')
    double third_term = 0.0;   // -G''' a' / (2 G''^2)
    double corrected = 0.0;
    // derivatives with respect to beta of G = -ln Z and a = <x^2>
    double G2 = 0.0, G3 = 0.0, a1 = 0.0, a2 = 0.0;
};

CanonicalCorrection canonical_correction(const CrystalSpec& spec, double E_target);

struct ModeState {
    double omega = 0.0;
    std::vector<std::complex<double>> amplitudes;  // over levels n = 0, 1, ...
};

struct EnergySpread {
    double total_variance = 0.0;
    double mean_energy = 0.0;
    std::vector<double> per_mode_variances;
};

// Total variance from the product-state moments <H^2> - <H>^2 with the
// cross terms expanded, alongside the per-mode variances.
EnergySpread energy_spread_additivity(const std::vector<ModeState>& modes);
// Same total by building the full tensor-product state (small systems only).
double energy_variance_dense(const std::vector<ModeState>& modes);

}  // namespace ergolab
