#include "ergolab/crystal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ergolab/errors.hpp"
#include "ergolab/stats.hpp"

namespace ergolab {

using std::numbers::pi;

std::size_t CrystalSpec::sites() const {
    std::size_t n = 1;
    for (int k = 0; k < dimension; ++k) n *= static_cast<std::size_t>(linear_size);
    return n;
}

double CrystalSpec::min_omega() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& md : modes) m = std::min(m, md.omega);
    return m;
}

CrystalSpec build_crystal(int d, int L, double c, double coupling) {
    if (d < 1 || d > 5) throw ConfigError("crystal dimension must be in 1..5");
    if (L < 2) throw ConfigError("crystal linear size must be >= 2");
    if (!(c > 0.0) || !(coupling > 0.0)) throw ConfigError("crystal speed and coupling must be positive");
    CrystalSpec s;
    s.dimension = d;
    s.linear_size = L;
    s.speed = c;
    s.coupling = coupling;
    const std::size_t N = s.sites();
    const double a = coupling / std::sqrt(static_cast<double>(N));
    std::vector<int> m(static_cast<std::size_t>(d), 0);
    for (std::size_t idx = 0; idx < N; ++idx) {
        std::size_t rest = idx;
        double k2 = 0.0;
        for (int ax = 0; ax < d; ++ax) {
            m[static_cast<std::size_t>(ax)] = static_cast<int>(rest % static_cast<std::size_t>(L));
            rest /= static_cast<std::size_t>(L);
            const int folded = std::min(m[static_cast<std::size_t>(ax)], L - m[static_cast<std::size_t>(ax)]);
            const double k = 2.0 * pi * folded / L;
            k2 += k * k;
        }
        if (idx == 0) continue;  // zero mode
        CrystalMode md;
        md.wavenumber = m;
        md.k_magnitude = std::sqrt(k2);
        md.omega = c * md.k_magnitude;
        md.coefficient = a;
        s.modes.push_back(std::move(md));
    }
    return s;
}

OccupationState make_occupation(const CrystalSpec& spec, std::vector<std::uint64_t> occ) {
    if (occ.size() != spec.mode_count()) throw ConfigError("occupation vector does not match the mode table");
    OccupationState s;
    s.occupations = std::move(occ);
    for (std::size_t v = 0; v < spec.modes.size(); ++v)
        s.total_energy += spec.modes[v].omega * static_cast<double>(s.occupations[v]);
    return s;
}

double x2_expectation(const CrystalSpec& spec, const OccupationState& occ) {
    if (occ.occupations.size() != spec.mode_count()) throw ConfigError("occupation vector does not match the mode table");
    double x = 0.0;
    for (std::size_t v = 0; v < spec.modes.size(); ++v) {
        const auto& md = spec.modes[v];
        x += md.coefficient * md.coefficient * (static_cast<double>(occ.occupations[v]) + 0.5) / md.omega;
    }
    return x;
}

namespace {

// mean Bose occupation 1/(e^{beta Omega} - 1)
double nbar(double beta, double omega) { return 1.0 / std::expm1(beta * omega); }

}  // namespace

double canonical_energy(const CrystalSpec& spec, double beta) {
    double e = 0.0;
    for (const auto& md : spec.modes) e += md.omega * nbar(beta, md.omega);
    return e;
}

double canonical_energy_variance(const CrystalSpec& spec, double beta) {
    double v = 0.0;
    for (const auto& md : spec.modes) {
        const double n = nbar(beta, md.omega);
        v += md.omega * md.omega * n * (n + 1.0);
    }
    return v;
}

double canonical_x2(const CrystalSpec& spec, double beta) {
    double x = 0.0;
    for (const auto& md : spec.modes) x += md.coefficient * md.coefficient * (nbar(beta, md.omega) + 0.5) / md.omega;
    return x;
}

double solve_beta(const CrystalSpec& spec, double energy) {
    if (!(energy > 0.0) || !std::isfinite(energy)) throw ConfigError("saddle not bracketed: energy must be positive");
    const double w = spec.min_omega();
    double lo = 1e-12 / w, hi = 1.0 / w;
    if (canonical_energy(spec, lo) < energy) throw ConfigError("saddle not bracketed: energy too large");
    int guard = 0;
    while (canonical_energy(spec, hi) > energy) {
        hi *= 2.0;
        if (++guard > 200) throw ConfigError("saddle not bracketed: energy too small");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (canonical_energy(spec, mid) > energy)
            lo = mid;
        else
            hi = mid;
        if (hi / lo - 1.0 < 1e-15) break;
    }
    return std::sqrt(lo * hi);
}

MicrocanonicalSampler::MicrocanonicalSampler(const CrystalSpec& spec, double E_target, double tolerance,
                                             std::uint64_t seed, std::size_t max_attempts)
    : spec_(&spec), target_(E_target), tol_(tolerance), beta_(0.0), max_attempts_(max_attempts), rng_(seed) {
    if (!(E_target >= 0.0) || !std::isfinite(E_target)) throw ConfigError("target energy must be >= 0");
    if (!(tolerance > 0.0)) throw ConfigError("shell tolerance must be positive");
    if (spec.modes.empty()) throw ConfigError("crystal has no modes");
    const double wmin = spec.min_omega();
    if (E_target + tolerance < wmin) {
        if (E_target - tolerance > 0.0) throw ConfigError("infeasible shell: no configuration within tolerance");
        vacuum_only_ = true;
        return;
    }
    beta_ = solve_beta(spec, std::max(E_target, 0.5 * tolerance));
}

OccupationState MicrocanonicalSampler::next() {
    const auto& modes = spec_->modes;
    if (vacuum_only_) {
        ++attempts_;
        ++accepted_;
        return make_occupation(*spec_, std::vector<std::uint64_t>(modes.size(), 0));
    }
    const double hi = target_ + tol_;
    std::vector<std::uint64_t> occ(modes.size());
    for (std::size_t tries = 0; tries < max_attempts_; ++tries) {
        ++attempts_;
        double E = 0.0;
        bool over = false;
        for (std::size_t v = 0; v < modes.size(); ++v) {
            // geometric with ratio exp(-beta Omega)
            const double u = rng_.uniform_open();
            const double n = std::floor(std::log(u) / (-beta_ * modes[v].omega));
            occ[v] = static_cast<std::uint64_t>(n);
            E += modes[v].omega * n;
            if (E > hi) {
                over = true;
                break;
            }
        }
        if (over || std::abs(E - target_) > tol_) continue;
        if (rng_.uniform() >= std::exp(beta_ * (E - hi))) continue;
        ++accepted_;
        return make_occupation(*spec_, occ);
    }
    if (accepted_ == 0) throw ConfigError("infeasible shell: no configuration found within tolerance");
    throw NumericalError("microcanonical sampler exceeded its attempt budget");
}

OccupationState sample_microcanonical_occupations(const CrystalSpec& spec, double E_target, double tolerance,
                                                  std::uint64_t seed) {
    MicrocanonicalSampler s(spec, E_target, tolerance, seed);
    return s.next();
}

ScalingResult x2_fluctuation_scaling(int d, const std::vector<int>& L_list, double energy_per_site,
                                     std::size_t samples, std::uint64_t seed, double tolerance_fraction) {
    if (L_list.size() < 3) throw ConfigError("scaling fit needs at least 3 sizes");
    if (samples < 100) throw ConfigError("scaling fit needs at least 100 samples per size");
    if (!(energy_per_site > 0.0)) throw ConfigError("energy per site must be positive");
    if (!(tolerance_fraction > 0.0)) throw ConfigError("tolerance fraction must be positive");
    ScalingResult out;
    std::vector<double> N, rel;
    for (int L : L_list) {
        const CrystalSpec spec = build_crystal(d, L);
        const double E = energy_per_site * static_cast<double>(spec.sites());
        const double beta = solve_beta(spec, E);
        const double tol = tolerance_fraction * std::sqrt(canonical_energy_variance(spec, beta));
        MicrocanonicalSampler sampler(spec, E, tol, substream_seed(seed, static_cast<std::uint64_t>(L)));
        std::vector<double> x;
        x.reserve(samples);
        for (std::size_t k = 0; k < samples; ++k) x.push_back(x2_expectation(spec, sampler.next()));
        ScalingPoint p;
        p.linear_size = L;
        p.sites = spec.sites();
        p.mean_x2 = mean(x);
        p.variance_x2 = sample_variance(x);
        p.relative_variance = p.variance_x2 / (p.mean_x2 * p.mean_x2);
        p.samples = samples;
        p.tolerance = tol;
        p.acceptance = static_cast<double>(sampler.accepted()) / static_cast<double>(sampler.attempts());
        if (!(p.variance_x2 > 0.0)) throw NumericalError("zero sample variance of x^2; insufficient samples");
        out.points.push_back(p);
        N.push_back(static_cast<double>(p.sites));
        rel.push_back(p.relative_variance);
    }
    const auto fit = loglog_fit(N, rel);
    out.exponent = fit.slope;
    out.exponent_se = fit.slope_se;
    return out;
}

namespace {

// Richardson-extrapolated central differences
template <class F>
double first_derivative(F f, double x, double h) {
    auto D = [&](double hh) { return (f(x + hh) - f(x - hh)) / (2.0 * hh); };
    return (4.0 * D(0.5 * h) - D(h)) / 3.0;
}

template <class F>
double second_derivative(F f, double x, double h) {
    const double fx = f(x);
    auto D = [&](double hh) { return (f(x + hh) - 2.0 * fx + f(x - hh)) / (hh * hh); };
    return (4.0 * D(0.5 * h) - D(h)) / 3.0;
}

}  // namespace

CanonicalCorrection canonical_correction(const CrystalSpec& spec, double E_target) {
    CanonicalCorrection c;
    c.beta = solve_beta(spec, E_target);
    const double h = 1e-3 * c.beta;
    auto E = [&](double b) { return canonical_energy(spec, b); };
    auto a = [&](double b) { return canonical_x2(spec, b); };
    // G = -ln Z, G' = <E>
    c.G2 = first_derivative(E, c.beta, h);
    c.G3 = second_derivative(E, c.beta, h);
    c.a1 = first_derivative(a, c.beta, h);
    c.a2 = second_derivative(a, c.beta, h);
    c.canonical_value = a(c.beta);
    c.second_term = c.a2 / (2.0 * c.G2);
    c.third_term = -c.G3 * c.a1 / (2.0 * c.G2 * c.G2);
    c.corrected = c.canonical_value + c.second_term + c.third_term;
    return c;
}

namespace {

void check_mode_state(const ModeState& m) {
    if (m.amplitudes.empty()) throw ConfigError("mode state has no amplitudes");
    double s = 0.0;
    for (const auto& a : m.amplitudes) s += std::norm(a);
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError("mode state is not normalized");
}

}  // namespace

EnergySpread energy_spread_additivity(const std::vector<ModeState>& modes) {
    EnergySpread out;
    double sum_mu = 0.0, sum_m2 = 0.0, sum_mu2 = 0.0;
    for (const auto& m : modes) {
        check_mode_state(m);
        double mu = 0.0, m2 = 0.0;
        for (std::size_t n = 0; n < m.amplitudes.size(); ++n) {
            const double p = std::norm(m.amplitudes[n]);
            const double e = m.omega * static_cast<double>(n);
            mu += p * e;
            m2 += p * e * e;
        }
        out.per_mode_variances.push_back(m2 - mu * mu);
        sum_mu += mu;
        sum_m2 += m2;
        sum_mu2 += mu * mu;
    }
    // <H^2> = sum <h^2> + sum_{nu != mu} <h_nu><h_mu>
    const double H2 = sum_m2 + (sum_mu * sum_mu - sum_mu2);
    out.mean_energy = sum_mu;
    out.total_variance = H2 - sum_mu * sum_mu;
    return out;
}

double energy_variance_dense(const std::vector<ModeState>& modes) {
    std::size_t dim = 1;
    for (const auto& m : modes) {
        check_mode_state(m);
        dim *= m.amplitudes.size();
        if (dim > (1u << 22)) throw ConfigError("product space too large for dense evaluation");
    }
    std::vector<double> prob(dim), energy(dim);
    std::vector<std::size_t> digit(modes.size(), 0);
    for (std::size_t idx = 0; idx < dim; ++idx) {
        double p = 1.0, e = 0.0;
        for (std::size_t v = 0; v < modes.size(); ++v) {
            p *= std::norm(modes[v].amplitudes[digit[v]]);
            e += modes[v].omega * static_cast<double>(digit[v]);
        }
        prob[idx] = p;
        energy[idx] = e;
        for (std::size_t v = 0; v < modes.size(); ++v) {
            if (++digit[v] < modes[v].amplitudes.size()) break;
            digit[v] = 0;
        }
    }
    double m = 0.0;
    for (std::size_t k = 0; k < dim; ++k) m += prob[k] * energy[k];
    double var = 0.0;
    for (std::size_t k = 0; k < dim; ++k) var += prob[k] * (energy[k] - m) * (energy[k] - m);
    return var;
}

}  // namespace ergolab
