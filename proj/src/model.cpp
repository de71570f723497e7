#include "ergolab/model.hpp"

#include <cmath>
#include <string>

#include "ergolab/errors.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

UnperturbedSpectrum::UnperturbedSpectrum(std::vector<double> levels, std::optional<UniformJitter> jitter)
    : levels_(std::move(levels)), jitter_(jitter) {
    if (levels_.size() < 2) throw ConfigError("spectrum needs at least 2 levels");
    for (std::size_t k = 1; k < levels_.size(); ++k)
        if (!(levels_[k] > levels_[k - 1])) throw ConfigError("spectrum levels must be strictly increasing");
    mean_spacing_ = (levels_.back() - levels_.front()) / static_cast<double>(levels_.size() - 1);
}

UnperturbedSpectrum build_unperturbed_spectrum(std::size_t n, double delta, std::optional<UniformJitter> jitter) {
    if (n < 2) throw ConfigError("spectrum size must be >= 2");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("level spacing must be positive");
    std::vector<double> f(n);
    for (std::size_t k = 0; k < n; ++k) f[k] = delta * static_cast<double>(k);
    if (jitter && jitter->width > 0.0) {
        if (jitter->width >= delta) throw ConfigError("jitter width must be below the level spacing");
        Rng rng(jitter->seed);
        for (auto& x : f) x += jitter->width * (rng.uniform() - 0.5);
    } else {
        jitter.reset();
    }
    return UnperturbedSpectrum(std::move(f), jitter);
}

double taper_weight(double energy_gap, const Taper& taper) {
    if (!(energy_gap >= 0.0)) throw ConfigError("energy gap must be nonnegative");
    if (taper.kind == TaperKind::hard) return energy_gap <= taper.cutoff ? 1.0 : 0.0;
    if (!(taper.temperature > 0.0)) throw ConfigError("exponential taper needs T > 0");
    return std::exp(-energy_gap / taper.temperature);
}

SymmetricMatrix::SymmetricMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw ConfigError("matrix must be square");
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m_.cols(); ++j)
            if (m_(i, j) != m_(j, i)) throw ConfigError("matrix is not symmetric");
}

void SymmetricMatrix::set(std::size_t i, std::size_t j, double v) {
    m_(i, j) = v;
    m_(j, i) = v;
}

SymmetricMatrix sample_perturbation(const UnperturbedSpectrum& spec, const PerturbationParams& p) {
    const std::size_t n = spec.size();
    if (!(p.epsilon >= 0.0) || !std::isfinite(p.epsilon)) throw ConfigError("epsilon must be >= 0");
    if (p.band_cutoff > n - 1) throw ConfigError("band cutoff exceeds n-1");
    if (p.taper == TaperKind::exponential && !(p.temperature > 0.0))
        throw ConfigError("exponential taper needs T > 0");
    SymmetricMatrix h(n);
    if (p.epsilon == 0.0) return h;
    Rng rng(p.seed);
    const auto& f = spec.levels();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t jmax = std::min(n - 1, i + p.band_cutoff);
        for (std::size_t j = i; j <= jmax; ++j) {
            double w = 1.0;
            if (p.taper == TaperKind::exponential) w = std::exp(-std::abs(f[j] - f[i]) / p.temperature);
            h.set(i, j, p.epsilon * w * rng.normal());
        }
    }
    return h;
}

SymmetricMatrix assemble_hamiltonian(const UnperturbedSpectrum& spec, const SymmetricMatrix& h) {
    if (h.size() != spec.size())
        throw ConfigError("dimension mismatch: spectrum " + std::to_string(spec.size()) + " vs perturbation " +
                          std::to_string(h.size()));
    Eigen::MatrixXd m = h.dense();
    for (std::size_t k = 0; k < spec.size(); ++k) m(k, k) += spec.level(k);
    return SymmetricMatrix(std::move(m));
}

std::size_t band_from_cutoff(double energy_cutoff, double delta) {
    if (!(delta > 0.0) || !(energy_cutoff >= 0.0)) throw ConfigError("invalid cutoff or spacing");
    return static_cast<std::size_t>(std::llround(energy_cutoff / delta));
}

}  // namespace ergolab
