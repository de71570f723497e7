#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace ergolab {

// Uniform level jitter f_k = Δk + U(-w/2, w/2), seeded.
struct UniformJitter {
    double width = 0.0;
    std::uint64_t seed = 0;
};

class UnperturbedSpectrum {
public:
    UnperturbedSpectrum(std::vector<double> levels, std::optional<UniformJitter> jitter);

    const std::vector<double>& levels() const { return levels_; }
    double level(std::size_t k) const { return levels_.at(k); }
    std::size_t size() const { return levels_.size(); }
    double mean_spacing() const { return mean_spacing_; }
    const std::optional<UniformJitter>& jitter() const { return jitter_; }

private:
    std::vector<double> levels_;
    double mean_spacing_;
    std::optional<UniformJitter> jitter_;
};

UnperturbedSpectrum build_unperturbed_spectrum(std::size_t n, double delta,
                                               std::optional<UniformJitter> jitter = std::nullopt);

enum class TaperKind { hard, exponential };

struct Taper {
    TaperKind kind = TaperKind::hard;
    double cutoff = 0.0;       // hard: energy cutoff bΔ
    double temperature = 0.0;  // exponential: decay scale T

    static Taper hard(double energy_cutoff) { return {TaperKind::hard, energy_cutoff, 0.0}; }
    static Taper exponential(double T) { return {TaperKind::exponential, 0.0, T}; }
};

// hard: 1 for gap <= cutoff, else 0. exponential: exp(-gap/T).
double taper_weight(double energy_gap, const Taper& taper);

struct PerturbationParams {
    double epsilon = 0.0;
    std::size_t band_cutoff = 0;  // b, in level units
    TaperKind taper = TaperKind::hard;
    double temperature = 0.0;     // exponential taper only
    std::uint64_t seed = 0;
};

// Dense real symmetric matrix. Symmetry is enforced on construction.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t n) : m_(Eigen::MatrixXd::Zero(n, n)) {}
    // Throws unless m is square and exactly symmetric.
    explicit SymmetricMatrix(Eigen::MatrixXd m);

    std::size_t size() const { return static_cast<std::size_t>(m_.rows()); }
    double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
    // Sets both (i,j) and (j,i).
    void set(std::size_t i, std::size_t j, double v);
    const Eigen::MatrixXd& dense() const { return m_; }

private:
    Eigen::MatrixXd m_;
};

SymmetricMatrix sample_perturbation(const UnperturbedSpectrum& spec, const PerturbationParams& params);
SymmetricMatrix assemble_hamiltonian(const UnperturbedSpectrum& spec, const SymmetricMatrix& perturbation);

// b = round(T/Δ)
std::size_t band_from_cutoff(double energy_cutoff, double delta);

}  // namespace ergolab
