#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

namespace ergolab {

enum class Statistics { boson, fermion };

using Occupation = std::vector<std::uint8_t>;

struct FockSystem {
    std::vector<double> levels;  // single-particle energies e_i
    std::size_t particles = 0;
    Statistics statistics = Statistics::boson;
    std::size_t cap = 0;  // max occupancy per level
    std::vector<Occupation> basis;  // lexicographic order
    std::vector<double> energies;   // sum N_i e_i per basis state
    std::map<Occupation, std::size_t> index;

    std::size_t size() const { return basis.size(); }
    // distinct energies (ascending) with multiplicities
    std::vector<std::pair<double, std::size_t>> energy_levels() const;
};

inline constexpr std::size_t kMaxFockBasis = 200'000;

// cap = 0 means unrestricted for bosons; fermions always use cap 1.
FockSystem build_fock_system(std::vector<double> levels, std::size_t particles, Statistics statistics,
                             std::size_t cap = 0);
// Equally spaced levels e_i = spacing * i.
FockSystem build_fock_system(std::size_t M, std::size_t particles, Statistics statistics, double spacing = 1.0,
                             std::size_t cap = 0);

// V_jklm for sum V_jklm a+_j a+_k a_l a_m, stored densely.
class TwoBodyPotential {
public:
    TwoBodyPotential(std::size_t M, std::vector<double> values);
    std::size_t modes() const { return M_; }
    double operator()(std::size_t j, std::size_t k, std::size_t l, std::size_t m) const {
        return v_[((j * M_ + k) * M_ + l) * M_ + m];
    }
    double bound() const { return bound_; }  // max |V_jklm|

private:
    std::size_t M_;
    std::vector<double> v_;
    double bound_;
};

TwoBodyPotential make_potential(std::size_t M,
                                const std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>& f);
// Plane-wave levels with a Gaussian momentum-space profile: particle one goes
// m -> j, particle two l -> k, each transfer weighted by exp(-q^2 / (4 range^2)).
TwoBodyPotential make_gaussian_potential(std::size_t M, double range, double strength = 1.0);

// <a|V|b>
double matrix_element(const FockSystem& system, const TwoBodyPotential& V, std::size_t a, std::size_t b);
// Full operator in the Fock basis.
Eigen::SparseMatrix<double> two_body_matrix(const FockSystem& system, const TwoBodyPotential& V);

struct DecayOptions {
    double reference_fraction = 0.2;  // E' centre, as a fraction of the spectrum range
    double window_half_width = 0.0;   // 0: one mean single-particle spacing
    double entropy_half_width = 0.0;  // 0: max(5 many-body spacings, one single-particle spacing)
    double bin_width = 0.0;           // 0: one mean single-particle spacing
    std::size_t min_count = 10;
};

struct GapBin {
    double center = 0.0;
    double mean_abs = 0.0;
    std::size_t count = 0;
};

struct DecayResult {
    double temperature = 0.0;
    double reference_energy = 0.0;
    std::size_t reference_states = 0;
    std::vector<GapBin> bins;  // kept bins only
    std::vector<std::string> warnings;
    double slope = 0.0;  // d ln(mean |V|) / d gap over [T, 4T]
    double slope_se = 0.0;
    std::size_t fit_points = 0;
    bool decreasing_beyond_T = false;
};

// Temperature from 1/T = dS/dE with S(E) = ln #{|E_a - E| <= h}, central difference.
double finite_difference_temperature(const FockSystem& system, double energy, double half_width);

DecayResult averaged_offdiagonal_decay(const FockSystem& system, const TwoBodyPotential& V,
                                       const DecayOptions& options = {});

}  // namespace ergolab
