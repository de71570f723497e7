#include "ergolab/bandcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ergolab/errors.hpp"
#include "ergolab/stats.hpp"

namespace ergolab {

std::vector<std::pair<double, std::size_t>> FockSystem::energy_levels() const {
    std::vector<double> e = energies;
    std::sort(e.begin(), e.end());
    std::vector<std::pair<double, std::size_t>> out;
    for (double x : e) {
        if (!out.empty() && std::abs(x - out.back().first) <= 1e-9 * std::max(1.0, std::abs(x)))
            ++out.back().second;
        else
            out.emplace_back(x, 1);
    }
    return out;
}

namespace {

// number of occupation vectors over M levels with P particles and cap
double count_states(std::size_t M, std::size_t P, std::size_t cap) {
    std::vector<double> ways(P + 1, 0.0);
    ways[0] = 1.0;
    for (std::size_t i = 0; i < M; ++i) {
        std::vector<double> next(P + 1, 0.0);
        for (std::size_t p = 0; p <= P; ++p)
            for (std::size_t k = 0; k <= std::min(cap, p); ++k) next[p] += ways[p - k];
        ways.swap(next);
    }
    return ways[P];
}

void enumerate(std::size_t i, std::size_t left, std::size_t cap, Occupation& cur, std::vector<Occupation>& out) {
    const std::size_t M = cur.size();
    if (i == M - 1) {
        if (left <= cap) {
            cur[i] = static_cast<std::uint8_t>(left);
            out.push_back(cur);
        }
        return;
    }
    for (std::size_t k = 0; k <= std::min(left, cap); ++k) {
        cur[i] = static_cast<std::uint8_t>(k);
        enumerate(i + 1, left - k, cap, cur, out);
    }
}

}  // namespace

FockSystem build_fock_system(std::vector<double> levels, std::size_t P, Statistics stats, std::size_t cap) {
    const std::size_t M = levels.size();
    if (M == 0) throw ConfigError("Fock system needs at least one level");
    if (P == 0) throw ConfigError("Fock system needs at least one particle");
    if (P > 255) throw ConfigError("particle count too large");
    std::size_t c = stats == Statistics::fermion ? 1 : (cap == 0 ? P : std::min(cap, P));
    if (count_states(M, P, c) > static_cast<double>(kMaxFockBasis))
        throw ConfigError("Fock basis too large (limit 200000 states)");
    FockSystem s;
    s.levels = std::move(levels);
    s.particles = P;
    s.statistics = stats;
    s.cap = c;
    Occupation cur(M, 0);
    enumerate(0, P, c, cur, s.basis);
    if (s.basis.empty()) throw ConfigError("Fock basis is empty for these parameters");
    for (std::size_t a = 0; a < s.basis.size(); ++a) {
        double e = 0.0;
        for (std::size_t i = 0; i < M; ++i) e += s.basis[a][i] * s.levels[i];
        s.energies.push_back(e);
        s.index.emplace(s.basis[a], a);
    }
    return s;
}

FockSystem build_fock_system(std::size_t M, std::size_t P, Statistics stats, double spacing, std::size_t cap) {
    if (!(spacing > 0.0)) throw ConfigError("level spacing must be positive");
    std::vector<double> e(M);
    for (std::size_t i = 0; i < M; ++i) e[i] = spacing * static_cast<double>(i);
    return build_fock_system(std::move(e), P, stats, cap);
}

TwoBodyPotential::TwoBodyPotential(std::size_t M, std::vector<double> values) : M_(M), v_(std::move(values)) {
    if (v_.size() != M * M * M * M) throw ConfigError("potential tensor has wrong size");
    bound_ = 0.0;
    for (double x : v_) {
        if (!std::isfinite(x)) throw ConfigError("potential has non-finite entries");
        bound_ = std::max(bound_, std::abs(x));
    }
    for (std::size_t j = 0; j < M; ++j)
        for (std::size_t k = 0; k < M; ++k)
            for (std::size_t l = 0; l < M; ++l)
                for (std::size_t m = 0; m < M; ++m)
                    if ((*this)(j, k, l, m) != (*this)(m, l, k, j))
                        throw ConfigError("potential is not Hermitian (V_jklm != V_mlkj)");
}

TwoBodyPotential make_potential(std::size_t M,
                                const std::function<double(std::size_t, std::size_t, std::size_t, std::size_t)>& f) {
    std::vector<double> v(M * M * M * M);
    for (std::size_t j = 0; j < M; ++j)
        for (std::size_t k = 0; k < M; ++k)
            for (std::size_t l = 0; l < M; ++l)
                for (std::size_t m = 0; m < M; ++m) v[((j * M + k) * M + l) * M + m] = f(j, k, l, m);
    return TwoBodyPotential(M, std::move(v));
}

TwoBodyPotential make_gaussian_potential(std::size_t M, double range, double strength) {
    if (!(range > 0.0)) throw ConfigError("potential range must be positive");
    const double s = 4.0 * range * range;
    return make_potential(M, [&](std::size_t j, std::size_t k, std::size_t l, std::size_t m) {
        const double q1 = static_cast<double>(j) - static_cast<double>(m);
        const double q2 = static_cast<double>(k) - static_cast<double>(l);
        return strength * std::exp(-(q1 * q1 + q2 * q2) / s);
    });
}

namespace {

// a_i on occ in place; returns amplitude (0 if annihilated)
double annihilate(Occupation& occ, std::size_t i, Statistics st) {
    if (occ[i] == 0) return 0.0;
    double amp;
    if (st == Statistics::boson) {
        amp = std::sqrt(static_cast<double>(occ[i]));
    } else {
        std::size_t below = 0;
        for (std::size_t q = 0; q < i; ++q) below += occ[q];
        amp = (below % 2) ? -1.0 : 1.0;
    }
    --occ[i];
    return amp;
}

double create(Occupation& occ, std::size_t i, Statistics st, std::size_t cap) {
    if (occ[i] >= cap) return 0.0;
    double amp;
    if (st == Statistics::boson) {
        amp = std::sqrt(static_cast<double>(occ[i]) + 1.0);
    } else {
        std::size_t below = 0;
        for (std::size_t q = 0; q < i; ++q) below += occ[q];
        amp = (below % 2) ? -1.0 : 1.0;
    }
    ++occ[i];
    return amp;
}

// V|b> as (index, amplitude) pairs, possibly repeated
template <class Sink>
void apply_potential(const FockSystem& s, const TwoBodyPotential& V, std::size_t b, Sink&& sink) {
    const std::size_t M = s.levels.size();
    // bosons beyond the cap are outside the basis; use the untruncated
    // algebra and drop states that leave it
    const std::size_t cap = s.statistics == Statistics::fermion ? 1 : 255;
    for (std::size_t m = 0; m < M; ++m) {
        Occupation o1 = s.basis[b];
        const double a1 = annihilate(o1, m, s.statistics);
        if (a1 == 0.0) continue;
        for (std::size_t l = 0; l < M; ++l) {
            Occupation o2 = o1;
            const double a2 = annihilate(o2, l, s.statistics);
            if (a2 == 0.0) continue;
            for (std::size_t k = 0; k < M; ++k) {
                Occupation o3 = o2;
                const double a3 = create(o3, k, s.statistics, cap);
                if (a3 == 0.0) continue;
                for (std::size_t j = 0; j < M; ++j) {
                    const double v = V(j, k, l, m);
                    if (v == 0.0) continue;
                    Occupation o4 = o3;
                    const double a4 = create(o4, j, s.statistics, cap);
                    if (a4 == 0.0) continue;
                    const auto it = s.index.find(o4);
                    if (it == s.index.end()) continue;
                    sink(it->second, v * a1 * a2 * a3 * a4);
                }
            }
        }
    }
}

void check_compatible(const FockSystem& s, const TwoBodyPotential& V) {
    if (V.modes() != s.levels.size()) throw ConfigError("potential and Fock system have different level counts");
}

}  // namespace

double matrix_element(const FockSystem& s, const TwoBodyPotential& V, std::size_t a, std::size_t b) {
    check_compatible(s, V);
    if (a >= s.size() || b >= s.size()) throw ConfigError("Fock state index out of range");
    double acc = 0.0;
    apply_potential(s, V, b, [&](std::size_t idx, double amp) {
        if (idx == a) acc += amp;
    });
    return acc;
}

Eigen::SparseMatrix<double> two_body_matrix(const FockSystem& s, const TwoBodyPotential& V) {
    check_compatible(s, V);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t b = 0; b < s.size(); ++b)
        apply_potential(s, V, b, [&](std::size_t idx, double amp) {
            trips.emplace_back(static_cast<int>(idx), static_cast<int>(b), amp);
        });
    const int D = static_cast<int>(s.size());
    Eigen::SparseMatrix<double> m(D, D);
    m.setFromTriplets(trips.begin(), trips.end());  // duplicates summed
    m.prune(0.0);
    return m;
}

double finite_difference_temperature(const FockSystem& s, double energy, double h) {
    if (!(h > 0.0)) throw ConfigError("entropy half-width must be positive");
    auto count = [&](double x) {
        std::size_t c = 0;
        for (double e : s.energies)
            if (std::abs(e - x) <= h + 1e-12) ++c;
        return c;
    };
    const std::size_t up = count(energy + h), down = count(energy - h);
    if (up == 0 || down == 0) throw ConfigError("entropy window is empty; cannot define a temperature");
    const double dS = std::log(static_cast<double>(up)) - std::log(static_cast<double>(down));
    if (!(dS > 0.0)) throw ConfigError("entropy does not increase at the reference energy; T undefined");
    return 2.0 * h / dS;
}

DecayResult averaged_offdiagonal_decay(const FockSystem& s, const TwoBodyPotential& V, const DecayOptions& o) {
    check_compatible(s, V);
    const std::size_t M = s.levels.size();
    if (M < 2) throw ConfigError("need at least 2 single-particle levels");
    const double sp = (s.levels.back() - s.levels.front()) / static_cast<double>(M - 1);
    if (!(sp > 0.0)) throw ConfigError("single-particle levels must span a positive range");
    const auto [emin_it, emax_it] = std::minmax_element(s.energies.begin(), s.energies.end());
    const double emin = *emin_it, emax = *emax_it;
    const double mb_spacing = (emax - emin) / static_cast<double>(s.size());

    DecayResult r;
    r.reference_energy = emin + o.reference_fraction * (emax - emin);
    const double win = o.window_half_width > 0.0 ? o.window_half_width : sp;
    const double h = o.entropy_half_width > 0.0 ? o.entropy_half_width : std::max(5.0 * mb_spacing, sp);
    const double bw = o.bin_width > 0.0 ? o.bin_width : sp;
    r.temperature = finite_difference_temperature(s, r.reference_energy, h);

    std::vector<std::size_t> ref;
    for (std::size_t a = 0; a < s.size(); ++a)
        if (std::abs(s.energies[a] - r.reference_energy) <= win + 1e-12) ref.push_back(a);
    r.reference_states = ref.size();
    if (ref.empty()) throw ConfigError("no states in the reference window");

    const auto Vm = two_body_matrix(s, V);
    std::map<long, std::pair<double, std::size_t>> acc;  // bin -> (sum |V|, pairs)
    for (auto a : ref) {
        // all pairs with E >= E' count, including vanishing elements
        for (std::size_t b = 0; b < s.size(); ++b) {
            const double g = s.energies[b] - s.energies[a];
            if (g < -1e-12) continue;
            ++acc[std::lround(g / bw)].second;
        }
        for (Eigen::SparseMatrix<double>::InnerIterator it(Vm, static_cast<Eigen::Index>(a)); it; ++it) {
            const double g = s.energies[static_cast<std::size_t>(it.row())] - s.energies[a];
            if (g < -1e-12) continue;
            acc[std::lround(g / bw)].first += std::abs(it.value());
        }
    }
    for (const auto& [bin, sc] : acc) {
        const double center = static_cast<double>(bin) * bw;
        if (sc.second < o.min_count) {
            std::ostringstream os;
            os << "gap bin " << center << " dropped: " << sc.second << " pairs";
            r.warnings.push_back(os.str());
            continue;
        }
        if (sc.first == 0.0) {
            std::ostringstream os;
            os << "gap bin " << center << " dropped: no connected pairs";
            r.warnings.push_back(os.str());
            continue;
        }
        r.bins.push_back({center, sc.first / static_cast<double>(sc.second), sc.second});
    }
    if (r.bins.size() < 5) throw ConfigError("fewer than 5 populated gap bins");

    std::vector<double> x, y;
    for (const auto& b : r.bins)
        if (b.center >= r.temperature - 1e-12 && b.center <= 4.0 * r.temperature + 1e-12) {
            x.push_back(b.center);
            y.push_back(std::log(b.mean_abs));
        }
    r.fit_points = x.size();
    if (x.size() >= 2) {
        const auto f = linear_fit(x, y);
        r.slope = f.slope;
        r.slope_se = f.slope_se;
    } else {
        r.warnings.push_back("fewer than 2 bins in [T, 4T]; slope not fitted");
    }
    r.decreasing_beyond_T = true;
    const GapBin* prev = nullptr;
    for (const auto& b : r.bins) {
        if (b.center < r.temperature) continue;
        if (prev && !(b.mean_abs < prev->mean_abs)) r.decreasing_beyond_T = false;
        prev = &b;
    }
    return r;
}

}  // namespace ergolab
