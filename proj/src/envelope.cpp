#include "ergolab/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ergolab/errors.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/stats.hpp"

namespace ergolab {

using std::numbers::pi;

double LagProfile::at(int r) const {
    if (r < min_lag || r > max_lag()) return 0.0;
    return values[static_cast<std::size_t>(r - min_lag)];
}

double LagProfile::total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double LagProfile::peak() const {
    if (values.empty()) return 0.0;
    return *std::max_element(values.begin(), values.end());
}

double EnvelopeEstimate::value_at(int r) const {
    if (lags.empty() || r < lags.front() || r > lags.back()) return 0.0;
    return values[static_cast<std::size_t>(r - lags.front())];
}

double EnvelopeEstimate::total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

LagProfile EnvelopeEstimate::profile() const {
    LagProfile p;
    if (!lags.empty()) p.min_lag = lags.front();
    p.values = values;
    return p;
}

EnvelopeAccumulator::EnvelopeAccumulator(std::size_t n, double edge_exclusion)
    : n_(n), edge_exclusion_(edge_exclusion) {
    if (!(edge_exclusion >= 0.0 && edge_exclusion < 0.5)) throw ConfigError("edge exclusion must be in [0, 0.5)");
    lo_ = static_cast<std::size_t>(edge_exclusion * static_cast<double>(n));
    hi_ = n - lo_;
    if (n == 0 || hi_ <= lo_) throw ConfigError("no eigenstates retained after edge exclusion");
    counts_.assign(2 * n - 1, 0);
    for (std::size_t i = lo_; i < hi_; ++i)
        for (std::size_t j = 0; j < n; ++j) ++counts_[i + n - 1 - j];
}

std::vector<double> EnvelopeAccumulator::lag_means(const EigenSystem& s) const {
    if (s.size() != n_) throw ConfigError("envelope: eigen system size mismatch");
    std::vector<double> sums(2 * n_ - 1, 0.0);
    for (std::size_t i = lo_; i < hi_; ++i) {
        const double* col = s.vectors.col(static_cast<Eigen::Index>(i)).data();
        const std::size_t base = i + n_ - 1;
        for (std::size_t j = 0; j < n_; ++j) sums[base - j] += col[j] * col[j];
    }
    std::vector<double> means;
    for (std::size_t k = 0; k < sums.size(); ++k)
        if (counts_[k] > 0) means.push_back(sums[k] / static_cast<double>(counts_[k]));
    return means;
}

void EnvelopeAccumulator::add_means(std::vector<double> means) {
    if (!per_realization_.empty() && means.size() != per_realization_.front().size())
        throw ConfigError("envelope: lag table size mismatch");
    per_realization_.push_back(std::move(means));
}

void EnvelopeAccumulator::add(const EigenSystem& s) { add_means(lag_means(s)); }

EnvelopeEstimate EnvelopeAccumulator::finish() const {
    if (per_realization_.empty()) throw ConfigError("envelope: no realizations");
    EnvelopeEstimate e;
    e.edge_exclusion = edge_exclusion_;
    e.realizations = per_realization_.size();
    const double R = static_cast<double>(per_realization_.size());
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        if (counts_[k] == 0) continue;
        e.lags.push_back(static_cast<int>(k) - static_cast<int>(n_ - 1));
        e.counts.push_back(counts_[k] * per_realization_.size());
    }
    e.values.assign(e.lags.size(), 0.0);
    for (const auto& m : per_realization_)
        for (std::size_t k = 0; k < m.size(); ++k) e.values[k] += m[k];
    for (auto& v : e.values) v /= R;
    e.per_realization = per_realization_;
    return e;
}

EnvelopeEstimate estimate_envelope(std::span<const EigenSystem> systems, double edge_exclusion) {
    if (systems.empty()) throw ConfigError("envelope: need at least one realization");
    EnvelopeAccumulator acc(systems.front().size(), edge_exclusion);
    for (const auto& s : systems) acc.add(s);
    return acc.finish();
}

std::vector<double> bootstrap_lag_se(const EnvelopeEstimate& est, std::size_t resamples, std::uint64_t seed) {
    const std::size_t R = est.per_realization.size();
    std::vector<double> se(est.values.size(), 0.0);
    if (R < 2) return se;
    Rng rng(seed);
    std::vector<double> sum(se.size(), 0.0), sum2(se.size(), 0.0), acc(se.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < R; ++k) {
            const auto& m = est.per_realization[rng.below(R)];
            for (std::size_t l = 0; l < m.size(); ++l) acc[l] += m[l];
        }
        for (std::size_t l = 0; l < acc.size(); ++l) {
            const double v = acc[l] / static_cast<double>(R);
            sum[l] += v;
            sum2[l] += v * v;
        }
    }
    const double B = static_cast<double>(resamples);
    for (std::size_t l = 0; l < se.size(); ++l) {
        const double m = sum[l] / B;
        se[l] = std::sqrt(std::max(0.0, (sum2[l] / B - m * m) * B / (B - 1.0)));
    }
    return se;
}

LorentzianParams predicted_params(double epsilon, double delta_spacing) {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(delta_spacing > 0.0)) throw ConfigError("level spacing must be positive");
    const double x = epsilon * epsilon / (delta_spacing * delta_spacing);
    return {0.5 * x, 0.5 * pi * x};
}

double lorentzian(double amplitude, double half_width, double r) {
    return amplitude / (r * r + half_width * half_width);
}

LagProfile lorentzian_profile(double amplitude, double half_width, int half_range) {
    if (!(amplitude > 0.0) || !(half_width > 0.0)) throw ConfigError("Lorentzian parameters must be positive");
    if (half_range < 0) throw ConfigError("negative lag range");
    LagProfile p;
    p.min_lag = -half_range;
    for (int r = -half_range; r <= half_range; ++r) p.values.push_back(lorentzian(amplitude, half_width, r));
    const double t = p.total();
    for (auto& v : p.values) v /= t;
    return p;
}

LagProfile LorentzianFit::profile(int half_range) const {
    return lorentzian_profile(amplitude, half_width, half_range);
}

namespace {

struct Points {
    std::vector<double> r, y;
};

double rss_of(const Points& pts, double A, double d) {
    double s = 0.0;
    for (std::size_t k = 0; k < pts.r.size(); ++k) {
        const double e = lorentzian(A, d, pts.r[k]) - pts.y[k];
        s += e * e;
    }
    return s;
}

LorentzianFit fit_points(const Points& pts, double y0, LorentzianParams init, int window, int max_iter) {
    LorentzianFit fit;
    fit.window = window;
    double ysq = 0.0;
    for (double y : pts.y) ysq += y * y;

    double A = init.amplitude, d = init.half_width;
    if (!(A > 0.0) || !(d > 0.0) || !std::isfinite(A) || !std::isfinite(d)) {
        // moment start
        d = y0 > 0.0 ? 1.0 / (pi * y0) : 1.0;
        A = std::max(y0, 1e-300) * d * d;
    }
    double rss = rss_of(pts, A, d);
    double lambda = 1e-3;
    int it = 0;
    for (; it < max_iter; ++it) {
        double jaa = 0, jad = 0, jdd = 0, ga = 0, gd = 0;
        for (std::size_t k = 0; k < pts.r.size(); ++k) {
            const double q = pts.r[k] * pts.r[k] + d * d;
            const double fa = 1.0 / q;
            const double fd = -2.0 * A * d / (q * q);
            const double e = A / q - pts.y[k];
            jaa += fa * fa;
            jad += fa * fd;
            jdd += fd * fd;
            ga += fa * e;
            gd += fd * e;
        }
        bool accepted = false;
        while (lambda < 1e20) {
            const double a11 = jaa * (1.0 + lambda), a22 = jdd * (1.0 + lambda), a12 = jad;
            const double det = a11 * a22 - a12 * a12;
            const double sa = -(a22 * ga - a12 * gd) / det;
            const double sd = -(a11 * gd - a12 * ga) / det;
            const double An = A + sa, dn = d + sd;
            if (An > 0.0 && dn > 0.0 && std::isfinite(An) && std::isfinite(dn)) {
                const double rn = rss_of(pts, An, dn);
                if (rn <= rss) {
                    const double rel = std::max(std::abs(sa) / A, std::abs(sd) / d);
                    const double drop = rss - rn;
                    A = An;
                    d = dn;
                    rss = rn;
                    lambda = std::max(lambda / 10.0, 1e-15);
                    accepted = true;
                    if (rel < 1e-12 || drop <= 1e-16 * rss || rss <= 1e-30 * std::max(ysq, 1e-300)) {
                        fit.converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // no downhill step left: at a minimum to working precision
            fit.converged = true;
            break;
        }
        if (fit.converged) break;
    }
    fit.iterations = it + 1;
    fit.amplitude = A;
    fit.half_width = d;
    fit.residual = rss;
    fit.relative_residual = ysq > 0.0 ? std::sqrt(rss / ysq) : 0.0;
    fit.moment_half_width = y0 > 0.0 ? 1.0 / (pi * y0) : std::numeric_limits<double>::infinity();
    fit.normalization = pi * A / d;
    fit.lorentzian_regime =
        d >= 1.0 && std::abs(fit.normalization - 1.0) <= 0.05 && fit.relative_residual <= 0.1;
    return fit;
}

int fit_window(const FitOptions& o) {
    const double w = o.window_multiple * o.initial.half_width;
    int win = std::isfinite(w) ? static_cast<int>(std::ceil(w)) : o.min_window;
    return std::max(win, o.min_window);
}

}  // namespace

LorentzianFit fit_lorentzian(const LagProfile& data, const FitOptions& o) {
    const int win = fit_window(o);
    Points pts;
    for (int r = std::max(-win, data.min_lag); r <= std::min(win, data.max_lag()); ++r) {
        pts.r.push_back(r);
        pts.y.push_back(data.at(r));
    }
    if (pts.r.size() < 8) throw ConfigError("Lorentzian fit window holds fewer than 8 lags");
    return fit_points(pts, data.at(0), o.initial, win, o.max_iterations);
}

LorentzianFit fit_lorentzian(const EnvelopeEstimate& est, const FitOptions& o) {
    const int win = fit_window(o);
    std::size_t populated = 0;
    for (std::size_t k = 0; k < est.lags.size(); ++k)
        if (std::abs(est.lags[k]) <= win && est.counts[k] > 0) ++populated;
    if (populated < 8) throw ConfigError("Lorentzian fit window holds fewer than 8 populated lags");
    return fit_lorentzian(est.profile(), o);
}

double perturbative_tail(double epsilon, double delta_spacing, int r) {
    if (r == 0) throw ConfigError("perturbative tail undefined at r = 0");
    if (!(delta_spacing > 0.0)) throw ConfigError("level spacing must be positive");
    const double x = epsilon / delta_spacing;
    return x * x / (static_cast<double>(r) * static_cast<double>(r));
}

LagProfile convolve_envelope(const LagProfile& lambda) {
    const double t = lambda.total();
    if (!(std::abs(t - 1.0) <= 0.02)) throw ConfigError("envelope is not normalized (sum " + std::to_string(t) + ")");
    const std::size_t K = lambda.values.size();
    LagProfile out;
    out.min_lag = 2 * lambda.min_lag;
    out.values.assign(2 * K - 1, 0.0);
    const double s = 1.0 / (t * t);
    for (std::size_t a = 0; a < K; ++a) {
        const double va = lambda.values[a];
        if (va == 0.0) continue;
        for (std::size_t b = 0; b < K; ++b) out.values[a + b] += va * lambda.values[b];
    }
    for (auto& v : out.values) v *= s;
    return out;
}

LagProfile convolve_envelope(const EnvelopeEstimate& est) { return convolve_envelope(est.profile()); }

LagProfile convolve_envelope(const LorentzianFit& fit, int half_range) {
    return convolve_envelope(fit.profile(half_range));
}

// ---- variational free energy ----

namespace {

int resolve_half_range(const VariationalProblem& p) {
    if (!(p.epsilon_over_spacing > 0.0) || !std::isfinite(p.epsilon_over_spacing))
        throw ConfigError("variational problem needs eps/Delta > 0");
    const double dpred = predicted_params(p.epsilon_over_spacing, 1.0).half_width;
    if (p.half_range == 0) return std::max(50, static_cast<int>(std::ceil(40.0 * dpred)));
    if (static_cast<double>(p.half_range) < 20.0 * dpred)
        throw ConfigError("variational grid must span at least 20 predicted half-widths");
    return p.half_range;
}

}  // namespace

double free_energy(const VariationalProblem& p, std::span<const double> lam, std::vector<double>* grad) {
    const std::size_t N = lam.size();
    if (N < 3 || N % 2 == 0) throw ConfigError("variational grid must have 2R+1 points");
    const int R = static_cast<int>(N / 2);
    const double c = 0.5 / (p.epsilon_over_spacing * p.epsilon_over_spacing);
    std::vector<double> lam_f(N);
    for (std::size_t q = 0; q < N; ++q) lam_f[q] = std::max(lam[q], p.floor);

    double m1 = 0.0, m2 = 0.0;
    for (std::size_t q = 0; q < N; ++q) {
        const double r = static_cast<double>(static_cast<int>(q) - R);
        m1 += r * lam[q];
        m2 += r * r * lam[q];
    }
    double F = p.include_incompressibility ? c * (m2 - m1 * m1) : -c * m1 * m1;
    for (std::size_t q = 0; q < N; ++q) F -= 0.5 * std::log(lam_f[q]);

    std::vector<double> lam2;
    if (p.include_repulsion) {
        // circular autocorrelation, symmetric in s <-> N-s
        lam2.assign(N, 0.0);
        for (std::size_t s = 0; s <= N / 2; ++s) {
            double acc = 0.0;
            for (std::size_t q = 0; q + s < N; ++q) acc += lam[q] * lam[q + s];
            for (std::size_t q = N - s; q < N; ++q) acc += lam[q] * lam[q + s - N];
            lam2[s] = acc;
            if (s != 0) lam2[N - s] = acc;
        }
        for (std::size_t s = 0; s < N; ++s) F += 0.25 * std::log(lam2[s]);
    }

    if (grad) {
        grad->assign(N, 0.0);
        std::vector<double> inv;
        if (p.include_repulsion) {
            inv.resize(N);
            for (std::size_t s = 0; s < N; ++s) inv[s] = 1.0 / lam2[s];
        }
        for (std::size_t q = 0; q < N; ++q) {
            const double r = static_cast<double>(static_cast<int>(q) - R);
            double g = p.include_incompressibility ? c * (r * r - 2.0 * m1 * r) : -2.0 * c * m1 * r;
            g -= 0.5 / lam_f[q];
            if (p.include_repulsion) {
                double acc = 0.0;
                for (std::size_t s = 0; s + q < N; ++s) acc += lam[q + s] * inv[s];
                for (std::size_t s = N - q; s < N; ++s) acc += lam[q + s - N] * inv[s];
                g += 0.5 * acc;
            }
            (*grad)[q] = g;
        }
    }
    return F;
}

namespace {

struct SoftmaxMap {
    double floor;
    std::size_t N;

    std::vector<double> lambda(const std::vector<double>& u) const {
        const double mx = *std::max_element(u.begin(), u.end());
        std::vector<double> p(N);
        double z = 0.0;
        for (std::size_t q = 0; q < N; ++q) z += (p[q] = std::exp(u[q] - mx));
        const double scale = 1.0 - static_cast<double>(N) * floor;
        for (auto& v : p) v = floor + scale * v / z;
        return p;
    }

    // chain rule from dF/dLambda to dF/du
    std::vector<double> pullback(const std::vector<double>& lam, const std::vector<double>& g) const {
        const double scale = 1.0 - static_cast<double>(N) * floor;
        std::vector<double> pr(N);
        double pg = 0.0;
        for (std::size_t q = 0; q < N; ++q) {
            pr[q] = (lam[q] - floor) / scale;
            pg += pr[q] * g[q];
        }
        std::vector<double> gu(N);
        for (std::size_t q = 0; q < N; ++q) gu[q] = scale * pr[q] * (g[q] - pg);
        return gu;
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

constexpr std::size_t kStallWindow = 50;
constexpr double kStallGradient = 1e-6;

double inf_norm(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

VariationalResult minimize_free_energy(const VariationalProblem& problem) {
    VariationalProblem p = problem;
    const int R = resolve_half_range(p);
    p.half_range = R;
    const std::size_t N = static_cast<std::size_t>(2 * R + 1);
    if (!(p.floor > 0.0) || static_cast<double>(N) * p.floor >= 1.0) throw ConfigError("invalid entropy floor");
    const LorentzianParams pred = predicted_params(p.epsilon_over_spacing, 1.0);

    std::vector<double> start;
    if (p.initial) {
        start = *p.initial;
        if (start.size() != N) throw ConfigError("infeasible start: wrong grid size");
        double t = 0.0;
        for (double v : start) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("infeasible start: entries must be positive");
            t += v;
        }
        for (auto& v : start) v /= t;
    } else {
        start = lorentzian_profile(pred.amplitude, pred.half_width, R).values;
    }

    SoftmaxMap map{p.floor, N};
    std::vector<double> u(N);
    for (std::size_t q = 0; q < N; ++q) u[q] = std::log(std::max(start[q] - p.floor, 1e-300));

    auto evaluate = [&](const std::vector<double>& uu, std::vector<double>& gu) {
        const auto lam = map.lambda(uu);
        std::vector<double> g;
        const double F = free_energy(p, lam, &g);
        gu = map.pullback(lam, g);
        return F;
    };

    VariationalResult res;
    std::vector<double> g;
    double F = evaluate(u, g);
    res.history.push_back(F);

    const std::size_t memory = 10;
    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    int it = 0;
    for (; it < p.max_iterations; ++it) {
        if (inf_norm(g) < p.gradient_tolerance) {
            res.converged = true;
            break;
        }
        // two-loop recursion
        std::vector<double> d = g;
        std::vector<double> alpha(S.size());
        for (std::size_t k = S.size(); k-- > 0;) {
            alpha[k] = rho[k] * dot(S[k], d);
            for (std::size_t q = 0; q < N; ++q) d[q] -= alpha[k] * Y[k][q];
        }
        if (!S.empty()) {
            const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
            for (auto& v : d) v *= gamma;
        }
        for (std::size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * dot(Y[k], d);
            for (std::size_t q = 0; q < N; ++q) d[q] += S[k][q] * (alpha[k] - beta);
        }
        for (auto& v : d) v = -v;
        double slope = dot(g, d);
        if (!(slope < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            d = g;
            for (auto& v : d) v = -v;
            slope = dot(g, d);
        }

        // Armijo backtracking; only decreasing steps are accepted
        double step = 1.0;
        std::vector<double> un(N), gn;
        double Fn = F;
        bool ok = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t q = 0; q < N; ++q) un[q] = u[q] + step * d[q];
            Fn = evaluate(un, gn);
            if (std::isfinite(Fn) && Fn <= F + 1e-4 * step * slope && Fn <= F) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) {
            // stalled at working precision
            res.converged = inf_norm(g) < kStallGradient;
            break;
        }
        std::vector<double> s(N), y(N);
        for (std::size_t q = 0; q < N; ++q) {
            s[q] = un[q] - u[q];
            y[q] = gn[q] - g[q];
        }
        const double sy = dot(s, y);
        if (sy > 1e-300) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (S.size() > memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        u.swap(un);
        g.swap(gn);
        F = Fn;
        res.history.push_back(F);
        // F flat to rounding over the last kStallWindow iterates
        const std::size_t h = res.history.size();
        if (h > kStallWindow && res.history[h - 1 - kStallWindow] - F <= 1e-14 * std::abs(F)) {
            res.converged = inf_norm(g) < kStallGradient;
            ++it;
            break;
        }
    }
    res.iterations = it;
    res.gradient_norm = inf_norm(g);
    const auto lam = map.lambda(u);
    res.envelope.min_lag = -R;
    res.envelope.values = lam;
    res.free_energy = F;
    FitOptions fo;
    fo.initial = pred;
    res.fit = fit_lorentzian(res.envelope, fo);
    res.moment_half_width = res.fit.moment_half_width;
    return res;
}

TailBoundResult tail_integral_bound(double delta, double T, double e_max, double grid_step) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("tail bound: delta must be >= 0");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("tail bound: T must be positive");
    if (!std::isfinite(e_max)) throw ConfigError("tail bound: divergent parameters (unbounded e_max)");
    if (!(e_max > 0.5 * T)) throw ConfigError("tail bound: e_max must lie beyond T/2");

    TailBoundResult out;
    out.bound = 8.0 / pi * delta * std::exp(e_max / T);
    out.predicted_peak = 2.0 * delta * delta / T;
    if (delta == 0.0) {
        out.satisfied = true;
        return out;
    }
    const double w2 = 4.0 * delta * delta;
    auto f = [&](double x) { return std::exp(x / T) * (2.0 * delta / pi) / (x * x + w2); };
    out.integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.5 * T, e_max, 20, 1e-13);
    out.satisfied = out.integral <= out.bound;

    double h = grid_step > 0.0 ? grid_step : delta / 50.0;
    h = std::max(h, T * 1e-6);
    out.grid_step = h;
    double best = -1.0;
    const std::size_t steps = static_cast<std::size_t>(T / h);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double x = static_cast<double>(k) * h;
        const double v = f(x);
        if (v > best) {
            best = v;
            out.peak_location = x;
        }
    }
    return out;
}

}  // namespace ergolab
