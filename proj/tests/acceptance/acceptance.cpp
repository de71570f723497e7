// Acceptance checks, one per criterion. Usage: acceptance [--criterion N]
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "ergolab/bandcheck.hpp"
#include "ergolab/crystal.hpp"
#include "ergolab/dynamics.hpp"
#include "ergolab/envelope.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/model.hpp"
#include "ergolab/observables.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/runner.hpp"
#include "ergolab/spectra.hpp"
#include "ergolab/stats.hpp"

using namespace ergolab;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

void note(const char* f, ...) __attribute__((format(printf, 1, 2)));
void note(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    std::printf("    ");
    std::vprintf(f, ap);
    std::printf("\n");
    va_end(ap);
    std::fflush(stdout);
}

const char* mark(bool ok) { return ok ? "ok  " : "FAIL"; }

ResultsBundle run(const json& j) { return run_experiment(config_from_json(j)); }

json model1000() { return json{{"n", 1000}, {"delta", 1.0}, {"band", 300}}; }

// ---- 1
bool c1() {
    const std::vector<double> eps = {1.0, 1.5, 2.0, 3.0};
    const auto b = run({{"kind", "envelope"},
                        {"model", model1000()},
                        {"sweep", {{"epsilon", eps}}},
                        {"realizations", 20},
                        {"edge_exclusion", 0.1},
                        {"seed", 1001}});
    bool ok = true;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        const auto& s = b.summaries.at("lorentzian_fit_" + std::to_string(k));
        if (s["fit"].is_null()) {
            note("eps=%.2f fit failed", eps[k]);
            ok = false;
            continue;
        }
        const double d = s["fit"]["half_width"], pred = pi * eps[k] * eps[k] / 2.0;
        const bool in = std::abs(d / pred - 1.0) <= 0.15;
        note("%s eps=%.2f  fitted delta=%.3f  predicted=%.3f  ratio=%.3f", mark(in), eps[k], d, pred, d / pred);
        ok = ok && in;
    }
    const auto& w = b.summaries.at("width_law");
    const bool slope_ok = w.contains("slope") && std::abs(w["slope"].get<double>() - 2.0) <= 0.2;
    note("%s log-log slope of delta vs eps = %.3f (target 2.0 +- 0.2)", mark(slope_ok),
         w.value("slope", std::nan("")));
    return ok && slope_ok;
}

// ---- 2
bool c2() {
    const auto b = run({{"kind", "envelope"}, {"model", model1000()}, {"realizations", 20}, {"seed", 2002}});
    const double peak = b.summaries.at("lorentzian_fit")["peak"];
    const double target = 1.0 / (2.0 * pi * pi);
    const bool ok = std::abs(peak / target - 1.0) <= 0.15;
    note("%s Lambda(0)=%.5f  1/(2 pi^2)=%.5f  ratio=%.3f", mark(ok), peak, target, peak / target);
    return ok;
}

// ---- 3
bool c3() {
    const std::size_t n = 600, R = 200;
    const double eps = 0.01;
    const auto spec = build_unperturbed_spectrum(n, 1.0);
    EnvelopeAccumulator acc(n, 0.1);
    const auto seeds = realization_seeds(3003, R);
    std::vector<std::vector<double>> means(R);
    parallel_for(R, 1, [&](std::size_t k) {
        PerturbationParams p;
        p.epsilon = eps;
        p.band_cutoff = 300;
        p.seed = seeds[k];
        means[k] = acc.lag_means(diagonalize(assemble_hamiltonian(spec, sample_perturbation(spec, p))));
    });
    for (auto& m : means) acc.add_means(std::move(m));
    const auto e = acc.finish();
    bool ok = true;
    for (int r = 2; r <= 10; ++r) {
        const double m = 0.5 * (e.value_at(r) + e.value_at(-r));
        const double t = perturbative_tail(eps, 1.0, r);
        const bool in = m / t <= 1.5 && t / m <= 1.5;
        note("%s |r|=%2d  mean c^2=%.4e  (eps/Delta)^2/r^2=%.4e  ratio=%.3f", mark(in), r, m, t, m / t);
        ok = ok && in;
    }
    return ok;
}

// ---- 4
bool c4() {
    VariationalProblem p;
    p.epsilon_over_spacing = 2.0;
    const auto on = minimize_free_energy(p);
    p.include_repulsion = false;
    const auto off = minimize_free_energy(p);
    const double ratio = off.fit.half_width / on.fit.half_width;
    const double pred = pi * 2.0;
    const bool r_ok = std::abs(ratio - 2.0) <= 0.5;
    const bool w_ok = std::abs(on.fit.half_width / pred - 1.0) <= 0.2;
    note("%s width ratio off/on = %.3f (%.3f / %.3f), target 2.0 +- 0.5", mark(r_ok), ratio, off.fit.half_width,
         on.fit.half_width);
    note("%s width with repulsion %.3f vs pi eps^2/2 = %.3f (ratio %.3f)", mark(w_ok), on.fit.half_width, pred,
         on.fit.half_width / pred);
    note("converged: on=%d (%d it) off=%d (%d it)", on.converged, on.iterations, off.converged, off.iterations);
    return r_ok && w_ok && on.converged && off.converged;
}

// ---- 5
bool c5() {
    const std::vector<double> eps = {1.5, 2.0, 3.0, 4.0};
    const auto b = run({{"kind", "eth-variance"},
                        {"model", model1000()},
                        {"sweep", {{"epsilon", eps}}},
                        {"realizations", 50},
                        {"observable", {{"kind", "banded_random"}, {"width", 1}, {"scale", 1.0}}},
                        {"seed", 5005}});
    bool ratio_ok = false, bound_ok = true;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        const auto& s = b.summaries.at("eth_variance_" + std::to_string(k));
        const double ratio = s["ratio"];
        bound_ok = bound_ok && s["bound_holds_all"].get<bool>();
        const bool in = std::abs(ratio - 1.0) <= 0.3;
        if (eps[k] == 2.0) ratio_ok = in;
        note("%s eps=%.1f delta=%.2f measured=%.4e +- %.1e exact_sum=%.4e ratio=%.3f bound_all=%d",
             eps[k] == 2.0 ? mark(in) : "    ", eps[k], s["fit"]["half_width"].get<double>(),
             s["variance"].get<double>(), s["bootstrap_se"].get<double>(), s["exact_sum"].get<double>(), ratio,
             s["bound_holds_all"].get<bool>());
    }
    const auto& law = b.summaries.at("variance_law");
    const double slope = law.value("slope", std::nan(""));
    const bool slope_ok = std::abs(slope + 1.0) <= 0.25;
    note("%s exact_sum <= 2 max(Lambda) <A^2>_micro on every probe and point", mark(bound_ok));
    note("%s log-log slope of variance vs delta = %.3f (target -1.0 +- 0.25)", mark(slope_ok), slope);
    return ratio_ok && bound_ok && slope_ok;
}

// ---- 6
bool c6() {
    const auto b = run({{"kind", "quench"},
                        {"model", model1000()},
                        {"realizations", 30},
                        {"quench", {{"adjacent", true}}},
                        {"seed", 6006}});
    const auto& s = b.summaries.at("quench");
    const double m = s["measured_mean"], pred = s["prediction"], se = s["bootstrap_se"];
    const bool a = std::abs(m - pred) <= 3.0 * se;
    const bool d = s["dropped_ratio"].get<double>() < 0.05;
    const double ad = s["adjacent_difference"], adse = s["adjacent_difference_se"];
    const bool c = std::abs(ad) <= 3.0 * adse;
    note("%s measured %.6f  predicted %.6f  |diff|=%.2e  3 SE=%.2e", mark(a), m, pred, std::abs(m - pred), 3 * se);
    note("%s dropped term ratio %.3e (< 0.05)", mark(d), s["dropped_ratio"].get<double>());
    note("%s adjacent start: difference %.2e, 3 SE=%.2e", mark(c), ad, 3 * adse);
    return a && d && c;
}

// ---- 7
bool c7() {
    const auto b = run({{"kind", "superposition"}, {"model", model1000()}, {"realizations", 30}, {"seed", 7007}});
    const auto& s = b.summaries.at("superposition");
    const bool bound = s["bound_holds_all"];
    const double m = s["diagonal_mean"], pred = s["prediction"], se = s["diagonal_se"];
    const bool mix = std::abs(m - pred) <= 3.0 * se;
    note("%s |interference| max %.3e <= bound %.3e on all %d instances", mark(bound),
         s["max_abs_interference"].get<double>(), s["bound"].get<double>(), s["realizations"].get<int>());
    note("%s diagonal term %.6f vs weighted quench predictions %.6f (3 SE=%.2e)", mark(mix), m, pred, 3 * se);
    return bound && mix;
}

// ---- 8
bool c8() {
    // 50-level system
    const std::size_t n = 50;
    const auto spec = build_unperturbed_spectrum(n, 1.0);
    PerturbationParams p;
    p.epsilon = 1.0;
    p.band_cutoff = 15;
    p.seed = 8008;
    const auto sys = diagonalize(assemble_hamiltonian(spec, sample_perturbation(spec, p)));
    const auto A = make_diagonal_profile(n, [](double x) { return x; });
    const auto psi = basis_state(n, 25);
    const double inf = infinite_time_average(sys, psi, A);
    const TimeEvolution ev(sys, psi, A);
    const double run_avg = running_time_average(ev, 1e4, 0.02);
    const bool a = std::abs(run_avg - inf) <= 1e-3;
    note("%s 50 levels: running average %.6f  spectral formula %.6f  |diff|=%.2e", mark(a), run_avg, inf,
         std::abs(run_avg - inf));

    // 2x2: f = (0, 1), coupling g
    const double g = 0.1, W = std::sqrt(1.0 + 4.0 * g * g);
    Eigen::MatrixXd m(2, 2);
    m << 0.0, g, g, 1.0;
    const auto s2 = diagonalize(SymmetricMatrix(m));
    SymmetricMatrix proj(2);
    proj.set(1, 1, 1.0);
    const auto B = make_custom(proj);
    double err = std::abs(infinite_time_average(s2, basis_state(2, 0), B) - 2.0 * g * g / (W * W));
    for (double t : {0.5, 2.0, 17.0, 300.0})
        err = std::max(err, std::abs(finite_time_expectation(s2, basis_state(2, 0), B, t) -
                                     4.0 * g * g / (W * W) * std::pow(std::sin(W * t / 2.0), 2)));
    const bool b2 = err <= 1e-10;
    note("%s 2x2 closed form: max error %.2e", mark(b2), err);
    return a && b2;
}

// ---- 9
bool c9() {
    struct Case {
        int d;
        std::vector<int> L;
        double target, tol;
    };
    const std::vector<Case> cases = {{3, {4, 6, 8, 10}, -2.0 / 3.0, 0.15},
                                     {2, {6, 10, 16, 24}, -0.5, 0.15},
                                     {1, {64, 128, 256}, -1.0, 0.2}};
    bool ok = true;
    for (const auto& c : cases) {
        const auto r = x2_fluctuation_scaling(c.d, c.L, 1.0, 2000, 9009);
        const bool in = std::abs(r.exponent - c.target) <= c.tol;
        note("%s d=%d exponent %.3f +- %.3f (target %.3f +- %.2f)", mark(in), c.d, r.exponent, r.exponent_se,
             c.target, c.tol);
        ok = ok && in;
    }
    return ok;
}

// ---- 10
bool c10() {
    const auto sys = build_fock_system(8, 4, Statistics::boson);
    const auto r = averaged_offdiagonal_decay(sys, make_gaussian_potential(8, 8.0));
    const double expect = -1.0 / r.temperature;
    const double ratio = r.slope / expect;
    const bool mono = r.decreasing_beyond_T;
    const bool slope = ratio >= 0.5 && ratio <= 2.0;
    note("T=%.3f, %zu kept bins, %zu reference states", r.temperature, r.bins.size(), r.reference_states);
    note("%s binned log-average strictly decreasing beyond gap T", mark(mono));
    note("%s slope %.4f vs -1/T=%.4f (ratio %.3f, within a factor of 2)", mark(slope), r.slope, expect, ratio);
    return mono && slope;
}

// ---- 11
bool c11() {
    bool ok = true;
    int points = 0;
    for (double d : {0.5, 1.0, 2.0, 5.0})
        for (double T : {50.0, 100.0, 200.0})
            for (double em : {1.0, 2.0, 4.0}) {
                const auto r = tail_integral_bound(d, T, em * T);
                const bool in = r.satisfied && std::abs(r.peak_location - r.predicted_peak) <= r.grid_step;
                if (!in)
                    note("FAIL delta=%.1f T=%.0f e_max=%.0f integral=%.4e bound=%.4e peak=%.4f pred=%.4f", d, T,
                         em * T, r.integral, r.bound, r.peak_location, r.predicted_peak);
                ok = ok && in;
                ++points;
            }
    note("%s %d grid points: integral <= bound and peak at 2 delta^2/T within one grid step", mark(ok), points);
    return ok;
}

// ---- 12
std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int cli(const std::string& args) {
    const std::string cmd = std::string(ERGOLAB_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool same_outputs(const fs::path& a, const fs::path& b) {
    bool ok = true;
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto name = e.path().filename();
        if (name == "manifest.json") {
            auto ma = json::parse(slurp(a / name)), mb = json::parse(slurp(b / name));
            for (auto* m : {&ma, &mb}) {
                m->erase("started");
                m->erase("finished");
                (*m)["config"].erase("jobs");
                (*m)["config"].erase("output");
            }
            ok = ok && ma == mb;
        } else {
            ok = ok && fs::exists(b / name) && slurp(e.path()) == slurp(b / name);
        }
        ++files;
    }
    for (const auto& e : fs::directory_iterator(b)) ok = ok && fs::exists(a / e.path().filename());
    return ok && files > 1;
}

bool c12() {
    // invariants on every decomposition
    double worst_res = 0.0, worst_orth = 0.0;
    int count = 0;
    for (std::size_t n : {20ul, 200ul, 1000ul})
        for (double eps : {0.0, 0.01, 1.0, 4.0})
            for (std::uint64_t k = 0; k < 2; ++k) {
                const auto spec = build_unperturbed_spectrum(n, 1.0);
                PerturbationParams p;
                p.epsilon = eps;
                p.band_cutoff = std::min<std::size_t>(n - 1, 300);
                p.seed = substream_seed(1212, k + 10 * n);
                const auto s = diagonalize(assemble_hamiltonian(spec, sample_perturbation(spec, p)));
                worst_res = std::max(worst_res, s.residual_norm / std::max(1.0, s.eigenvalues.cwiseAbs().maxCoeff()));
                worst_orth = std::max(worst_orth, s.orthogonality_error);
                ++count;
            }
    const bool inv = worst_res <= kResidualTolerance && worst_orth <= kOrthogonalityTolerance;
    note("%s %d decompositions: max relative residual %.2e, max |C^T C - I| %.2e", mark(inv), count, worst_res,
         worst_orth);

    // bit-identical reruns at different --jobs
    const fs::path root = fs::temp_directory_path() / "ergolab_acceptance_c12";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string common = " --seed 4242 --realizations 6 --set model.n=300 --set model.band=100 --overwrite";
    bool repro = true;
    for (const std::string kind : {"envelope", "quench", "eth-variance"}) {
        const auto d1 = root / (kind + "_j1"), d3 = root / (kind + "_j3"), d1b = root / (kind + "_j1b");
        int rc = cli(kind + common + " --jobs 1 --out " + d1.string());
        rc |= cli(kind + common + " --jobs 3 --out " + d3.string());
        rc |= cli(kind + common + " --jobs 1 --out " + d1b.string());
        const bool same = rc == 0 && same_outputs(d1, d3) && same_outputs(d1, d1b);
        note("%s %s: --jobs 1, --jobs 3 and a rerun produce identical files", mark(same), kind.c_str());
        repro = repro && same;
    }

    // CSV/JSON round trip: recompute summaries from the CSV tables
    bool trip = true;
    {
        const auto dir = root / "envelope_j1";
        const auto t = read_csv((dir / "envelope.csv").string());
        const auto s = json::parse(slurp(dir / "lorentzian_fit.json"));
        double total = 0.0, peak = std::nan("");
        for (const auto& row : t.rows) {
            total += row[1];
            if (row[0] == 0.0) peak = row[1];
        }
        const bool ok1 = std::abs(total - s["total"].get<double>()) <= 1e-9 &&
                         std::abs(peak - s["peak"].get<double>()) <= 1e-9;
        note("%s envelope.csv reproduces total and peak in lorentzian_fit.json", mark(ok1));
        trip = trip && ok1;
    }
    {
        const auto dir = root / "quench_j1";
        const auto t = read_csv((dir / "quench.csv").string());
        const auto s = json::parse(slurp(dir / "quench.json"));
        const double e = s["e"];
        std::vector<double> v0, v1;
        for (const auto& row : t.rows) (row[1] == e ? v0 : v1).push_back(row[2]);
        const bool ok2 = std::abs(mean(v0) - s["measured_mean"].get<double>()) <= 1e-9 &&
                         std::abs(mean(v1) - s["adjacent_mean"].get<double>()) <= 1e-9;
        note("%s quench.csv reproduces the means in quench.json", mark(ok2));
        trip = trip && ok2;
    }
    {
        const auto dir = root / "eth-variance_j1";
        const auto t = read_csv((dir / "eth_samples.csv").string());
        const auto s = json::parse(slurp(dir / "eth_variance.json"));
        std::map<double, std::vector<double>> by_probe;
        for (const auto& row : t.rows) by_probe[row[1]].push_back(row[2]);
        double v = 0.0;
        for (const auto& [i, xs] : by_probe) v += sample_variance(xs);
        v /= static_cast<double>(by_probe.size());
        const bool ok3 = std::abs(v - s["variance"].get<double>()) <= 1e-9 * std::max(1.0, std::abs(v));
        note("%s eth_samples.csv reproduces the variance in eth_variance.json", mark(ok3));
        trip = trip && ok3;
    }
    fs::remove_all(root);
    return inv && repro && trip;
}

struct Criterion {
    int id;
    const char* title;
    std::function<bool()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    pin_blas_threads();
    int only = 0;
    for (int k = 1; k + 1 < argc; ++k)
        if (std::string(argv[k]) == "--criterion") only = std::atoi(argv[k + 1]);

    const std::vector<Criterion> all = {
        {1, "Lorentzian width law", c1},
        {2, "envelope peak 1/(pi delta)", c2},
        {3, "perturbative tail", c3},
        {4, "variational factor of two", c4},
        {5, "ETH variance", c5},
        {6, "quench thermalization", c6},
        {7, "interference suppression", c7},
        {8, "fine-grained ergodic theorem", c8},
        {9, "crystal fluctuation scaling", c9},
        {10, "band decay", c10},
        {11, "tail bound", c11},
        {12, "infrastructure properties", c12},
    };
    int failed = 0;
    for (const auto& c : all) {
        if (only != 0 && c.id != only) continue;
        std::printf("C%d %s\n", c.id, c.title);
        std::fflush(stdout);
        bool ok = false;
        try {
            ok = c.fn();
        } catch (const std::exception& e) {
            note("exception: %s", e.what());
        }
        std::printf("%s C%d %s\n", ok ? "PASS" : "FAIL", c.id, c.title);
        std::fflush(stdout);
        if (!ok) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
