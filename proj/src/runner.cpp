#include "ergolab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "ergolab/bandcheck.hpp"
#include "ergolab/crystal.hpp"
#include "ergolab/dynamics.hpp"
#include "ergolab/envelope.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/model.hpp"
#include "ergolab/observables.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/spectra.hpp"
#include "ergolab/stats.hpp"

namespace fs = std::filesystem;

namespace ergolab {

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k = {"envelope", "varfe",   "eth-variance", "quench",
                                               "superposition", "crystal", "bandcheck", "tailbound"};
    return k;
}

// ---------------------------------------------------------------- config

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get(const json& j, const char* key, T def, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad type for '" + std::string(key) + "' in " + where);
    }
}

std::size_t get_count(const json& j, const char* key, std::size_t def, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return def;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("'" + std::string(key) + "' in " + where + " must be a nonnegative integer");
    return v.get<std::size_t>();
}

std::optional<std::size_t> get_opt_count(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return get_count(j, key, 0, where);
}

}  // namespace

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
    const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
        node = &(*node)[parts[k]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    (*node)[parts.back()] = value;
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, {"kind", "model", "sweep", "realizations", "seed", "output", "jobs", "edge_exclusion", "fit_window",
                   "prediction", "observable", "probes", "quench", "superposition", "varfe", "crystal", "bandcheck",
                   "tailbound"},
               "config");
    ExperimentConfig c;
    c.raw = j;
    c.kind = get<std::string>(j, "kind", "", "config");
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
        throw ConfigError("unknown experiment kind '" + c.kind + "'");

    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"n", "delta", "epsilon", "band", "taper", "temperature", "jitter"}, "model");
        c.model.n = get_count(m, "n", c.model.n, "model");
        c.model.delta = get<double>(m, "delta", c.model.delta, "model");
        c.model.epsilon = get<double>(m, "epsilon", c.model.epsilon, "model");
        c.model.band = get_count(m, "band", c.model.band, "model");
        c.model.taper = get<std::string>(m, "taper", c.model.taper, "model");
        c.model.temperature = get<double>(m, "temperature", c.model.temperature, "model");
        c.model.jitter = get<double>(m, "jitter", c.model.jitter, "model");
    }
    if (c.model.n < 2) throw ConfigError("model.n must be >= 2");
    if (!(c.model.delta > 0.0)) throw ConfigError("model.delta must be positive");
    if (c.model.taper != "hard" && c.model.taper != "exponential")
        throw ConfigError("model.taper must be 'hard' or 'exponential'");
    if (c.model.taper == "exponential" && !(c.model.temperature > 0.0))
        throw ConfigError("exponential taper needs model.temperature > 0");
    if (c.model.band > c.model.n - 1) throw ConfigError("model.band must be <= n-1");
    if (!(c.model.jitter >= 0.0) || c.model.jitter >= c.model.delta)
        throw ConfigError("model.jitter must be in [0, delta)");

    c.epsilons = {c.model.epsilon};
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        check_keys(s, {"epsilon"}, "sweep");
        if (s.contains("epsilon")) {
            try {
                c.epsilons = s.at("epsilon").get<std::vector<double>>();
            } catch (const json::exception&) {
                throw ConfigError("sweep.epsilon must be a list of numbers");
            }
        }
    }
    for (double e : c.epsilons)
        if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("epsilon values must be >= 0");

    c.realizations = get_count(j, "realizations", c.realizations, "config");
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
            throw ConfigError("seed must be a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    c.output = get<std::string>(j, "output", "", "config");
    c.jobs = static_cast<unsigned>(get_count(j, "jobs", 1, "config"));
    if (c.jobs == 0) c.jobs = 1;
    c.edge_exclusion = get<double>(j, "edge_exclusion", c.edge_exclusion, "config");
    if (!(c.edge_exclusion >= 0.0 && c.edge_exclusion < 0.5)) throw ConfigError("edge_exclusion must be in [0, 0.5)");
    c.fit_window = get<double>(j, "fit_window", c.fit_window, "config");
    if (!(c.fit_window > 0.0)) throw ConfigError("fit_window must be positive");
    c.prediction = get<std::string>(j, "prediction", c.prediction, "config");
    if (c.prediction != "fitted" && c.prediction != "closed_form")
        throw ConfigError("prediction must be 'fitted' or 'closed_form'");

    if (j.contains("observable")) {
        const auto& o = j.at("observable");
        check_keys(o, {"kind", "profile", "width", "scale", "seed"}, "observable");
        c.observable.kind = get<std::string>(o, "kind", c.observable.kind, "observable");
        c.observable.profile = get<std::string>(o, "profile", c.observable.profile, "observable");
        c.observable.width = get_count(o, "width", c.observable.width, "observable");
        c.observable.scale = get<double>(o, "scale", c.observable.scale, "observable");
        if (o.contains("seed")) c.observable.seed = get_count(o, "seed", 0, "observable");
    }
    if (c.observable.kind != "diagonal_profile" && c.observable.kind != "banded_random")
        throw ConfigError("observable.kind must be 'diagonal_profile' or 'banded_random'");
    if (c.observable.profile != "linear" && c.observable.profile != "constant" &&
        c.observable.profile != "quadratic")
        throw ConfigError("observable.profile must be linear, constant or quadratic");
    if (c.observable.kind == "banded_random" && (c.observable.width > c.model.n - 1 || !(c.observable.scale > 0.0)))
        throw ConfigError("invalid banded observable width/scale");

    if (j.contains("probes")) {
        const auto& p = j.at("probes");
        check_keys(p, {"first", "last", "step"}, "probes");
        c.probes.first = get_opt_count(p, "first", "probes");
        c.probes.last = get_opt_count(p, "last", "probes");
        c.probes.step = get_opt_count(p, "step", "probes");
        if (c.probes.step && *c.probes.step == 0) throw ConfigError("probes.step must be positive");
    }
    if (j.contains("quench")) {
        const auto& q = j.at("quench");
        check_keys(q, {"index", "adjacent", "time_series"}, "quench");
        c.quench.index = get_opt_count(q, "index", "quench");
        c.quench.adjacent = get<bool>(q, "adjacent", true, "quench");
        if (q.contains("time_series") && !q.at("time_series").is_null()) {
            const auto& t = q.at("time_series");
            check_keys(t, {"t_max", "samples"}, "quench.time_series");
            TimeSeriesConfig ts;
            ts.t_max = get<double>(t, "t_max", ts.t_max, "quench.time_series");
            ts.samples = get_count(t, "samples", ts.samples, "quench.time_series");
            if (!(ts.t_max > 0.0) || ts.samples < 2) throw ConfigError("time series needs t_max > 0, samples >= 2");
            c.quench.time_series = ts;
        }
    }
    if (c.quench.index && *c.quench.index + (c.quench.adjacent ? 1 : 0) >= c.model.n)
        throw ConfigError("quench.index out of range");
    if (j.contains("superposition")) {
        const auto& s = j.at("superposition");
        check_keys(s, {"components"}, "superposition");
        if (s.contains("components")) {
            for (const auto& comp : s.at("components")) {
                if (!comp.is_array() || comp.size() < 2 || comp.size() > 3)
                    throw ConfigError("superposition components are [index, re] or [index, re, im]");
                SuperpositionComponent sc;
                try {
                    sc.index = comp.at(0).get<std::size_t>();
                    sc.amplitude = {comp.at(1).get<double>(), comp.size() == 3 ? comp.at(2).get<double>() : 0.0};
                } catch (const json::exception&) {
                    throw ConfigError("bad superposition component");
                }
                if (sc.index >= c.model.n) throw ConfigError("superposition index out of range");
                c.superposition.components.push_back(sc);
            }
        }
    }
    if (j.contains("varfe")) {
        const auto& v = j.at("varfe");
        check_keys(v, {"half_range"}, "varfe");
        c.varfe.half_range = static_cast<int>(get_count(v, "half_range", 0, "varfe"));
    }
    if (j.contains("crystal")) {
        const auto& k = j.at("crystal");
        check_keys(k, {"dimension", "sizes", "energy_per_site", "samples", "tolerance_fraction"}, "crystal");
        c.crystal.dimension = get<int>(k, "dimension", c.crystal.dimension, "crystal");
        c.crystal.sizes = get<std::vector<int>>(k, "sizes", c.crystal.sizes, "crystal");
        c.crystal.energy_per_site = get<double>(k, "energy_per_site", c.crystal.energy_per_site, "crystal");
        c.crystal.samples = get_count(k, "samples", c.crystal.samples, "crystal");
        c.crystal.tolerance_fraction = get<double>(k, "tolerance_fraction", c.crystal.tolerance_fraction, "crystal");
    }
    if (c.kind == "crystal") {
        if (c.crystal.dimension < 1 || c.crystal.dimension > 5) throw ConfigError("crystal.dimension must be 1..5");
        for (int L : c.crystal.sizes)
            if (L < 2) throw ConfigError("crystal sizes must be >= 2");
    }
    if (j.contains("bandcheck")) {
        const auto& b = j.at("bandcheck");
        check_keys(b,
                   {"levels", "particles", "statistics", "cap", "range", "strength", "reference_fraction", "window",
                    "entropy_window", "bin_width", "min_count"},
                   "bandcheck");
        auto& B = c.bandcheck;
        B.levels = get_count(b, "levels", B.levels, "bandcheck");
        B.particles = get_count(b, "particles", B.particles, "bandcheck");
        B.statistics = get<std::string>(b, "statistics", B.statistics, "bandcheck");
        B.cap = get_count(b, "cap", B.cap, "bandcheck");
        B.range = get<double>(b, "range", B.range, "bandcheck");
        B.strength = get<double>(b, "strength", B.strength, "bandcheck");
        B.reference_fraction = get<double>(b, "reference_fraction", B.reference_fraction, "bandcheck");
        B.window = get<double>(b, "window", B.window, "bandcheck");
        B.entropy_window = get<double>(b, "entropy_window", B.entropy_window, "bandcheck");
        B.bin_width = get<double>(b, "bin_width", B.bin_width, "bandcheck");
        B.min_count = get_count(b, "min_count", B.min_count, "bandcheck");
    }
    if (c.bandcheck.statistics != "boson" && c.bandcheck.statistics != "fermion")
        throw ConfigError("bandcheck.statistics must be 'boson' or 'fermion'");
    if (j.contains("tailbound")) {
        const auto& t = j.at("tailbound");
        check_keys(t, {"delta", "T", "e_max", "grid_step"}, "tailbound");
        c.tailbound.delta = get<std::vector<double>>(t, "delta", c.tailbound.delta, "tailbound");
        c.tailbound.T = get<std::vector<double>>(t, "T", c.tailbound.T, "tailbound");
        c.tailbound.e_max = get<std::vector<double>>(t, "e_max", c.tailbound.e_max, "tailbound");
        c.tailbound.grid_step = get<double>(t, "grid_step", 0.0, "tailbound");
    }

    const bool needs_ensemble = c.kind == "envelope" || c.kind == "eth-variance" || c.kind == "quench" ||
                                c.kind == "superposition";
    if (needs_ensemble && c.realizations == 0) throw ConfigError("realizations must be >= 1");
    if (c.kind == "eth-variance" && c.realizations < 2) throw ConfigError("eth-variance needs at least 2 realizations");
    return c;
}

// ---------------------------------------------------------------- plumbing

std::vector<std::uint64_t> realization_seeds(std::uint64_t master, std::size_t R) {
    std::vector<std::uint64_t> s(R);
    for (std::size_t k = 0; k < R; ++k) s[k] = substream_seed(master, k);
    return s;
}

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    const std::size_t workers = std::min<std::size_t>(std::max(1u, jobs), count);
    std::vector<std::exception_ptr> errors(count);
    if (workers == 1) {
        for (std::size_t k = 0; k < count; ++k) {
            try {
                fn(k);
            } catch (...) {
                errors[k] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::atomic<bool> failed{false};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= count || failed.load()) return;
                    try {
                        fn(k);
                    } catch (...) {
                        errors[k] = std::current_exception();
                        failed.store(true);
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON cannot hold NaN/inf
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string suffix(std::size_t point, std::size_t points) {
    return points == 1 ? std::string() : "_" + std::to_string(point);
}

// ---------------------------------------------------------------- model ensembles

struct Ensemble {
    const ExperimentConfig* cfg;
    UnperturbedSpectrum spec;
    std::vector<std::uint64_t> seeds;

    EigenSystem realize(double eps, std::size_t k) const {
        PerturbationParams p;
        p.epsilon = eps;
        p.band_cutoff = cfg->model.band;
        p.taper = cfg->model.taper == "exponential" ? TaperKind::exponential : TaperKind::hard;
        p.temperature = cfg->model.temperature;
        p.seed = seeds[k];
        return diagonalize(assemble_hamiltonian(spec, sample_perturbation(spec, p)));
    }
};

Ensemble make_ensemble(const ExperimentConfig& c) {
    std::optional<UniformJitter> jit;
    if (c.model.jitter > 0.0) jit = UniformJitter{c.model.jitter, substream_seed(c.seed, 0x6a17735eedULL)};
    return Ensemble{&c, build_unperturbed_spectrum(c.model.n, c.model.delta, jit),
                    realization_seeds(c.seed, c.realizations)};
}

Observable make_config_observable(const ExperimentConfig& c) {
    const auto& o = c.observable;
    if (o.kind == "banded_random") {
        const std::uint64_t s = o.seed ? *o.seed : substream_seed(c.seed, 0x0b5e7ab1eULL);
        return make_banded_random(c.model.n, o.width, o.scale, s);
    }
    if (o.profile == "constant") return make_diagonal_profile(c.model.n, [](double) { return 1.0; });
    if (o.profile == "quadratic") return make_diagonal_profile(c.model.n, [](double x) { return x * x; });
    return make_diagonal_profile(c.model.n, [](double x) { return x; });
}

FitOptions fit_options(const ExperimentConfig& c, double eps) {
    FitOptions fo;
    fo.initial = predicted_params(eps, c.model.delta);
    fo.window_multiple = c.fit_window;
    return fo;
}

json fit_json(const LorentzianFit& f) {
    return json{{"amplitude", num(f.amplitude)},
                {"half_width", num(f.half_width)},
                {"residual", num(f.residual)},
                {"relative_residual", num(f.relative_residual)},
                {"method", f.method},
                {"moment_half_width", num(f.moment_half_width)},
                {"normalization", num(f.normalization)},
                {"window", f.window},
                {"converged", f.converged},
                {"lorentzian_regime", f.lorentzian_regime}};
}

Table envelope_table(const EnvelopeEstimate& e) {
    Table t{{"lag", "value", "count"}, {}};
    for (std::size_t k = 0; k < e.lags.size(); ++k)
        t.rows.push_back({static_cast<double>(e.lags[k]), e.values[k], static_cast<double>(e.counts[k])});
    return t;
}

// Envelope used for predictions: fitted Lorentzian or closed form, on |r| <= band.
LagProfile prediction_envelope(const ExperimentConfig& c, double eps, const LorentzianFit& fit) {
    const int H = static_cast<int>(std::max<std::size_t>(c.model.band, 1));
    if (c.prediction == "closed_form") {
        const auto p = predicted_params(eps, c.model.delta);
        return lorentzian_profile(p.amplitude, p.half_width, H);
    }
    return fit.profile(H);
}

std::vector<std::size_t> probe_indices(const ExperimentConfig& c) {
    const std::size_t n = c.model.n;
    const std::size_t first = c.probes.first.value_or(n / 5);
    const std::size_t last = c.probes.last.value_or(4 * n / 5);
    const std::size_t step = c.probes.step.value_or(std::max<std::size_t>(1, n / 25));
    if (last >= n || first > last) throw ConfigError("probe range out of bounds");
    std::vector<std::size_t> p;
    for (std::size_t i = first; i <= last; i += step) p.push_back(i);
    return p;
}

struct PointError {
    std::size_t point;
    double epsilon;
    std::string message;
};

json errors_json(const std::vector<PointError>& errs) {
    json a = json::array();
    for (const auto& e : errs) a.push_back({{"point", e.point}, {"epsilon", e.epsilon}, {"message", e.message}});
    return a;
}

// ---------------------------------------------------------------- kinds

void run_envelope(const ExperimentConfig& c, ResultsBundle& b) {
    const Ensemble ens = make_ensemble(c);
    const std::size_t P = c.epsilons.size();
    std::vector<double> eps_ok, width_ok;
    json sweep = json::array();
    std::vector<PointError> errs;
    for (std::size_t p = 0; p < P; ++p) {
        const double eps = c.epsilons[p];
        const std::string sfx = suffix(p, P);
        try {
            EnvelopeAccumulator acc(c.model.n, c.edge_exclusion);
            std::vector<std::vector<double>> means(c.realizations);
            parallel_for(c.realizations, c.jobs, [&](std::size_t k) { means[k] = acc.lag_means(ens.realize(eps, k)); });
            for (auto& m : means) acc.add_means(std::move(m));
            const auto est = acc.finish();
            b.tables["envelope" + sfx] = envelope_table(est);
            const auto pred = predicted_params(eps, c.model.delta);
            json s{{"epsilon", eps},
                   {"delta_spacing", c.model.delta},
                   {"predicted_amplitude", pred.amplitude},
                   {"predicted_half_width", pred.half_width},
                   {"peak", est.value_at(0)},
                   {"total", est.total()},
                   {"realizations", c.realizations},
                   {"edge_exclusion", c.edge_exclusion},
                   {"table", "envelope" + sfx}};
            std::vector<PlotSeries> plot{{"measured", {}}};
            for (std::size_t k = 0; k < est.lags.size(); ++k)
                plot[0].points.emplace_back(est.lags[k], est.values[k]);
            try {
                const auto fit = fit_lorentzian(est, fit_options(c, eps));
                s["fit"] = fit_json(fit);
                PlotSeries lor{"lorentzian", {}};
                for (int r = -3 * fit.window; r <= 3 * fit.window; ++r)
                    lor.points.emplace_back(r, lorentzian(fit.amplitude, fit.half_width, r));
                plot.push_back(std::move(lor));
                if (eps > 0.0) {
                    eps_ok.push_back(eps);
                    width_ok.push_back(fit.half_width);
                }
                sweep.push_back({{"epsilon", eps}, {"half_width", fit.half_width}, {"predicted", pred.half_width}});
            } catch (const ConfigError& e) {
                s["fit"] = nullptr;
                s["fit_error"] = e.what();
            }
            b.summaries["lorentzian_fit" + sfx] = s;
            b.plots["envelope" + sfx] = std::move(plot);
        } catch (const ConfigError& e) {
            errs.push_back({p, eps, e.what()});
        }
    }
    if (P > 1) {
        json w{{"points", sweep}, {"errors", errors_json(errs)}};
        if (eps_ok.size() >= 2) {
            const auto f = loglog_fit(eps_ok, width_ok);
            w["slope"] = f.slope;
            w["slope_se"] = f.slope_se;
            PlotSeries s{"half_width", {}};
            for (std::size_t k = 0; k < eps_ok.size(); ++k) s.points.emplace_back(eps_ok[k], width_ok[k]);
            b.plots["width_law"] = {s};
        }
        b.summaries["width_law"] = w;
    } else if (!errs.empty()) {
        b.summaries["errors"] = errors_json(errs);
    }
    for (const auto& e : errs) b.warnings.push_back("sweep point " + std::to_string(e.point) + ": " + e.message);
}

void run_varfe(const ExperimentConfig& c, ResultsBundle& b) {
    const std::size_t P = c.epsilons.size();
    std::vector<PointError> errs;
    for (std::size_t p = 0; p < P; ++p) {
        const double eps = c.epsilons[p];
        const std::string sfx = suffix(p, P);
        try {
            VariationalProblem prob;
            prob.epsilon_over_spacing = eps / c.model.delta;
            prob.half_range = c.varfe.half_range;
            const auto with = minimize_free_energy(prob);
            prob.include_repulsion = false;
            const auto without = minimize_free_energy(prob);
            const auto pred = predicted_params(eps, c.model.delta);
            Table t{{"lag", "lambda_repulsion", "lambda_free"}, {}};
            for (int r = with.envelope.min_lag; r <= with.envelope.max_lag(); ++r)
                t.rows.push_back({static_cast<double>(r), with.envelope.at(r), without.envelope.at(r)});
            b.tables["varfe" + sfx] = t;
            b.summaries["varfe" + sfx] = {
                {"epsilon", eps},
                {"predicted_half_width", pred.half_width},
                {"half_width_repulsion", with.fit.half_width},
                {"half_width_free", without.fit.half_width},
                {"ratio", without.fit.half_width / with.fit.half_width},
                {"free_energy_repulsion", with.free_energy},
                {"free_energy_free", without.free_energy},
                {"iterations_repulsion", with.iterations},
                {"iterations_free", without.iterations},
                {"converged", with.converged && without.converged},
                {"table", "varfe" + sfx}};
            PlotSeries a{"repulsion", {}}, f{"free", {}};
            for (int r = with.envelope.min_lag; r <= with.envelope.max_lag(); ++r) {
                a.points.emplace_back(r, with.envelope.at(r));
                f.points.emplace_back(r, without.envelope.at(r));
            }
            b.plots["varfe" + sfx] = {a, f};
        } catch (const ConfigError& e) {
            errs.push_back({p, eps, e.what()});
        }
    }
    if (!errs.empty()) b.summaries["errors"] = errors_json(errs);
    for (const auto& e : errs) b.warnings.push_back("sweep point " + std::to_string(e.point) + ": " + e.message);
}

void run_eth(const ExperimentConfig& c, ResultsBundle& b) {
    const Ensemble ens = make_ensemble(c);
    const Observable A = make_config_observable(c);
    const auto probes = probe_indices(c);
    const std::size_t P = c.epsilons.size();
    std::vector<double> widths, measured, predicted;
    std::vector<PointError> errs;
    for (std::size_t p = 0; p < P; ++p) {
        const double eps = c.epsilons[p];
        const std::string sfx = suffix(p, P);
        try {
            EnvelopeAccumulator acc(c.model.n, c.edge_exclusion);
            std::vector<std::vector<double>> means(c.realizations), samples(c.realizations);
            parallel_for(c.realizations, c.jobs, [&](std::size_t k) {
                const auto s = ens.realize(eps, k);
                means[k] = acc.lag_means(s);
                for (auto i : probes) samples[k].push_back(eigenstate_expectation(s, A, i));
            });
            for (auto& m : means) acc.add_means(std::move(m));
            const auto est = acc.finish();
            const auto fit = fit_lorentzian(est, fit_options(c, eps));
            const auto lambda = prediction_envelope(c, eps, fit);
            const auto meas = eth_variance_measured(samples, 400, substream_seed(c.seed, 0xb007ULL + p));

            Table t{{"realization", "i", "value"}, {}};
            for (std::size_t k = 0; k < samples.size(); ++k)
                for (std::size_t q = 0; q < probes.size(); ++q)
                    t.rows.push_back({static_cast<double>(k), static_cast<double>(probes[q]), samples[k][q]});
            b.tables["eth_samples" + sfx] = t;

            double exact = 0.0, bound = 0.0, unpert = 0.0;
            bool bound_ok = true;
            json per_probe = json::array();
            for (std::size_t q = 0; q < probes.size(); ++q) {
                const auto pr = eth_variance_predicted(lambda, A, probes[q]);
                exact += pr.exact_sum;
                bound += pr.upper_bound;
                bound_ok = bound_ok && pr.exact_sum <= pr.upper_bound;
                MicrocanonicalWindow w{ens.spec.level(probes[q]), 2.0 * fit.half_width * c.model.delta,
                                       Weighting::flat, 0.0};
                const double u = unperturbed_variance(A, ens.spec, w);
                unpert += u;
                per_probe.push_back({{"i", probes[q]},
                                     {"mean", meas.per_probe_mean[q]},
                                     {"variance", meas.per_probe_variance[q]},
                                     {"exact_sum", pr.exact_sum},
                                     {"upper_bound", pr.upper_bound},
                                     {"unperturbed_variance", u}});
            }
            const double np = static_cast<double>(probes.size());
            exact /= np;
            bound /= np;
            unpert /= np;
            b.summaries["eth_variance" + sfx] = {
                {"epsilon", eps},
                {"realizations", c.realizations},
                {"probes", probes},
                {"mean", mean(meas.per_probe_mean)},
                {"variance", meas.variance},
                {"bootstrap_se", meas.standard_error},
                {"ci95", {meas.variance - 1.96 * meas.standard_error, meas.variance + 1.96 * meas.standard_error}},
                {"exact_sum", exact},
                {"upper_bound", bound},
                {"bound_holds_all", bound_ok},
                {"ratio", meas.variance / exact},
                {"unperturbed_variance", unpert},
                {"suppression", meas.variance / unpert},
                {"fit", fit_json(fit)},
                {"prediction_source", c.prediction},
                {"per_probe", per_probe},
                {"table", "eth_samples" + sfx}};
            widths.push_back(fit.half_width);
            measured.push_back(meas.variance);
            predicted.push_back(exact);
        } catch (const ConfigError& e) {
            errs.push_back({p, eps, e.what()});
        }
    }
    if (P > 1) {
        json law{{"half_width", widths}, {"variance", measured}, {"exact_sum", predicted},
                 {"errors", errors_json(errs)}};
        if (widths.size() >= 2) {
            const auto f = loglog_fit(widths, measured);
            law["slope"] = f.slope;
            law["slope_se"] = f.slope_se;
        }
        b.summaries["variance_law"] = law;
    } else if (!errs.empty()) {
        b.summaries["errors"] = errors_json(errs);
    }
    if (!widths.empty()) {
        PlotSeries m{"measured", {}}, q{"exact_sum", {}};
        for (std::size_t k = 0; k < widths.size(); ++k) {
            m.points.emplace_back(widths[k], measured[k]);
            q.points.emplace_back(widths[k], predicted[k]);
        }
        b.plots["variance_vs_delta"] = {m, q};
    }
    for (const auto& e : errs) b.warnings.push_back("sweep point " + std::to_string(e.point) + ": " + e.message);
}

double mean_of(const std::vector<double>& x, const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto k : idx) s += x[k];
    return s / static_cast<double>(idx.size());
}

void run_quench(const ExperimentConfig& c, ResultsBundle& b) {
    const Ensemble ens = make_ensemble(c);
    const Observable A = make_config_observable(c);
    const std::size_t e = c.quench.index.value_or(c.model.n / 2);
    const std::size_t P = c.epsilons.size();
    json pairs = json::array();
    PlotSeries err_plot{"abs_error", {}};
    std::vector<PointError> errs;
    for (std::size_t p = 0; p < P; ++p) {
        const double eps = c.epsilons[p];
        const std::string sfx = suffix(p, P);
        try {
            EnvelopeAccumulator acc(c.model.n, c.edge_exclusion);
            const std::size_t R = c.realizations;
            std::vector<std::vector<double>> means(R);
            std::vector<double> v0(R), v1(R);
            std::vector<std::pair<double, double>> series;
            bool edge = false;
            parallel_for(R, c.jobs, [&](std::size_t k) {
                const auto s = ens.realize(eps, k);
                means[k] = acc.lag_means(s);
                const auto q0 = quench_time_average(s, e, A, c.edge_exclusion);
                v0[k] = q0.value;
                if (k == 0) edge = q0.edge_warning;
                if (c.quench.adjacent) v1[k] = quench_time_average(s, e + 1, A, c.edge_exclusion).value;
                if (k == 0 && c.quench.time_series) {
                    const TimeEvolution ev(s, basis_state(c.model.n, e), A);
                    const auto& ts = *c.quench.time_series;
                    for (std::size_t m = 0; m < ts.samples; ++m) {
                        const double t = ts.t_max * static_cast<double>(m) / static_cast<double>(ts.samples - 1);
                        series.emplace_back(t, ev.expectation(t));
                    }
                }
            });
            for (auto& m : means) acc.add_means(std::move(m));
            const auto est = acc.finish();
            const auto fit = fit_lorentzian(est, fit_options(c, eps));
            const auto lambda = prediction_envelope(c, eps, fit);
            const auto pred = quench_prediction(lambda, A, e);

            Table t{{"realization", "e", "value"}, {}};
            for (std::size_t k = 0; k < R; ++k) {
                t.rows.push_back({static_cast<double>(k), static_cast<double>(e), v0[k]});
                if (c.quench.adjacent) t.rows.push_back({static_cast<double>(k), static_cast<double>(e + 1), v1[k]});
            }
            b.tables["quench" + sfx] = t;
            if (!series.empty()) {
                Table ts{{"t", "value"}, {}};
                for (const auto& [tt, v] : series) ts.rows.push_back({tt, v});
                b.tables["quench_timeseries" + sfx] = ts;
            }
            const std::uint64_t bs = substream_seed(c.seed, 0x9e4cULL + p);
            const double m0 = mean(v0);
            const double se0 = R >= 2 ? bootstrap_se(R, [&](const auto& idx) { return mean_of(v0, idx); }, 1000, bs)
                                      : std::nan("");
            json s{{"epsilon", eps},
                   {"e", e},
                   {"realizations", R},
                   {"measured_mean", m0},
                   {"bootstrap_se", num(se0)},
                   {"prediction", pred.value},
                   {"difference", m0 - pred.value},
                   {"dropped_term", pred.dropped_term},
                   {"dropped_ratio", pred.dropped_ratio},
                   {"edge_warning", edge},
                   {"fit", fit_json(fit)},
                   {"prediction_source", c.prediction},
                   {"table", "quench" + sfx}};
            if (c.quench.adjacent) {
                std::vector<double> d(R);
                for (std::size_t k = 0; k < R; ++k) d[k] = v1[k] - v0[k];
                s["adjacent_mean"] = mean(v1);
                s["adjacent_prediction"] = quench_prediction(lambda, A, e + 1).value;
                s["adjacent_difference"] = mean(d);
                s["adjacent_difference_se"] =
                    num(R >= 2 ? bootstrap_se(R, [&](const auto& idx) { return mean_of(d, idx); }, 1000, bs + 1)
                               : std::nan(""));
            }
            b.summaries["quench" + sfx] = s;
            pairs.push_back({{"epsilon", eps}, {"prediction", pred.value}, {"measured", m0}, {"bootstrap_se", num(se0)}});
            err_plot.points.emplace_back(fit.half_width, std::abs(m0 - pred.value));
        } catch (const ConfigError& ex) {
            errs.push_back({p, eps, ex.what()});
        }
    }
    b.summaries["quench_pairs"] = {{"pairs", pairs}, {"errors", errors_json(errs)}};
    if (!err_plot.points.empty()) b.plots["quench_error"] = {err_plot};
    for (const auto& x : errs) b.warnings.push_back("sweep point " + std::to_string(x.point) + ": " + x.message);
}

void run_superposition(const ExperimentConfig& c, ResultsBundle& b) {
    const Ensemble ens = make_ensemble(c);
    const Observable A = make_config_observable(c);
    std::vector<std::pair<std::size_t, cplx>> comps;
    if (c.superposition.components.empty()) {
        comps = {{c.model.n / 4, std::sqrt(0.3)},
                 {3 * c.model.n / 4, std::polar(std::sqrt(0.7), std::numbers::pi / 3.0)}};
    } else {
        for (const auto& sc : c.superposition.components) comps.emplace_back(sc.index, sc.amplitude);
    }
    const StatePrep psi = superposition(c.model.n, comps);
    const std::size_t P = c.epsilons.size();
    std::vector<PointError> errs;
    for (std::size_t p = 0; p < P; ++p) {
        const double eps = c.epsilons[p];
        const std::string sfx = suffix(p, P);
        try {
            EnvelopeAccumulator acc(c.model.n, c.edge_exclusion);
            const std::size_t R = c.realizations;
            std::vector<std::vector<double>> means(R);
            std::vector<TimeAverageReport> reps(R);
            parallel_for(R, c.jobs, [&](std::size_t k) {
                const auto s = ens.realize(eps, k);
                means[k] = acc.lag_means(s);
                reps[k] = superposition_time_average(s, psi, A);
            });
            for (auto& m : means) acc.add_means(std::move(m));
            const auto est = acc.finish();
            const auto fit = fit_lorentzian(est, fit_options(c, eps));
            const auto lambda = prediction_envelope(c, eps, fit);
            const auto lambda2 = convolve_envelope(lambda);
            const double bound = interference_bound(psi, lambda2, A);
            double pred = 0.0;
            json qp = json::array();
            for (const auto& [nu, g] : comps) {
                const double q = quench_prediction(lambda, lambda2, A, nu).value;
                pred += std::norm(g) * q;
                qp.push_back({{"index", nu}, {"weight", std::norm(g)}, {"quench_prediction", q}});
            }
            Table t{{"realization", "total", "diagonal", "interference", "bound"}, {}};
            std::vector<double> diag(R);
            double max_int = 0.0;
            bool holds = true;
            for (std::size_t k = 0; k < R; ++k) {
                t.rows.push_back({static_cast<double>(k), reps[k].infinite_time_value, reps[k].diagonal_term,
                                  reps[k].interference_term, bound});
                diag[k] = reps[k].diagonal_term;
                max_int = std::max(max_int, std::abs(reps[k].interference_term));
                holds = holds && std::abs(reps[k].interference_term) <= bound;
            }
            b.tables["superposition" + sfx] = t;
            const double se =
                R >= 2 ? bootstrap_se(R, [&](const auto& idx) { return mean_of(diag, idx); }, 1000,
                                      substream_seed(c.seed, 0x5a9eULL + p))
                       : std::nan("");
            b.summaries["superposition" + sfx] = {{"epsilon", eps},
                                                  {"realizations", R},
                                                  {"components", qp},
                                                  {"prediction", pred},
                                                  {"diagonal_mean", mean(diag)},
                                                  {"diagonal_se", num(se)},
                                                  {"bound", bound},
                                                  {"max_abs_interference", max_int},
                                                  {"bound_holds_all", holds},
                                                  {"fit", fit_json(fit)},
                                                  {"prediction_source", c.prediction},
                                                  {"table", "superposition" + sfx}};
        } catch (const ConfigError& e) {
            errs.push_back({p, eps, e.what()});
        }
    }
    if (!errs.empty()) b.summaries["errors"] = errors_json(errs);
    for (const auto& e : errs) b.warnings.push_back("sweep point " + std::to_string(e.point) + ": " + e.message);
}

void run_crystal(const ExperimentConfig& c, ResultsBundle& b) {
    const auto& k = c.crystal;
    if (k.sizes.empty()) {
        b.warnings.push_back("empty size sweep: nothing to run");
        return;
    }
    const auto res = x2_fluctuation_scaling(k.dimension, k.sizes, k.energy_per_site, k.samples, c.seed,
                                            k.tolerance_fraction);
    Table t{{"N", "mean_x2", "variance", "samples"}, {}};
    PlotSeries s{"relative_variance", {}};
    json pts = json::array();
    for (const auto& p : res.points) {
        t.rows.push_back({static_cast<double>(p.sites), p.mean_x2, p.variance_x2, static_cast<double>(p.samples)});
        s.points.emplace_back(static_cast<double>(p.sites), p.relative_variance);
        pts.push_back({{"L", p.linear_size},
                       {"N", p.sites},
                       {"relative_variance", p.relative_variance},
                       {"tolerance", p.tolerance},
                       {"acceptance", p.acceptance}});
    }
    const int d = k.dimension;
    const double expected = (d == 1 || d > 4) ? -1.0 : 1.0 / d - 1.0;
    b.tables["crystal"] = t;
    b.summaries["crystal_fit"] = {{"dimension", d},
                                  {"exponent", res.exponent},
                                  {"se", res.exponent_se},
                                  {"expected_exponent", expected},
                                  {"energy_per_site", k.energy_per_site},
                                  {"tolerance_fraction", k.tolerance_fraction},
                                  {"points", pts},
                                  {"table", "crystal"}};
    b.plots["crystal"] = {s};
}

void run_bandcheck(const ExperimentConfig& c, ResultsBundle& b) {
    const auto& B = c.bandcheck;
    const auto stats = B.statistics == "fermion" ? Statistics::fermion : Statistics::boson;
    const auto sys = build_fock_system(B.levels, B.particles, stats, 1.0, B.cap);
    const auto V = make_gaussian_potential(B.levels, B.range, B.strength);
    DecayOptions o;
    o.reference_fraction = B.reference_fraction;
    o.window_half_width = B.window;
    o.entropy_half_width = B.entropy_window;
    o.bin_width = B.bin_width;
    o.min_count = B.min_count;
    const auto r = averaged_offdiagonal_decay(sys, V, o);
    Table t{{"gap_bin_center", "mean_abs_element", "count"}, {}};
    PlotSeries s{"log_mean_abs", {}};
    for (const auto& bin : r.bins) {
        t.rows.push_back({bin.center, bin.mean_abs, static_cast<double>(bin.count)});
        s.points.emplace_back(bin.center, std::log(bin.mean_abs));
    }
    b.tables["bandcheck"] = t;
    b.summaries["bandcheck_fit"] = {{"slope", r.slope},
                                    {"se", r.slope_se},
                                    {"T", r.temperature},
                                    {"expected_slope", -1.0 / r.temperature},
                                    {"ratio", r.slope * -r.temperature},
                                    {"fit_points", r.fit_points},
                                    {"decreasing_beyond_T", r.decreasing_beyond_T},
                                    {"reference_energy", r.reference_energy},
                                    {"reference_states", r.reference_states},
                                    {"basis_size", sys.size()},
                                    {"warnings", r.warnings},
                                    {"table", "bandcheck"}};
    b.plots["bandcheck"] = {s};
    for (const auto& w : r.warnings) b.warnings.push_back(w);
}

void run_tailbound(const ExperimentConfig& c, ResultsBundle& b) {
    const auto& T = c.tailbound;
    Table t{{"delta", "T", "e_max", "integral", "bound", "peak", "predicted_peak", "grid_step"}, {}};
    PlotSeries ratio{"integral_over_bound", {}};
    bool all = true;
    double worst_steps = 0.0;
    std::vector<PointError> errs;
    std::size_t idx = 0;
    for (double d : T.delta)
        for (double tc : T.T)
            for (double x : T.e_max) {
                try {
                    const auto r = tail_integral_bound(d, tc, x, T.grid_step);
                    t.rows.push_back({d, tc, x, r.integral, r.bound, r.peak_location, r.predicted_peak, r.grid_step});
                    all = all && r.satisfied;
                    if (r.grid_step > 0.0)
                        worst_steps = std::max(worst_steps, std::abs(r.peak_location - r.predicted_peak) / r.grid_step);
                    if (r.bound > 0.0) ratio.points.emplace_back(static_cast<double>(idx), r.integral / r.bound);
                } catch (const ConfigError& e) {
                    errs.push_back({idx, d, e.what()});
                }
                ++idx;
            }
    b.tables["tailbound"] = t;
    b.summaries["tailbound"] = {{"all_satisfied", all},
                                {"max_peak_offset_in_steps", worst_steps},
                                {"errors", errors_json(errs)},
                                {"table", "tailbound"}};
    b.plots["tailbound"] = {ratio};
    for (const auto& e : errs) b.warnings.push_back("grid point " + std::to_string(e.point) + ": " + e.message);
}

json base_manifest(const ExperimentConfig& c) {
    return json{{"code_version", kCodeVersion},
                {"kind", c.kind},
                {"config", c.raw},
                {"master_seed", c.seed},
                {"realizations", c.realizations},
                {"seeds", realization_seeds(c.seed, c.realizations)},
                {"prng", "mt19937_64 seeded by splitmix64(master_seed ^ realization)"},
                {"complete", false}};
}

}  // namespace

ResultsBundle run_experiment(const ExperimentConfig& c) {
    pin_blas_threads();
    ResultsBundle b;
    b.manifest = base_manifest(c);
    b.manifest["started"] = utc_timestamp();
    const bool model_kind = c.kind == "envelope" || c.kind == "varfe" || c.kind == "eth-variance" ||
                            c.kind == "quench" || c.kind == "superposition";
    if (model_kind && c.epsilons.empty()) {
        b.warnings.push_back("empty sweep: nothing to run");
    } else if (c.kind == "envelope") {
        run_envelope(c, b);
    } else if (c.kind == "varfe") {
        run_varfe(c, b);
    } else if (c.kind == "eth-variance") {
        run_eth(c, b);
    } else if (c.kind == "quench") {
        run_quench(c, b);
    } else if (c.kind == "superposition") {
        run_superposition(c, b);
    } else if (c.kind == "crystal") {
        run_crystal(c, b);
    } else if (c.kind == "bandcheck") {
        run_bandcheck(c, b);
    } else if (c.kind == "tailbound") {
        run_tailbound(c, b);
    }
    b.manifest["finished"] = utc_timestamp();
    b.manifest["warnings"] = b.warnings;
    b.manifest["complete"] = true;
    return b;
}

// ---------------------------------------------------------------- files

std::string format_csv(const Table& t) {
    std::string out;
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
        if (k) out += ',';
        out += t.columns[k];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out += ',';
            out += fmt(row[k]);
        }
        out += '\n';
    }
    return out;
}

Table read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV file " + path);
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw IoError("malformed number '" + cell + "' in " + path);
            }
        }
        if (row.size() != t.columns.size()) throw IoError("ragged row in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string format_plot(const std::vector<PlotSeries>& series) {
    std::string out;
    for (std::size_t s = 0; s < series.size(); ++s) {
        if (s) out += "\n\n";
        out += "# " + series[s].label + "\n";
        for (const auto& [x, y] : series[s].points) out += fmt(x) + ' ' + fmt(y) + '\n';
    }
    return out;
}

namespace {

void write_file(const fs::path& p, const std::string& content) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

}  // namespace

void prepare_output_dir(const std::string& dir, bool overwrite) {
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir, ec)) throw IoError("output path exists and is not a directory: " + dir);
        if (!fs::is_empty(dir, ec) && !overwrite)
            throw IoError("output directory " + dir + " is not empty (use --overwrite)");
    }
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_incomplete_manifest(const ExperimentConfig& c, const std::string& dir) {
    json m = base_manifest(c);
    m["started"] = utc_timestamp();
    write_file(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::string> emit_report(const ResultsBundle& b, const std::string& dir, ReportFormat format) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    std::vector<std::string> files;
    json m = b.manifest;
    m["complete"] = false;
    write_file(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
    if (format != ReportFormat::plot_data) {
        for (const auto& [name, t] : b.tables) {
            write_file(fs::path(dir) / (name + ".csv"), format_csv(t));
            files.push_back(name + ".csv");
        }
        for (const auto& [name, s] : b.summaries) {
            write_file(fs::path(dir) / (name + ".json"), s.dump(2) + "\n");
            files.push_back(name + ".json");
        }
    }
    if (format != ReportFormat::csv_json) {
        for (const auto& [name, series] : b.plots) {
            write_file(fs::path(dir) / (name + ".dat"), format_plot(series));
            files.push_back(name + ".dat");
        }
    }
    m["files"] = files;
    m["complete"] = b.manifest.value("complete", false);
    write_file(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
    return files;
}

}  // namespace ergolab
