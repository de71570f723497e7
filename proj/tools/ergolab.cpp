#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/runner.hpp"

using namespace ergolab;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> realizations;
    std::optional<unsigned> jobs;
    std::vector<std::string> overrides;
    bool overwrite = false;
    std::string format = "all";
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
}

std::string default_output(const std::string& kind, std::uint64_t seed) {
    const char* root = std::getenv(kOutputRootEnv);
    const fs::path base = root && *root ? fs::path(root) : fs::path("results");
    return (base / (kind + "-" + std::to_string(seed))).string();
}

int run(const std::string& kind, const Options& o) {
    json j = load_config(o.config_path);
    if (j.contains("kind") && j["kind"] != kind)
        throw ConfigError("config kind '" + j["kind"].dump() + "' does not match subcommand " + kind);
    j["kind"] = kind;
    for (const auto& s : o.overrides) apply_override(j, s);
    if (o.seed) j["seed"] = *o.seed;
    if (o.realizations) j["realizations"] = *o.realizations;
    if (o.jobs) j["jobs"] = *o.jobs;
    if (!o.out.empty()) j["output"] = o.out;

    const ExperimentConfig cfg = config_from_json(j);
    const std::string dir = cfg.output.empty() ? default_output(kind, cfg.seed) : cfg.output;
    ReportFormat fmt = ReportFormat::all;
    if (o.format == "csv") fmt = ReportFormat::csv_json;
    else if (o.format == "plot") fmt = ReportFormat::plot_data;

    prepare_output_dir(dir, o.overwrite);
    write_incomplete_manifest(cfg, dir);
    const ResultsBundle bundle = run_experiment(cfg);
    const auto files = emit_report(bundle, dir, fmt);
    for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << dir << "\n";
    for (const auto& f : files) std::cout << "  " << f << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ergolab: banded random matrix thermalization experiments"};
    app.require_subcommand(1);
    app.footer("Units: hbar = 1, energies in units of the mean level spacing Delta, times in units of 1/Delta.\n"
               "Precedence: --seed/--realizations/--jobs/--out > --set > --config file > defaults.\n"
               "Default output root: $" + std::string(kOutputRootEnv) + " (else ./results).\n"
               "Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 I/O failure.");
    Options o;
    std::string chosen;

    for (const auto& kind : experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", o.config_path, "JSON config file");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--realizations", o.realizations, "ensemble size");
        sub->add_option("--jobs", o.jobs, "worker threads");
        sub->add_option("--set", o.overrides, "override a config key, e.g. model.n=500");
        sub->add_flag("--overwrite", o.overwrite, "write into a non-empty output directory");
        sub->add_option("--format", o.format, "csv | plot | all")->check(CLI::IsMember({"csv", "plot", "all"}));
        sub->callback([&chosen, kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        return run(chosen, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
