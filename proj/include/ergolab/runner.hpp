#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ergolab {

using json = nlohmann::json;

inline constexpr const char* kCodeVersion = "ergolab 0.1.0";
inline constexpr const char* kOutputRootEnv = "ERGOLAB_OUTPUT_ROOT";

struct ModelConfig {
    std::size_t n = 1000;
    double delta = 1.0;
    double epsilon = 2.0;
    std::size_t band = 300;
    std::string taper = "hard";  // hard | exponential
    double temperature = 0.0;
    double jitter = 0.0;
};

struct ObservableConfig {
    std::string kind = "diagonal_profile";  // diagonal_profile | banded_random
    std::string profile = "linear";         // linear | constant | quadratic
    std::size_t width = 1;
    double scale = 1.0;
    std::optional<std::uint64_t> seed;
};

struct ProbeConfig {
    std::optional<std::size_t> first, last, step;
};

struct TimeSeriesConfig {
    double t_max = 100.0;
    std::size_t samples = 200;
};

struct QuenchConfig {
    std::optional<std::size_t> index;  // default n/2
    bool adjacent = true;
    std::optional<TimeSeriesConfig> time_series;
};

struct SuperpositionComponent {
    std::size_t index = 0;
    std::complex<double> amplitude;
};

struct SuperpositionConfig {
    std::vector<SuperpositionComponent> components;  // empty: two-component default at n/4, 3n/4
};

struct VarfeConfig {
    int half_range = 0;
};

struct CrystalConfig {
    int dimension = 3;
    std::vector<int> sizes = {4, 6, 8, 10};
    double energy_per_site = 1.0;
    std::size_t samples = 2000;
    double tolerance_fraction = 0.05;
};

struct BandConfig {
    std::size_t levels = 8;
    std::size_t particles = 4;
    std::string statistics = "boson";
    std::size_t cap = 0;
    double range = 8.0;
    double strength = 1.0;
    double reference_fraction = 0.2;
    double window = 0.0;
    double entropy_window = 0.0;
    double bin_width = 0.0;
    std::size_t min_count = 10;
};

struct TailConfig {
    std::vector<double> delta = {1.0, 2.0, 5.0};
    std::vector<double> T = {50.0, 100.0};
    std::vector<double> e_max = {100.0, 200.0};
    double grid_step = 0.0;
};

struct ExperimentConfig {
    std::string kind;
    ModelConfig model;
    std::vector<double> epsilons;  // sweep axis; defaults to {model.epsilon}
    std::size_t realizations = 20;
    std::uint64_t seed = 12345;
    std::string output;
    unsigned jobs = 1;
    double edge_exclusion = 0.1;
    double fit_window = 5.0;
    std::string prediction = "fitted";  // fitted | closed_form
    ObservableConfig observable;
    ProbeConfig probes;
    QuenchConfig quench;
    SuperpositionConfig superposition;
    VarfeConfig varfe;
    CrystalConfig crystal;
    BandConfig bandcheck;
    TailConfig tailbound;
    json raw;  // echo of the merged input
};

const std::vector<std::string>& experiment_kinds();

// Parses and validates; throws ConfigError on any problem.
ExperimentConfig config_from_json(const json& j);
// Applies a dotted-path override such as "model.n=500" (value parsed as JSON,
// falling back to a string).
void apply_override(json& j, const std::string& assignment);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct ResultsBundle {
    json manifest;
    std::map<std::string, Table> tables;
    std::map<std::string, json> summaries;
    std::map<std::string, std::vector<PlotSeries>> plots;
    std::vector<std::string> warnings;
};

// Derived per-realization seeds (length R).
std::vector<std::uint64_t> realization_seeds(std::uint64_t master, std::size_t R);

// Runs fn(k) for k in [0, count) on `jobs` threads. Results must be written
// to per-index slots; the lowest-index exception is rethrown.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn);

ResultsBundle run_experiment(const ExperimentConfig& config);

enum class ReportFormat { csv_json, plot_data, all };

// Fails with IoError if dir exists and is non-empty, unless overwrite.
void prepare_output_dir(const std::string& dir, bool overwrite);
// Manifest marked incomplete; written before a run starts.
void write_incomplete_manifest(const ExperimentConfig& config, const std::string& dir);
// Writes tables, summaries and plot data, then the completed manifest.
std::vector<std::string> emit_report(const ResultsBundle& bundle, const std::string& dir, ReportFormat format);

std::string format_csv(const Table& t);
Table read_csv(const std::string& path);
std::string format_plot(const std::vector<PlotSeries>& series);

std::string utc_timestamp();

}  // namespace ergolab
