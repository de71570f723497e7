#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "ergolab/errors.hpp"
#include "ergolab/runner.hpp"

using namespace ergolab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ergolab_unit_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_SUITE("runner") {
    TEST_CASE("config defaults and validation") {
        const auto c = config_from_json(json{{"kind", "envelope"}});
        CHECK(c.model.n == 1000);
        CHECK(c.epsilons == std::vector<double>{2.0});
        CHECK(c.realizations == 20);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "nope"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "envelope"}, {"modle", json::object()}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "envelope"}, {"model", {{"n", -3}}}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "envelope"}, {"model", {{"n", 10}, {"band", 20}}}}),
                        ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "envelope"}, {"sweep", {{"epsilon", {1.0, -2.0}}}}}),
                        ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "eth-variance"}, {"realizations", 1}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"kind", "envelope"}, {"seed", "abc"}}), ConfigError);
    }

    TEST_CASE("dotted overrides") {
        json j{{"kind", "envelope"}};
        apply_override(j, "model.n=500");
        apply_override(j, "sweep.epsilon=[1,2]");
        apply_override(j, "model.taper=hard");
        CHECK(j["model"]["n"] == 500);
        CHECK(j["model"]["taper"] == "hard");
        const auto c = config_from_json(j);
        CHECK(c.model.n == 500);
        CHECK(c.epsilons.size() == 2);
        CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
    }

    TEST_CASE("seeds and parallel_for") {
        const auto s = realization_seeds(5, 4);
        CHECK(s.size() == 4);
        CHECK(s == realization_seeds(5, 4));
        CHECK(s != realization_seeds(6, 4));
        for (unsigned jobs : {1u, 3u, 8u}) {
            std::vector<int> out(50, 0);
            parallel_for(50, jobs, [&](std::size_t k) { out[k] = static_cast<int>(k * k); });
            for (std::size_t k = 0; k < 50; ++k) CHECK(out[k] == static_cast<int>(k * k));
        }
        CHECK_THROWS_AS(parallel_for(10, 2,
                                     [](std::size_t k) {
                                         if (k == 7) throw NumericalError("boom");
                                     }),
                        NumericalError);
    }

    TEST_CASE("CSV round trip is exact") {
        Table t{{"a", "b"}, {{0.1, -1e-300}, {1.0 / 3.0, 12345678.901234567}, {std::nextafter(1.0, 2.0), 0.0}}};
        const auto dir = scratch("csv");
        fs::create_directories(dir);
        const auto path = (dir / "t.csv").string();
        {
            std::ofstream f(path, std::ios::binary);
            f << format_csv(t);
        }
        const auto back = read_csv(path);
        CHECK(back.columns == t.columns);
        CHECK(back.rows == t.rows);
        {
            std::ofstream f(path, std::ios::binary);
            f << "a,b\n1,x\n";
        }
        CHECK_THROWS_AS(read_csv(path), IoError);
        CHECK_THROWS_AS(read_csv((dir / "missing.csv").string()), IoError);
        fs::remove_all(dir);
    }

    TEST_CASE("plot data blocks") {
        const auto s = format_plot({{"one", {{1, 2}}}, {"two", {{3, 4}}}});
        CHECK(s == "# one\n1 2\n\n\n# two\n3 4\n");
    }

    TEST_CASE("output directory collisions") {
        const auto dir = scratch("out");
        prepare_output_dir(dir.string(), false);
        {
            std::ofstream f(dir / "x.txt");
            f << "x";
        }
        CHECK_THROWS_AS(prepare_output_dir(dir.string(), false), IoError);
        CHECK_NOTHROW(prepare_output_dir(dir.string(), true));
        fs::remove_all(dir);
    }

    TEST_CASE("small runs write manifests and files") {
        const auto dir = scratch("run");
        auto c = config_from_json(json{{"kind", "tailbound"}, {"tailbound", {{"delta", {1.0}}, {"T", {10.0}}, {"e_max", {30.0}}}}});
        prepare_output_dir(dir.string(), false);
        write_incomplete_manifest(c, dir.string());
        {
            std::ifstream f(dir / "manifest.json");
            CHECK(json::parse(f)["complete"] == false);
        }
        const auto b = run_experiment(c);
        const auto files = emit_report(b, dir.string(), ReportFormat::all);
        CHECK(std::find(files.begin(), files.end(), "tailbound.csv") != files.end());
        CHECK(std::find(files.begin(), files.end(), "tailbound.dat") != files.end());
        std::ifstream f(dir / "manifest.json");
        const auto m = json::parse(f);
        CHECK(m["complete"] == true);
        CHECK(m["code_version"] == kCodeVersion);
        CHECK(m["config"]["kind"] == "tailbound");
        fs::remove_all(dir);
    }

    TEST_CASE("infeasible sweep points are reported and the run continues") {
        // eps = 0 is a degenerate point; the sweep still reaches eps = 1
        auto c = config_from_json(json{{"kind", "envelope"},
                                       {"model", {{"n", 60}, {"band", 20}}},
                                       {"realizations", 2},
                                       {"sweep", {{"epsilon", {0.0, 1.0}}}}});
        const auto b = run_experiment(c);
        CHECK(b.summaries.count("lorentzian_fit_1") == 1);
        CHECK(b.summaries.count("width_law") == 1);
        CHECK(b.manifest["complete"] == true);
    }

    TEST_CASE("empty sweep is a no-op with a warning") {
        auto c = config_from_json(json{{"kind", "envelope"}, {"sweep", {{"epsilon", json::array()}}}});
        const auto b = run_experiment(c);
        CHECK(b.tables.empty());
        CHECK(b.warnings.size() == 1);
    }
}
