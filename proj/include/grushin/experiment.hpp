#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "grushin/control.hpp"
#include "grushin/dynamics.hpp"
#include "grushin/perturb.hpp"
#include "grushin/simulate.hpp"

namespace grushin {

inline constexpr const char* kVersion = "0.1.0";

/// Declarative experiment description, read from a single JSON document.
/// Unknown keys are rejected; all defaults are materialized on load so the
/// config echoed into the manifest fully reproduces the run.
struct ExperimentConfig {
    std::string command = "all";  // simulate|measure|ergodic|cell|effective|perturb|all
    DynamicsSpec dynamics;
    SimConfig sim;

    struct MeasureGrid {
        double half_width_factor = 6.0;  // half-width = factor / sqrt(alpha)
        int n = 241;
    } measure_grid;
    struct FastGrid {
        double half_width_factor = 4.0;
        int n = 61;
    } fast_grid;
    SlowGrid slow_grid;

    std::string catalog_id = "bench-A";
    double discount = 0.5;
    double horizon = 0.2;
    int n_controls = 5;
    FrozenArgs frozen{0.5, 1.0, 0.0, Eigen::Vector2d::Zero()};

    std::vector<double> delta_schedule{0.1, 0.05, 0.02, 0.01, 0.005};
    std::vector<double> epsilons{0.5, 0.2, 0.1, 0.05};
    std::filesystem::path output_dir = "out";

    struct Checks {
        double max_outside_fraction = 0.01;
        double ks_threshold = 0.02;
        double moment_tol_y1sq = 0.03;   // relative
        double moment_tol_y2sq = 0.03;   // relative
        double moment_tol_cross = 0.01;  // absolute
        double marginal_sup_err = 0.01;  // FD marginal vs closed form
        double triple_rel_gap = 0.02;
        double lipschitz_margin = 1.05;
        bool require_decreasing_errors = true;
    } checks;

    Grid2D make_measure_grid() const;
    Grid2D make_fast_grid() const;
    ControlProblem make_problem() const;

    nlohmann::ordered_json to_json() const;
};

struct Diagnostic {
    std::string path;     // config field path, e.g. "dynamics.alpha"
    std::string message;
    bool fatal = true;    // false = warning
};

/// Parses a JSON document into a config, collecting unknown-key and type
/// diagnostics instead of throwing.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              std::vector<Diagnostic>& diags);

/// Pure semantic validation; empty result means run() cannot fail on
/// config grounds. Never touches the filesystem.
std::vector<Diagnostic> validate(const ExperimentConfig& config);

struct RunOptions {
    bool overwrite = false;
    int threads = 0;  // 0 = hardware default
};

struct RunManifest {
    nlohmann::ordered_json config_echo;
    struct Stage {
        std::string name;
        double seconds = 0.0;
    };
    std::vector<Stage> stages;
    struct Artifact {
        std::string path;  // relative to output_dir
        std::string hash;
        std::uintmax_t bytes = 0;
    };
    std::vector<Artifact> artifacts;
    struct Check {
        std::string name;
        bool passed = true;
        std::string detail;
    };
    std::vector<Check> checks;

    bool all_passed() const;
    nlohmann::ordered_json to_json() const;
};

/// Executes the configured stage(s) in dependency order, writes the
/// CSV/JSON artifacts and the manifest (manifest.json), and returns the
/// manifest. Throws on config errors, output collisions (without
/// overwrite) and stage failures.
RunManifest run(const ExperimentConfig& config, const RunOptions& opts = {});

}  // namespace grushin
