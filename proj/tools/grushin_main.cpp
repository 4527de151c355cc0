// Experiment runner for the Grushin fast-dynamics pipeline. Reads one JSON
// config, executes the requested stages, and persists CSV/JSON artifacts
// plus a manifest with content hashes.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "grushin/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Grushin-Ornstein-Uhlenbeck fast dynamics: invariant measure, "
                 "cell problems, effective HJB and singular-perturbation studies"};

    std::string config_path;
    std::string output_dir;
    std::string stage;
    bool overwrite = false;
    int threads = 0;
    bool validate_only = false;

    app.add_option("--config", config_path,
                   "Path to the JSON experiment config; without it the "
                   "reference config is printed to stdout");
    app.add_option("--output", output_dir, "Override the config's output_dir");
    app.add_option("--stage", stage, "Override the config's command");
    app.add_flag("--overwrite", overwrite, "Replace existing artifacts");
    app.add_option("--threads", threads,
                   "Worker threads (default: GRUSHIN_THREADS or hardware)");
    app.add_flag("--validate", validate_only, "Validate the config and exit");

    CLI11_PARSE(app, argc, argv);

    if (threads <= 0) {
        if (const char* env = std::getenv("GRUSHIN_THREADS")) threads = std::atoi(env);
    }

    if (config_path.empty()) {
        std::cout << grushin::ExperimentConfig{}.to_json().dump(2) << "\n";
        return 0;
    }

    nlohmann::json doc;
    try {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open " + config_path);
        in >> doc;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::vector<grushin::Diagnostic> diags;
    grushin::ExperimentConfig cfg = grushin::parse_config(doc, diags);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!stage.empty()) cfg.command = stage;
    for (const auto& d : grushin::validate(cfg)) diags.push_back(d);

    bool fatal = false;
    for (const auto& d : diags) {
        std::cerr << (d.fatal ? "error: " : "warning: ") << d.path << ": "
                  << d.message << "\n";
        fatal |= d.fatal;
    }
    if (fatal) return 2;
    if (validate_only) {
        std::cout << "config ok\n";
        return 0;
    }

    try {
        grushin::RunOptions opts;
        opts.overwrite = overwrite;
        opts.threads = threads;
        const grushin::RunManifest man = grushin::run(cfg, opts);
        for (const auto& c : man.checks)
            std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << "  "
                      << c.detail << "\n";
        std::cout << (man.all_passed() ? "all checks passed" : "some checks FAILED")
                  << "\n";
        return man.all_passed() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
