#include "grushin/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "grushin/ergodic.hpp"
#include "grushin/io.hpp"

namespace grushin {

using nlohmann::json;
using nlohmann::ordered_json;

Grid2D ExperimentConfig::make_measure_grid() const {
    return Grid2D::standard(dynamics, measure_grid.n, measure_grid.half_width_factor);
}

Grid2D ExperimentConfig::make_fast_grid() const {
    return Grid2D::standard(dynamics, fast_grid.n, fast_grid.half_width_factor);
}

ControlProblem ExperimentConfig::make_problem() const {
    CatalogOverrides ov;
    ov.discount = discount;
    ov.horizon = horizon;
    ov.n_controls = n_controls;
    return make_catalog_problem(catalog_id, ov);
}

ordered_json ExperimentConfig::to_json() const {
    ordered_json j;
    j["command"] = command;
    j["dynamics"] = {{"alpha", dynamics.alpha}, {"rho", dynamics.rho}};
    j["sim"] = {{"dt", sim.dt},
                {"n_steps", sim.n_steps},
                {"n_paths", sim.n_paths},
                {"burn_in", sim.burn_in},
                {"seed", sim.seed},
                {"initial", {sim.initial.y1, sim.initial.y2}}};
    j["grids"] = {
        {"measure",
         {{"half_width_factor", measure_grid.half_width_factor}, {"n", measure_grid.n}}},
        {"fast", {{"half_width_factor", fast_grid.half_width_factor}, {"n", fast_grid.n}}},
        {"slow",
         {{"rx", slow_grid.rx}, {"nx", slow_grid.nx}, {"dt_back", slow_grid.dt_back}}}};
    j["problem"] = {{"catalog_id", catalog_id},
                    {"discount", discount},
                    {"horizon", horizon},
                    {"n_controls", n_controls},
                    {"frozen", {{"x", frozen.x}, {"p", frozen.p}, {"X", frozen.X}}}};
    j["delta_schedule"] = delta_schedule;
    j["epsilons"] = epsilons;
    j["output_dir"] = output_dir.string();
    j["checks"] = {{"max_outside_fraction", checks.max_outside_fraction},
                   {"ks_threshold", checks.ks_threshold},
                   {"moment_tol_y1sq", checks.moment_tol_y1sq},
                   {"moment_tol_y2sq", checks.moment_tol_y2sq},
                   {"moment_tol_cross", checks.moment_tol_cross},
                   {"marginal_sup_err", checks.marginal_sup_err},
                   {"triple_rel_gap", checks.triple_rel_gap},
                   {"lipschitz_margin", checks.lipschitz_margin},
                   {"require_decreasing_errors", checks.require_decreasing_errors}};
    return j;
}

namespace {

struct Reader {
    std::vector<Diagnostic>& diags;

    void check_keys(const json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) {
            diags.push_back({path, "expected an object", true});
            return;
        }
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed)
                if (it.key() == a) { ok = true; break; }
            if (!ok) diags.push_back({path + "." + it.key(), "unknown key", true});
        }
    }

    template <typename T>
    void get(const json& obj, const std::string& path, const char* key, T& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            diags.push_back({path + "." + key, "wrong type", true});
        }
    }
};

}  // namespace

ExperimentConfig parse_config(const json& doc, std::vector<Diagnostic>& diags) {
    ExperimentConfig c;
    Reader r{diags};
    r.check_keys(doc, "config",
                 {"command", "dynamics", "sim", "grids", "problem", "delta_schedule",
                  "epsilons", "output_dir", "checks"});
    if (!doc.is_object()) return c;

    r.get(doc, "config", "command", c.command);
    if (doc.contains("dynamics")) {
        const json& d = doc["dynamics"];
        r.check_keys(d, "dynamics", {"alpha", "rho"});
        r.get(d, "dynamics", "alpha", c.dynamics.alpha);
        r.get(d, "dynamics", "rho", c.dynamics.rho);
    }
    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        r.check_keys(s, "sim", {"dt", "n_steps", "n_paths", "burn_in", "seed", "initial"});
        r.get(s, "sim", "dt", c.sim.dt);
        r.get(s, "sim", "n_steps", c.sim.n_steps);
        r.get(s, "sim", "n_paths", c.sim.n_paths);
        r.get(s, "sim", "burn_in", c.sim.burn_in);
        r.get(s, "sim", "seed", c.sim.seed);
        if (s.contains("initial")) {
            std::vector<double> init;
            r.get(s, "sim", "initial", init);
            if (init.size() == 2) {
                c.sim.initial = {init[0], init[1]};
            } else {
                diags.push_back({"sim.initial", "expected [y1, y2]", true});
            }
        }
    }
    if (doc.contains("grids")) {
        const json& g = doc["grids"];
        r.check_keys(g, "grids", {"measure", "fast", "slow"});
        if (g.contains("measure")) {
            r.check_keys(g["measure"], "grids.measure", {"half_width_factor", "n"});
            r.get(g["measure"], "grids.measure", "half_width_factor",
                  c.measure_grid.half_width_factor);
            r.get(g["measure"], "grids.measure", "n", c.measure_grid.n);
        }
        if (g.contains("fast")) {
            r.check_keys(g["fast"], "grids.fast", {"half_width_factor", "n"});
            r.get(g["fast"], "grids.fast", "half_width_factor",
                  c.fast_grid.half_width_factor);
            r.get(g["fast"], "grids.fast", "n", c.fast_grid.n);
        }
        if (g.contains("slow")) {
            r.check_keys(g["slow"], "grids.slow", {"rx", "nx", "dt_back"});
            r.get(g["slow"], "grids.slow", "rx", c.slow_grid.rx);
            r.get(g["slow"], "grids.slow", "nx", c.slow_grid.nx);
            r.get(g["slow"], "grids.slow", "dt_back", c.slow_grid.dt_back);
        }
    }
    if (doc.contains("problem")) {
        const json& p = doc["problem"];
        r.check_keys(p, "problem",
                     {"catalog_id", "discount", "horizon", "n_controls", "frozen"});
        r.get(p, "problem", "catalog_id", c.catalog_id);
        r.get(p, "problem", "discount", c.discount);
        r.get(p, "problem", "horizon", c.horizon);
        r.get(p, "problem", "n_controls", c.n_controls);
        if (p.contains("frozen")) {
            r.check_keys(p["frozen"], "problem.frozen", {"x", "p", "X"});
            r.get(p["frozen"], "problem.frozen", "x", c.frozen.x);
            r.get(p["frozen"], "problem.frozen", "p", c.frozen.p);
            r.get(p["frozen"], "problem.frozen", "X", c.frozen.X);
        }
    }
    r.get(doc, "config", "delta_schedule", c.delta_schedule);
    r.get(doc, "config", "epsilons", c.epsilons);
    {
        std::string dir = c.output_dir.string();
        r.get(doc, "config", "output_dir", dir);
        c.output_dir = dir;
    }
    if (doc.contains("checks")) {
        const json& k = doc["checks"];
        r.check_keys(k, "checks",
                     {"max_outside_fraction", "ks_threshold", "moment_tol_y1sq",
                      "moment_tol_y2sq", "moment_tol_cross", "marginal_sup_err",
                      "triple_rel_gap", "lipschitz_margin", "require_decreasing_errors"});
        r.get(k, "checks", "max_outside_fraction", c.checks.max_outside_fraction);
        r.get(k, "checks", "ks_threshold", c.checks.ks_threshold);
        r.get(k, "checks", "moment_tol_y1sq", c.checks.moment_tol_y1sq);
        r.get(k, "checks", "moment_tol_y2sq", c.checks.moment_tol_y2sq);
        r.get(k, "checks", "moment_tol_cross", c.checks.moment_tol_cross);
        r.get(k, "checks", "marginal_sup_err", c.checks.marginal_sup_err);
        r.get(k, "checks", "triple_rel_gap", c.checks.triple_rel_gap);
        r.get(k, "checks", "lipschitz_margin", c.checks.lipschitz_margin);
        r.get(k, "checks", "require_decreasing_errors",
              c.checks.require_decreasing_errors);
    }
    return c;
}

std::vector<Diagnostic> validate(const ExperimentConfig& c) {
    std::vector<Diagnostic> out;
    auto fail = [&](const std::string& path, const std::string& msg) {
        out.push_back({path, msg, true});
    };
    auto warn = [&](const std::string& path, const std::string& msg) {
        out.push_back({path, msg, false});
    };

    static const std::vector<std::string> commands = {
        "simulate", "measure", "ergodic", "cell", "effective", "perturb", "all"};
    if (std::find(commands.begin(), commands.end(), c.command) == commands.end())
        fail("command", "must be one of simulate|measure|ergodic|cell|effective|perturb|all");

    if (!(c.dynamics.alpha > 0.0)) fail("dynamics.alpha", "alpha must be > 0");
    if (!(c.dynamics.rho >= 0.0)) fail("dynamics.rho", "rho must be >= 0");
    if (c.dynamics.alpha > 0.0 && c.dynamics.alpha <= 1.0 &&
        (c.command == "cell" || c.command == "all"))
        warn("dynamics.alpha",
             "cell-problem gradient bound requires alpha > 1; diagnostics will be partial");

    if (c.dynamics.alpha > 0.0) {
        try {
            (void)c.sim.resolved(c.dynamics);
        } catch (const std::exception& e) {
            fail("sim", e.what());
        }
    }

    auto check_grid = [&](const std::string& path, double factor, int n) {
        if (!(factor > 0.0)) fail(path + ".half_width_factor", "must be > 0");
        if (n < 3 || n % 2 == 0) fail(path + ".n", "must be odd and >= 3");
    };
    check_grid("grids.measure", c.measure_grid.half_width_factor, c.measure_grid.n);
    check_grid("grids.fast", c.fast_grid.half_width_factor, c.fast_grid.n);
    if (c.measure_grid.half_width_factor < 4.0)
        warn("grids.measure.half_width_factor",
             "below 4/sqrt(alpha); occupation histograms will be rejected");
    if (!(c.slow_grid.rx > 0.0)) fail("grids.slow.rx", "must be > 0");
    if (c.slow_grid.nx < 3 || c.slow_grid.nx % 2 == 0)
        fail("grids.slow.nx", "must be odd and >= 3");

    {
        const auto ids = catalog_ids();
        if (std::find(ids.begin(), ids.end(), c.catalog_id) == ids.end())
            fail("problem.catalog_id", "unknown catalog entry '" + c.catalog_id + "'");
    }
    if (!(c.discount > 0.0)) fail("problem.discount", "must be > 0");
    if (!(c.horizon > 0.0)) fail("problem.horizon", "must be > 0");
    if (c.n_controls < 1) fail("problem.n_controls", "must be >= 1");

    if (c.delta_schedule.size() < 3)
        fail("delta_schedule", "need at least 3 entries");
    for (size_t k = 0; k < c.delta_schedule.size(); ++k) {
        if (!(c.delta_schedule[k] > 0.0)) {
            fail("delta_schedule", "entries must be > 0");
            break;
        }
        if (k > 0 && !(c.delta_schedule[k] < c.delta_schedule[k - 1])) {
            fail("delta_schedule", "must be strictly decreasing");
            break;
        }
    }
    for (size_t k = 0; k < c.epsilons.size(); ++k) {
        if (!(c.epsilons[k] > 0.0)) {
            fail("epsilons", "entries must be > 0");
            break;
        }
        if (k > 0 && !(c.epsilons[k] < c.epsilons[k - 1])) {
            fail("epsilons", "must be strictly decreasing");
            break;
        }
    }
    if (c.epsilons.empty() && (c.command == "perturb" || c.command == "all"))
        fail("epsilons", "need at least one epsilon for the perturb stage");
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
    return out;
}

bool RunManifest::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

ordered_json RunManifest::to_json() const {
    ordered_json j;
    j["version"] = kVersion;
    j["config"] = config_echo;
    j["stages"] = ordered_json::array();
    for (const auto& s : stages)
        j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}});
    j["artifacts"] = ordered_json::array();
    for (const auto& a : artifacts)
        j["artifacts"].push_back(
            {{"path", a.path}, {"fnv1a64", a.hash}, {"bytes", a.bytes}});
    j["checks"] = ordered_json::array();
    for (const auto& c : checks)
        j["checks"].push_back(
            {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["all_checks_passed"] = all_passed();
    return j;
}

namespace {

namespace fs = std::filesystem;

struct StageContext {
    const ExperimentConfig& cfg;
    const RunOptions& opts;
    fs::path out;
    RunManifest& man;

    fs::path target(const std::string& rel) const {
        fs::path p = out / rel;
        if (fs::exists(p) && !opts.overwrite)
            throw std::runtime_error("output collision: " + p.string() +
                                     " exists (pass --overwrite to replace)");
        return p;
    }

    void record(const std::string& rel) {
        RunManifest::Artifact a;
        a.path = rel;
        a.hash = fnv1a64_file(out / rel);
        a.bytes = fs::file_size(out / rel);
        man.artifacts.push_back(std::move(a));
    }

    void check(const std::string& name, bool ok, const std::string& detail) {
        man.checks.push_back({name, ok, detail});
    }

    void write_json(const std::string& rel, const ordered_json& j) {
        const fs::path p = target(rel);
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << j.dump(2) << "\n";
        f.close();
        record(rel);
    }
};

std::string rel_err_detail(double value, double target, double tol) {
    return "value " + format_double(value) + " target " + format_double(target) +
           " tolerance " + format_double(tol);
}

void stage_measure(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const Grid2D grid = cfg.make_measure_grid();
    const DiscreteGenerator gen(cfg.dynamics, grid);
    const Field m = stationary_density(gen);

    write_field_csv(ctx.target("density.csv"), m, "density");
    ctx.record("density.csv");

    // Moments of the discrete density (plain cell sums, matching the
    // normalization).
    double ey1sq = 0, ey2sq = 0, ey1y2 = 0, ey1 = 0, ey2 = 0;
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j) {
            const Point2 y = grid.node(i, j);
            const double w = m.at(i, j) * grid.cell_area();
            ey1 += w * y.y1;
            ey2 += w * y.y2;
            ey1sq += w * y.y1 * y.y1;
            ey2sq += w * y.y2 * y.y2;
            ey1y2 += w * y.y1 * y.y2;
        }

    // y1 marginal against the closed-form Gaussian.
    double marginal_err = 0.0;
    for (int i = 0; i < grid.n1; ++i) {
        double col = 0.0;
        for (int j = 0; j < grid.n2; ++j) col += m.at(i, j);
        col *= grid.h2();
        const double y = grid.y1(i);
        const double exact = std::sqrt(cfg.dynamics.alpha / (2.0 * M_PI)) *
                             std::exp(-0.5 * cfg.dynamics.alpha * y * y);
        marginal_err = std::max(marginal_err, std::abs(col - exact));
    }

    const double alpha = cfg.dynamics.alpha;
    ordered_json j;
    j["method"] = "stationary-fd";
    j["moments"] = {{"Ey1", ey1},     {"Ey2", ey2},     {"Ey1y1", ey1sq},
                    {"Ey1y2", ey1y2}, {"Ey2y2", ey2sq}};
    j["stationary_oracle"] = {{"Ey1y1", 1.0 / alpha},
                              {"Ey2y2", 1.0 / (alpha * alpha)},
                              {"Ey1y2", 0.0}};
    j["marginal_sup_err"] = marginal_err;
    ctx.write_json("fd_moments.json", j);

    const double mass = m.values.sum() * grid.cell_area();
    ctx.check("measure.mass_normalized", std::abs(mass - 1.0) < 1e-9,
              "mass " + format_double(mass));
    ctx.check("measure.marginal_matches_oracle",
              marginal_err < cfg.checks.marginal_sup_err,
              rel_err_detail(marginal_err, 0.0, cfg.checks.marginal_sup_err));
    ctx.check("measure.moment_y1sq",
              std::abs(ey1sq - 1.0 / alpha) <= cfg.checks.moment_tol_y1sq / alpha,
              rel_err_detail(ey1sq, 1.0 / alpha, cfg.checks.moment_tol_y1sq / alpha));
}

void stage_simulate(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const Grid2D grid = cfg.make_measure_grid();
    const Histogram2D hist =
        simulate_occupation(cfg.dynamics, cfg.sim, grid, ctx.opts.threads);
    const MomentEstimates mom =
        estimate_moments(cfg.dynamics, cfg.sim, ctx.opts.threads);
    const double ks = ks_distance_y1_marginal(hist, cfg.dynamics);

    write_histogram_csv(ctx.target("histogram.csv"), hist);
    ctx.record("histogram.csv");

    const double alpha = cfg.dynamics.alpha;
    ordered_json j;
    j["method"] = "monte-carlo";
    j["config"] = ctx.cfg.to_json()["sim"];
    j["n_samples"] = mom.n_samples;
    j["outside_fraction"] = hist.outside_fraction();
    j["moments"] = {{"Ey1", mom.mean[0]},
                    {"Ey2", mom.mean[1]},
                    {"Ey1y1", mom.second(0, 0)},
                    {"Ey1y2", mom.second(0, 1)},
                    {"Ey2y2", mom.second(1, 1)}};
    j["stderr"] = {{"Ey1", mom.mean_stderr[0]},
                   {"Ey2", mom.mean_stderr[1]},
                   {"Ey1y1", mom.second_stderr(0, 0)},
                   {"Ey1y2", mom.second_stderr(0, 1)},
                   {"Ey2y2", mom.second_stderr(1, 1)}};
    j["stationary_oracle"] = {{"Ey1y1", 1.0 / alpha},
                              {"Ey2y2", 1.0 / (alpha * alpha)},
                              {"Ey1y2", 0.0}};
    j["ks_y1_marginal"] = ks;
    ctx.write_json("sim_moments.json", j);

    ctx.check("simulate.outside_fraction",
              hist.outside_fraction() <= cfg.checks.max_outside_fraction,
              format_double(hist.outside_fraction()));
    ctx.check("simulate.ks_y1_marginal", ks <= cfg.checks.ks_threshold,
              rel_err_detail(ks, 0.0, cfg.checks.ks_threshold));
    ctx.check("simulate.moment_y1sq",
              std::abs(mom.second(0, 0) - 1.0 / alpha) <=
                  cfg.checks.moment_tol_y1sq / alpha,
              rel_err_detail(mom.second(0, 0), 1.0 / alpha,
                             cfg.checks.moment_tol_y1sq / alpha));
    ctx.check("simulate.moment_y2sq",
              std::abs(mom.second(1, 1) - 1.0 / (alpha * alpha)) <=
                  cfg.checks.moment_tol_y2sq / (alpha * alpha),
              rel_err_detail(mom.second(1, 1), 1.0 / (alpha * alpha),
                             cfg.checks.moment_tol_y2sq / (alpha * alpha)));
    ctx.check("simulate.moment_cross",
              std::abs(mom.second(0, 1)) <= cfg.checks.moment_tol_cross,
              rel_err_detail(mom.second(0, 1), 0.0, cfg.checks.moment_tol_cross));
}

void stage_ergodic(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const Grid2D grid = cfg.make_measure_grid();
    const DiscreteGenerator gen(cfg.dynamics, grid);
    const Field f = Field::sample(
        grid, [](Point2 y) { return y.y1 * y.y1 + y.y2 * y.y2; });
    const ErgodicTriple triple = ergodic_three_ways(gen, f);

    const double vals[3] = {triple.discounted, triple.parabolic, triple.forced};
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = std::max({std::abs(lo), std::abs(hi), 1e-12});
    const double gap = (hi - lo) / scale;

    ordered_json j;
    j["f"] = "y1^2 + y2^2";
    j["discounted_limit"] = triple.discounted;
    j["parabolic_limit"] = triple.parabolic;
    j["forced_rate_limit"] = triple.forced;
    j["pairwise_max_rel_gap"] = gap;
    const double alpha = cfg.dynamics.alpha;
    j["moment_oracle"] = 1.0 / alpha + 1.0 / (alpha * alpha);
    ctx.write_json("ergodic_triple.json", j);

    ctx.check("ergodic.triple_agreement", gap <= cfg.checks.triple_rel_gap,
              rel_err_detail(gap, 0.0, cfg.checks.triple_rel_gap));
}

void stage_cell(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const Grid2D grid = cfg.make_measure_grid();
    const DiscreteGenerator gen(cfg.dynamics, grid);
    const ControlProblem prob = cfg.make_problem();
    const FrozenForcing fz = freeze_F(prob, cfg.frozen);
    const Field F = Field::sample(grid, fz.F);
    const CorrectorResult cr = extract_lambda_w(gen, F, cfg.delta_schedule);

    write_field_csv(ctx.target("corrector.csv"), cr.w);
    ctx.record("corrector.csv");

    ordered_json j;
    j["catalog_id"] = cfg.catalog_id;
    j["frozen"] = {{"x", cfg.frozen.x}, {"p", cfg.frozen.p}, {"X", cfg.frozen.X}};
    j["lambda"] = cr.lambda;
    j["delta_trace"] = ordered_json::array();
    for (const auto& e : cr.delta_trace)
        j["delta_trace"].push_back({{"delta", e.delta},
                                    {"lambda_estimate", e.lambda_estimate},
                                    {"sup_gradient", e.sup_gradient}});
    j["diagnostics"] = {
        {"lipschitz", {{"emp_lip", cr.lipschitz.emp_lip}, {"bound", cr.lipschitz.bound}}},
        {"holder",
         {{"gamma", cr.holder.gamma},
          {"M", cr.holder.M},
          {"emp_ratio", cr.holder.emp_ratio},
          {"ratio_spread", cr.holder.ratio_spread}}},
        {"log_growth",
         {{"emp_C", cr.log_growth.emp_C},
          {"emp_linear", cr.log_growth.emp_linear},
          {"identity_residual", cr.log_growth.identity_residual},
          {"supersolution_ok", cr.log_growth.supersolution_ok}}}};
    ctx.write_json("cell.json", j);

    if (cfg.dynamics.alpha > 1.0)
        ctx.check("cell.lipschitz_bound",
                  cr.lipschitz.emp_lip <=
                      cr.lipschitz.bound * cfg.checks.lipschitz_margin,
                  rel_err_detail(cr.lipschitz.emp_lip, cr.lipschitz.bound,
                                 cfg.checks.lipschitz_margin));
    ctx.check("cell.holder_delta_stability", cr.holder.ratio_spread < 0.10,
              format_double(cr.holder.ratio_spread));
    ctx.check("cell.supersolution_identity",
              cr.log_growth.identity_residual < 1e-10 && cr.log_growth.supersolution_ok,
              format_double(cr.log_growth.identity_residual));
}

void stage_effective(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path density = ctx.out / "density.csv";
    if (!fs::exists(density))
        throw std::runtime_error(
            "effective stage consumes " + density.string() +
            "; run the measure stage into this output directory first");
    const Field m = read_field_csv(density);
    const ControlProblem prob = cfg.make_problem();

    const std::vector<std::pair<double, double>> audit = {
        {0.0, 0.0}, {1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {2.0, -1.0}};
    ordered_json j;
    j["catalog_id"] = cfg.catalog_id;
    j["x"] = cfg.frozen.x;
    j["audit_set"] = ordered_json::array();
    for (auto [p, X] : audit) {
        FrozenArgs fa;
        fa.x = cfg.frozen.x;
        fa.p = p;
        fa.X = X;
        j["audit_set"].push_back(
            {{"p", p}, {"X", X}, {"H_bar", effective_hamiltonian(prob, fa, m)}});
    }

    auto gbar = effective_datum(prob, m);
    {
        const fs::path p = ctx.target("gbar.csv");
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << "x,gbar\n";
        for (int i = 0; i < cfg.slow_grid.nx; ++i) {
            const double x = cfg.slow_grid.x(i);
            f << format_double(x) << ',' << format_double(gbar(x)) << "\n";
        }
        f.close();
        ctx.record("gbar.csv");
    }
    ctx.write_json("effective.json", j);

    // Degenerate ellipticity spot check: raising X never raises H_bar.
    FrozenArgs lo, hi;
    lo.x = hi.x = cfg.frozen.x;
    lo.p = hi.p = cfg.frozen.p;
    lo.X = 0.0;
    hi.X = 1.0;
    const double h_lo = effective_hamiltonian(prob, lo, m);
    const double h_hi = effective_hamiltonian(prob, hi, m);
    ctx.check("effective.degenerate_ellipticity", h_hi <= h_lo + 1e-12,
              format_double(h_hi - h_lo));
}

void stage_perturb(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const ControlProblem prob = cfg.make_problem();
    SlowGrid slow = cfg.slow_grid;
    slow.horizon = prob.horizon;
    const Grid2D fast = cfg.make_fast_grid();
    const ConvergenceReport rep =
        convergence_study(prob, cfg.dynamics, slow, fast, cfg.epsilons);

    ordered_json j;
    j["catalog_id"] = cfg.catalog_id;
    j["epsilons"] = rep.epsilons;
    j["window_errors"] = rep.errors;
    j["layer_errors"] = rep.layer_errors;
    j["osc_V"] = rep.osc_V;
    j["layer_threshold"] = rep.layer_threshold;
    j["dt"] = rep.dt_used;
    j["runtimes_sec"] = rep.runtimes_sec;
    ctx.write_json("convergence.json", j);

    bool decreasing = true;
    for (size_t k = 1; k < rep.errors.size(); ++k)
        if (!(rep.errors[k] < rep.errors[k - 1])) decreasing = false;
    if (cfg.checks.require_decreasing_errors && rep.errors.size() > 1) {
        std::string detail;
        for (double e : rep.errors) detail += format_double(e) + " ";
        ctx.check("perturb.errors_decreasing", decreasing, detail);
    }
}

}  // namespace

RunManifest run(const ExperimentConfig& config, const RunOptions& opts) {
    {
        auto diags = validate(config);
        std::string fatal;
        for (const auto& d : diags)
            if (d.fatal) fatal += d.path + ": " + d.message + "; ";
        if (!fatal.empty()) throw std::invalid_argument("invalid config: " + fatal);
    }

    RunManifest man;
    man.config_echo = config.to_json();
    fs::create_directories(config.output_dir);
    StageContext ctx{config, opts, config.output_dir, man};

    std::vector<std::pair<std::string, void (*)(StageContext&)>> stages;
    auto want = [&](const std::string& s) {
        return config.command == "all" || config.command == s;
    };
    // Dependency order: the density artifact precedes the effective stage.
    if (want("measure")) stages.emplace_back("measure", stage_measure);
    if (want("simulate")) stages.emplace_back("simulate", stage_simulate);
    if (want("ergodic")) stages.emplace_back("ergodic", stage_ergodic);
    if (want("cell")) stages.emplace_back("cell", stage_cell);
    if (want("effective")) stages.emplace_back("effective", stage_effective);
    if (want("perturb")) stages.emplace_back("perturb", stage_perturb);

    for (auto& [name, fn] : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(ctx);
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + name + "' failed: " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();
        man.stages.push_back({name, std::chrono::duration<double>(t1 - t0).count()});
    }

    {
        const fs::path p = ctx.target("manifest.json");
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << man.to_json().dump(2) << "\n";
    }
    return man;
}

}  // namespace grushin
