#include "grushin/perturb.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

namespace grushin {

void SlowGrid::validate() const {
    if (!(rx > 0.0)) throw std::invalid_argument("SlowGrid: rx must be > 0");
    if (nx < 3 || nx % 2 == 0)
        throw std::invalid_argument("SlowGrid: nx must be odd and >= 3");
    if (!(horizon > 0.0)) throw std::invalid_argument("SlowGrid: horizon must be > 0");
}

const Eigen::VectorXd& ValueTensor::slice_at(double t, double tol) const {
    for (size_t k = 0; k < slice_times.size(); ++k)
        if (std::abs(slice_times[k] - t) <= tol) return slices[k];
    throw std::out_of_range("ValueTensor: no slice near requested time");
}

namespace {

// Effective coefficients per (x node, control): the control minimum
// commutes with the fast average because the catalog guarantees y-free
// phi/sigma and an additively separable running cost; the non-separable
// fallback averages each coefficient against m.
struct EffectiveData {
    int nx = 0, nu = 0;
    std::vector<double> phi, sig2, cost;  // indexed i * nu + u
    Eigen::VectorXd gbar;

    double at_phi(int i, int u) const { return phi[size_t(i * nu + u)]; }
    double at_sig2(int i, int u) const { return sig2[size_t(i * nu + u)]; }
    double at_cost(int i, int u) const { return cost[size_t(i * nu + u)]; }
};

EffectiveData average_problem(const ControlProblem& prob, const Field& m,
                              const SlowGrid& slow) {
    EffectiveData d;
    d.nx = slow.nx;
    d.nu = static_cast<int>(prob.controls.size());
    d.phi.resize(size_t(d.nx) * d.nu);
    d.sig2.resize(size_t(d.nx) * d.nu);
    d.cost.resize(size_t(d.nx) * d.nu);
    d.gbar.resize(d.nx);

    const double mass = quadrature_against(m, [](Point2) { return 1.0; });
    const double fbar_y =
        prob.separable ? quadrature_against(m, prob.cost_y) / mass : 0.0;

    for (int i = 0; i < d.nx; ++i) {
        const double x = slow.x(i);
        for (int u = 0; u < d.nu; ++u) {
            const double uc = prob.controls[size_t(u)];
            const size_t k = size_t(i * d.nu + u);
            if (prob.separable) {
                d.phi[k] = prob.phi_tilde(x, Point2{0.0, 0.0}, uc);
                const double s = prob.sigma_tilde(x, Point2{0.0, 0.0}, uc);
                d.sig2[k] = s * s;
                d.cost[k] = prob.cost_xu(x, uc) + fbar_y;
            } else {
                d.phi[k] = quadrature_against(m, [&](Point2 y) {
                               return prob.phi_tilde(x, y, uc);
                           }) / mass;
                d.sig2[k] = quadrature_against(m, [&](Point2 y) {
                                const double s = prob.sigma_tilde(x, y, uc);
                                return s * s;
                            }) / mass;
                d.cost[k] = quadrature_against(m, [&](Point2 y) {
                                return prob.running_cost(x, y, uc);
                            }) / mass;
            }
        }
        d.gbar[i] = quadrature_against(m, [&](Point2 y) {
                        return prob.terminal(x, y);
                    }) / mass;
    }
    return d;
}

double cfl_sum_effective(const ControlProblem& prob, const SlowGrid& slow,
                         const EffectiveData& d) {
    const double hx = slow.hx();
    double worst = 0.0;
    for (int i = 0; i < d.nx; ++i)
        for (int u = 0; u < d.nu; ++u)
            worst = std::max(worst, 2.0 * d.at_sig2(i, u) / (hx * hx) +
                                        std::abs(d.at_phi(i, u)) / hx);
    return worst + prob.discount;
}

// dt and step count shared between solvers: n = ceil(T / dt) keeps the
// final time exact and never loosens the step.
std::pair<double, int> resolve_dt(const SlowGrid& slow, double limit) {
    double dt = slow.dt_back > 0.0 ? slow.dt_back : 0.9 * limit;
    if (dt > limit * (1.0 + 1e-12))
        throw SolverError("backward time step violates the CFL bound (dt " +
                          std::to_string(dt) + " > " + std::to_string(limit) + ")");
    const int n = std::max(1, static_cast<int>(std::ceil(slow.horizon / dt - 1e-12)));
    return {slow.horizon / n, n};
}

}  // namespace

double cfl_limit_effective(const ControlProblem& prob, const SlowGrid& slow,
                           const Field& m) {
    slow.validate();
    const EffectiveData d = average_problem(prob, m, slow);
    return 1.0 / cfl_sum_effective(prob, slow, d);
}

ValueTensor solve_effective(const ControlProblem& prob, const Field& m,
                            const SlowGrid& slow) {
    slow.validate();
    const EffectiveData d = average_problem(prob, m, slow);
    const auto [dt, n_steps] = resolve_dt(slow, 1.0 / cfl_sum_effective(prob, slow, d));

    const int nx = slow.nx;
    const double hx = slow.hx();
    const double a = prob.discount;
    const double T = slow.horizon;

    ValueTensor out;
    out.slow = slow;
    out.dt = dt;
    Eigen::VectorXd v = d.gbar, w(nx);
    out.slice_times.push_back(T);
    out.slices.push_back(v);

    for (int k = 1; k <= n_steps; ++k) {
        for (int i = 0; i < nx; ++i) {
            const double vc = v[i];
            const double vm = i > 0 ? v[i - 1] : vc;       // Neumann ghosts at the
            const double vp = i < nx - 1 ? v[i + 1] : vc;  // truncation boundary
            const double d2 = (vp - 2.0 * vc + vm) / (hx * hx);
            double ham = std::numeric_limits<double>::infinity();
            for (int u = 0; u < d.nu; ++u) {
                const double phi = d.at_phi(i, u);
                const double grad =
                    phi > 0.0 ? (vp - vc) / hx : (vc - vm) / hx;  // upwind per branch
                ham = std::min(ham, -d.at_sig2(i, u) * d2 - phi * grad -
                                        d.at_cost(i, u));
            }
            w[i] = vc - dt * (ham + a * vc);
        }
        v.swap(w);
        out.slice_times.push_back(T - k * dt);
        out.slices.push_back(v);
    }
    return out;
}

namespace {

// Pointwise problem data tabulated on (slow node, fast node, control),
// shared across epsilon runs.
struct FullTables {
    int nx = 0, ny = 0, nu = 0;
    std::vector<double> phi, sig, cost;  // (i * ny + q) * nu + u
    Eigen::VectorXd g;                   // terminal, i * ny + q
};

FullTables tabulate(const ControlProblem& prob, const SlowGrid& slow,
                    const Grid2D& fast) {
    FullTables t;
    t.nx = slow.nx;
    t.ny = fast.size();
    t.nu = static_cast<int>(prob.controls.size());
    const size_t total = size_t(t.nx) * t.ny * t.nu;
    t.phi.resize(total);
    t.sig.resize(total);
    t.cost.resize(total);
    t.g.resize(size_t(t.nx) * t.ny);
    for (int i = 0; i < t.nx; ++i) {
        const double x = slow.x(i);
        for (int q = 0; q < t.ny; ++q) {
            const Point2 y = fast.node(q / fast.n2, q % fast.n2);
            t.g[size_t(i) * t.ny + q] = prob.terminal(x, y);
            for (int u = 0; u < t.nu; ++u) {
                const double uc = prob.controls[size_t(u)];
                const size_t k = (size_t(i) * t.ny + q) * t.nu + u;
                t.phi[k] = prob.phi_tilde(x, y, uc);
                t.sig[k] = prob.sigma_tilde(x, y, uc);
                t.cost[k] = prob.running_cost(x, y, uc);
            }
        }
    }
    return t;
}

double cfl_sum_full(const ControlProblem& prob, const SlowGrid& slow,
                    const Grid2D& fast, const FullTables& t, double epsilon) {
    const double hx = slow.hx(), h1 = fast.h1();
    double sig_max = 0.0, phi_max = 0.0;
    for (size_t k = 0; k < t.sig.size(); ++k) {
        sig_max = std::max(sig_max, std::abs(t.sig[k]));
        phi_max = std::max(phi_max, std::abs(t.phi[k]));
    }
    const double gamma = 2.0 * sig_max / std::sqrt(epsilon);
    return 2.0 * sig_max * sig_max / (hx * hx) + phi_max / hx + prob.discount +
           2.0 * gamma / (hx * h1);
}

ValueTensor run_full(const ControlProblem& prob, const SlowGrid& slow,
                     const Grid2D& fast, double epsilon,
                     const std::vector<double>& slice_times, const FullTables& t,
                     const DiscreteGenerator& fast_gen) {
    if (!(epsilon > 0.0))
        throw std::invalid_argument("solve_full: epsilon must be > 0");
    const auto [dt, n_steps] =
        resolve_dt(slow, 1.0 / cfl_sum_full(prob, slow, fast, t, epsilon));

    const int nx = t.nx, ny = t.ny, nu = t.nu;
    const int n2 = fast.n2;
    const double hx = slow.hx(), h1 = fast.h1();
    const double a = prob.discount;
    const double T = slow.horizon;
    const double inv_sqrt_eps = 1.0 / std::sqrt(epsilon);
    const double cross_h = 2.0 * hx * h1;

    // Forward times to record, mapped onto step indices.
    std::vector<int> want(static_cast<size_t>(n_steps) + 1, 0);
    want[0] = want[static_cast<size_t>(n_steps)] = 1;
    for (double ts : slice_times) {
        const int k = static_cast<int>(std::llround((T - ts) / dt));
        if (k < 0 || k > n_steps || std::abs((T - k * dt) - ts) > 0.5 * dt + 1e-12)
            throw std::invalid_argument("solve_full: slice time off the step grid");
        want[static_cast<size_t>(k)] = 1;
    }

    ValueTensor out;
    out.slow = slow;
    out.fast = fast;
    out.dt = dt;

    Eigen::VectorXd v = t.g, w(v.size());
    auto record = [&](int k) {
        out.slice_times.push_back(T - k * dt);
        out.slices.push_back(v);
    };
    record(0);

    for (int k = 1; k <= n_steps; ++k) {
        // Explicit Hamiltonian block.
        for (int i = 0; i < nx; ++i) {
            const std::int64_t base = std::int64_t(i) * ny;
            for (int q = 0; q < ny; ++q) {
                const std::int64_t c = base + q;
                const double vc = v[c];
                const double vxm = i > 0 ? v[c - ny] : vc;
                const double vxp = i < nx - 1 ? v[c + ny] : vc;
                const double d2x = (vxp - 2.0 * vc + vxm) / (hx * hx);

                // Mixed d2/dxdy1, sign-adaptive 7-point stencils; dropped
                // at x or y1 walls.
                double zdiag = 0.0, zanti = 0.0;
                const int i1 = q / n2;
                if (i > 0 && i < nx - 1 && i1 > 0 && i1 < fast.n1 - 1) {
                    const double vy_p = v[c + n2], vy_m = v[c - n2];
                    zdiag = (2.0 * vc + v[c + ny + n2] + v[c - ny - n2] -
                             vxp - vxm - vy_p - vy_m) / cross_h;
                    zanti = (-2.0 * vc - v[c + ny - n2] - v[c - ny + n2] +
                             vxp + vxm + vy_p + vy_m) / cross_h;
                }

                const size_t kk = size_t(c) * nu;
                double ham = std::numeric_limits<double>::infinity();
                for (int u = 0; u < nu; ++u) {
                    const double sig = t.sig[kk + u];
                    const double phi = t.phi[kk + u];
                    const double grad =
                        phi > 0.0 ? (vxp - vc) / hx : (vc - vxm) / hx;
                    const double z1 = sig >= 0.0 ? zdiag : zanti;
                    ham = std::min(ham, -sig * sig * d2x - phi * grad -
                                            2.0 * sig * z1 * inv_sqrt_eps -
                                            t.cost[kk + u]);
                }
                w[c] = vc - dt * (ham + a * vc);
            }
        }
        // Implicit fast block, one prefactorized solve per slow node.
        for (int i = 0; i < nx; ++i)
            v.segment(std::int64_t(i) * ny, ny) = fast_gen.solve_shifted(
                1.0, dt / epsilon, w.segment(std::int64_t(i) * ny, ny));
        if (want[static_cast<size_t>(k)]) record(k);
    }
    return out;
}

}  // namespace

double cfl_limit_full(const ControlProblem& prob, const SlowGrid& slow,
                      const Grid2D& fast, double epsilon) {
    slow.validate();
    const FullTables t = tabulate(prob, slow, fast);
    return 1.0 / cfl_sum_full(prob, slow, fast, t, epsilon);
}

ValueTensor solve_full(const ControlProblem& prob, const DynamicsSpec& spec,
                       const SlowGrid& slow, const Grid2D& fast, double epsilon,
                       const std::vector<double>& slice_times) {
    slow.validate();
    const FullTables t = tabulate(prob, slow, fast);
    const DiscreteGenerator fast_gen(spec, fast);
    return run_full(prob, slow, fast, epsilon, slice_times, t, fast_gen);
}

ConvergenceReport convergence_study(const ControlProblem& prob,
                                    const DynamicsSpec& spec, const SlowGrid& slow,
                                    const Grid2D& fast,
                                    const std::vector<double>& epsilons) {
    slow.validate();
    if (epsilons.empty())
        throw std::invalid_argument("convergence_study: need at least one epsilon");
    for (size_t k = 0; k < epsilons.size(); ++k) {
        if (!(epsilons[k] > 0.0))
            throw std::invalid_argument("convergence_study: epsilons must be > 0");
        if (k > 0 && !(epsilons[k] < epsilons[k - 1]))
            throw std::invalid_argument("convergence_study: epsilons must decrease");
    }

    const FullTables tables = tabulate(prob, slow, fast);
    const DiscreteGenerator fast_gen(spec, fast);
    const Field m = stationary_density(fast_gen);
    const double T = slow.horizon;

    // One shared time step, the most restrictive CFL over the list, so the
    // effective and epsilon marches stay step-for-step comparable.
    double limit = std::numeric_limits<double>::infinity();
    for (double eps : epsilons)
        limit = std::min(limit, 1.0 / cfl_sum_full(prob, slow, fast, tables, eps));
    SlowGrid shared = slow;
    if (shared.dt_back <= 0.0) shared.dt_back = 0.9 * limit;
    const double dt = resolve_dt(shared, limit).first;
    shared.dt_back = dt;

    // Measurement times: nine samples across the window plus one inside
    // the terminal layer, snapped to the step grid.
    std::vector<double> window_times;
    for (int j = 0; j <= 8; ++j) {
        const double ts = (0.5 + 0.05 * j) * T;
        window_times.push_back(T - dt * std::llround((T - ts) / dt));
    }
    const double layer_time = T - dt * std::llround(0.01 * T / dt);
    std::vector<double> slice_times = window_times;
    slice_times.push_back(layer_time);

    ValueTensor veff = solve_effective(prob, m, shared);

    std::vector<std::future<std::pair<ValueTensor, double>>> jobs;
    for (double eps : epsilons)
        jobs.push_back(std::async(std::launch::async, [&, eps]() {
            const auto t0 = std::chrono::steady_clock::now();
            ValueTensor vt =
                run_full(prob, shared, fast, eps, slice_times, tables, fast_gen);
            const auto t1 = std::chrono::steady_clock::now();
            return std::make_pair(std::move(vt),
                                  std::chrono::duration<double>(t1 - t0).count());
        }));

    const double x_win = slow.rx / 2.0 + 1e-12;
    const double y_win = 1.0 + 1e-12;
    std::vector<int> x_nodes, y_nodes;
    for (int i = 0; i < slow.nx; ++i)
        if (std::abs(slow.x(i)) <= x_win) x_nodes.push_back(i);
    for (int q = 0; q < fast.size(); ++q) {
        const Point2 y = fast.node(q / fast.n2, q % fast.n2);
        if (std::abs(y.y1) <= y_win && std::abs(y.y2) <= y_win) y_nodes.push_back(q);
    }

    ConvergenceReport rep;
    rep.epsilons = epsilons;
    rep.dt_used = dt;

    double v_min = std::numeric_limits<double>::infinity(), v_max = -v_min;
    for (double ts : window_times) {
        const Eigen::VectorXd& s = veff.slice_at(ts, 0.5 * dt);
        for (int i : x_nodes) {
            v_min = std::min(v_min, s[i]);
            v_max = std::max(v_max, s[i]);
        }
    }
    rep.osc_V = v_max - v_min;

    // Oscillation of |g - gbar| over the spatial window.
    {
        const Eigen::VectorXd& gbar = veff.slice_at(T, 0.5 * dt);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i : x_nodes)
            for (int q : y_nodes) {
                const Point2 y = fast.node(q / fast.n2, q % fast.n2);
                const double gap = std::abs(prob.terminal(slow.x(i), y) - gbar[i]);
                lo = std::min(lo, gap);
                hi = std::max(hi, gap);
            }
        rep.layer_threshold = 0.5 * (hi - lo);
    }

    auto window_error = [&](const ValueTensor& vfull, double ts) {
        const Eigen::VectorXd& f = vfull.slice_at(ts, 0.5 * dt);
        const Eigen::VectorXd& e = veff.slice_at(ts, 0.5 * dt);
        double err = 0.0;
        for (int i : x_nodes)
            for (int q : y_nodes)
                err = std::max(err,
                               std::abs(f[std::int64_t(i) * fast.size() + q] - e[i]));
        return err;
    };

    for (auto& job : jobs) {
        auto [vfull, seconds] = job.get();
        double err = 0.0;
        for (double ts : window_times) err = std::max(err, window_error(vfull, ts));
        rep.errors.push_back(err);
        rep.layer_errors.push_back(window_error(vfull, layer_time));
        rep.runtimes_sec.push_back(seconds);
    }
    return rep;
}

}  // namespace grushin
