#include "grushin/control.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace grushin {

std::vector<std::string> catalog_ids() {
    return {"bench-A", "bench-trivial", "bench-odd"};
}

namespace {

std::vector<double> spanning_controls(int n) {
    if (n < 1) throw std::invalid_argument("catalog: need at least one control");
    std::vector<double> u(static_cast<size_t>(n));
    if (n == 1) {
        u[0] = 0.0;
        return u;
    }
    for (int k = 0; k < n; ++k) u[static_cast<size_t>(k)] = -1.0 + 2.0 * k / (n - 1);
    return u;
}

}  // namespace

ControlProblem make_catalog_problem(const std::string& id, const CatalogOverrides& ov) {
    ControlProblem p;
    p.catalog_id = id;
    p.controls = spanning_controls(ov.n_controls);
    if (ov.discount > 0.0) p.discount = ov.discount;
    if (ov.horizon > 0.0) p.horizon = ov.horizon;
    p.separable = true;
    p.phi_tilde = [](double, Point2, double u) { return u; };
    p.sigma_tilde = [](double, Point2, double) { return 0.2; };
    p.C_phi = 1.0;
    p.C_sigma = 0.2;

    if (id == "bench-A") {
        p.cost_xu = [](double x, double) { return std::sin(x); };
        p.cost_y = [](Point2 y) {
            return std::cos(y.y1) + 1.0 / (1.0 + y.y2 * y.y2);
        };
        p.terminal = [](double x, Point2 y) {
            return std::atan(x) + y.y1 * y.y1 * std::exp(-y.y1 * y.y1);
        };
        p.C_f = 3.0;
        p.C_g = 2.0;
    } else if (id == "bench-trivial") {
        p.cost_xu = [](double x, double) { return std::sin(x); };
        p.cost_y = [](Point2) { return 0.0; };
        p.terminal = [](double x, Point2) { return std::atan(x); };
        p.C_f = 1.0;
        p.C_g = 1.6;
    } else if (id == "bench-odd") {
        p.cost_xu = [](double x, double) { return std::sin(x); };
        p.cost_y = [](Point2 y) { return y.y1 * std::exp(-0.5 * y.y1 * y.y1); };
        p.terminal = [](double x, Point2 y) {
            return std::atan(x) + y.y1 * std::exp(-y.y1 * y.y1);
        };
        p.C_f = 2.0;
        p.C_g = 2.0;
    } else {
        throw std::invalid_argument("unknown catalog entry: " + id);
    }

    p.running_cost = [fxu = p.cost_xu, fy = p.cost_y](double x, Point2 y, double u) {
        return fxu(x, u) + fy(y);
    };
    audit_problem(p);
    return p;
}

void audit_problem(const ControlProblem& prob, std::uint64_t seed) {
    if (prob.controls.empty())
        throw std::invalid_argument("ControlProblem: empty control set");
    if (!(prob.discount > 0.0) || !(prob.horizon > 0.0))
        throw std::invalid_argument("ControlProblem: requires a > 0 and T > 0");

    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> ux(-20.0, 20.0), uy(-10.0, 10.0);
    std::uniform_int_distribution<size_t> uu(0, prob.controls.size() - 1);
    for (int k = 0; k < 2000; ++k) {
        const double x = ux(eng);
        const Point2 y{uy(eng), uy(eng)};
        const double u = prob.controls[uu(eng)];
        if (std::abs(prob.running_cost(x, y, u)) > prob.C_f * (1.0 + std::abs(x)))
            throw std::invalid_argument("ControlProblem: running cost exceeds C_f(1+|x|)");
        if (std::abs(prob.terminal(x, y)) > prob.C_g * (1.0 + std::abs(x)))
            throw std::invalid_argument("ControlProblem: terminal exceeds C_g(1+|x|)");
        if (std::abs(prob.phi_tilde(x, y, u)) > prob.C_phi)
            throw std::invalid_argument("ControlProblem: drift exceeds C_phi");
        if (std::abs(prob.sigma_tilde(x, y, u)) > prob.C_sigma)
            throw std::invalid_argument("ControlProblem: diffusion exceeds C_sigma");
        if (prob.separable) {
            const double split = prob.cost_xu(x, u) + prob.cost_y(y);
            if (std::abs(split - prob.running_cost(x, y, u)) > 1e-12)
                throw std::invalid_argument("ControlProblem: separable split mismatch");
        }
    }
}

double hamiltonian(const ControlProblem& prob, const FrozenArgs& frozen,
                   const Point2& y) {
    if (prob.controls.empty())
        throw std::invalid_argument("hamiltonian: empty control set");
    double best = std::numeric_limits<double>::infinity();
    for (double u : prob.controls) {
        const double s = prob.sigma_tilde(frozen.x, y, u);
        const double v = -s * s * frozen.X - prob.phi_tilde(frozen.x, y, u) * frozen.p -
                         2.0 * s * frozen.Z[0] - prob.running_cost(frozen.x, y, u);
        best = std::min(best, v);
    }
    return best;
}

FrozenForcing freeze_F(const ControlProblem& prob, const FrozenArgs& frozen) {
    if (frozen.Z.lpNorm<Eigen::Infinity>() != 0.0)
        throw std::invalid_argument("freeze_F: requires Z = 0");
    FrozenForcing out;
    out.F = [prob, frozen](Point2 y) { return -hamiltonian(prob, frozen, y); };

    // Sampled audit of the bounded-smoothness hypothesis on F and its
    // first two y2-derivatives.
    const double h = 1e-4;
    std::mt19937_64 eng(4242);
    std::uniform_real_distribution<double> uy(-8.0, 8.0);
    for (int k = 0; k < 4000; ++k) {
        const Point2 y{uy(eng), uy(eng)};
        const double f0 = out.F(y);
        const double fp = out.F({y.y1, y.y2 + h});
        const double fm = out.F({y.y1, y.y2 - h});
        out.sup_F = std::max(out.sup_F, std::abs(f0));
        out.sup_dF_dy2 = std::max(out.sup_dF_dy2, std::abs((fp - fm) / (2.0 * h)));
        out.sup_d2F_dy2 = std::max(out.sup_d2F_dy2, std::abs((fp - 2.0 * f0 + fm) / (h * h)));
    }
    const double cap = 1e3 * (1.0 + prob.C_f * (1.0 + std::abs(frozen.x)) +
                              prob.C_sigma * prob.C_sigma * std::abs(frozen.X) +
                              prob.C_phi * std::abs(frozen.p));
    if (out.sup_F > cap || out.sup_dF_dy2 > cap || out.sup_d2F_dy2 > cap)
        throw std::invalid_argument(
            "freeze_F: F or its y2-derivatives are not bounded on the sample");
    return out;
}

double quadrature_against(const Field& m,
                          const std::function<double(Point2)>& integrand) {
    const Grid2D& g = m.grid;
    double acc = 0.0;
    for (int i = 0; i < g.n1; ++i) {
        const double wi = (i == 0 || i == g.n1 - 1) ? 0.5 : 1.0;
        for (int j = 0; j < g.n2; ++j) {
            const double wj = (j == 0 || j == g.n2 - 1) ? 0.5 : 1.0;
            acc += wi * wj * m.at(i, j) * integrand(g.node(i, j));
        }
    }
    return acc * g.cell_area();
}

double effective_hamiltonian(const ControlProblem& prob, const FrozenArgs& frozen,
                             const Field& m) {
    if (frozen.Z.lpNorm<Eigen::Infinity>() != 0.0)
        throw std::invalid_argument("effective_hamiltonian: requires Z = 0");
    return quadrature_against(
        m, [&](Point2 y) { return hamiltonian(prob, frozen, y); });
}

std::function<double(double)> effective_datum(const ControlProblem& prob,
                                              const Field& m) {
    return [prob, m](double x) {
        return quadrature_against(m, [&](Point2 y) { return prob.terminal(x, y); });
    };
}

}  // namespace grushin
