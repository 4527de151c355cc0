#pragma once

#include <functional>
#include <string>
#include <vector>

#include "grushin/pde.hpp"

namespace grushin {

/// Slow-variable control data (slow dimension n = 1). The coefficient
/// functions take (x, y, u); the terminal payoff takes (x, y). Declared
/// bounds are audited at construction on a randomized sample.
struct ControlProblem {
    std::vector<double> controls;                       // finite control set U
    std::function<double(double, Point2, double)> phi_tilde;
    std::function<double(double, Point2, double)> sigma_tilde;
    std::function<double(double, Point2, double)> running_cost;
    std::function<double(double, Point2)> terminal;
    double discount = 0.5;  // a > 0
    double horizon = 0.2;   // T > 0
    std::string catalog_id;

    // Declared growth/boundedness constants, audited at construction:
    // |f| <= C_f (1 + |x|), |g| <= C_g (1 + |x|), |phi| <= C_phi,
    // |sigma| <= C_sigma.
    double C_f = 0.0, C_g = 0.0, C_phi = 0.0, C_sigma = 0.0;

    // The catalog guarantees phi/sigma are y-free and the running cost
    // splits as cost_xu(x, u) + cost_y(y); the effective solver relies on
    // this to commute the control minimum with the fast average.
    bool separable = false;
    std::function<double(double, double)> cost_xu;
    std::function<double(Point2)> cost_y;
};

/// Frozen slow arguments of the Hamiltonian.
struct FrozenArgs {
    double x = 0.0;
    double p = 0.0;  // slow gradient
    double X = 0.0;  // slow second derivative
    Eigen::Vector2d Z = Eigen::Vector2d::Zero();  // mixed block
};

/// Catalog entries: "bench-A" (full coupling), "bench-trivial" (y-free,
/// closed-form effective limit), "bench-odd" (odd fast dependence,
/// zero-average checks).
struct CatalogOverrides {
    double discount = -1.0;  // < 0 keeps the entry default
    double horizon = -1.0;
    int n_controls = 5;      // uniformly spanning [-1, 1]
};

std::vector<std::string> catalog_ids();
ControlProblem make_catalog_problem(const std::string& id,
                                    const CatalogOverrides& ov = {});

/// Audits the declared bounds on a randomized sample; throws on violation.
void audit_problem(const ControlProblem& prob, std::uint64_t seed = 77);

/// H(x, y, p, X, Z) = min over u of
///   -sigma~^2 X - phi~ p - 2 sigma~ Z1 - f(x, y, u),
/// where Z1 is the first component of the mixed block (the slow diffusion
/// row acts on the first Brownian channel only).
double hamiltonian(const ControlProblem& prob, const FrozenArgs& frozen,
                   const Point2& y);

struct FrozenForcing {
    std::function<double(Point2)> F;  // y -> -H(x, y, p, X, 0)
    double sup_F = 0.0;               // sampled bounds backing the
    double sup_dF_dy2 = 0.0;          // bounded-smoothness hypothesis on F
    double sup_d2F_dy2 = 0.0;
};

/// F(y) := -H(x, y, p, X, 0) with the slow arguments frozen (Z must be 0).
/// Audits boundedness of F and its first two y2-derivatives by finite
/// differences on a sample; throws if any of them blow up.
FrozenForcing freeze_F(const ControlProblem& prob, const FrozenArgs& frozen);

/// Effective Hamiltonian: trapezoidal quadrature of H(x, ., p, X, 0)
/// against the density m.
double effective_hamiltonian(const ControlProblem& prob, const FrozenArgs& frozen,
                             const Field& m);

/// Effective terminal datum x -> quadrature of g(x, .) against m.
std::function<double(double)> effective_datum(const ControlProblem& prob,
                                              const Field& m);

/// Trapezoidal quadrature of an arbitrary integrand against m.
double quadrature_against(const Field& m,
                          const std::function<double(Point2)>& integrand);

}  // namespace grushin
