#pragma once

#include <optional>
#include <vector>

#include "grushin/control.hpp"
#include "grushin/pde.hpp"

namespace grushin {

/// Slow-variable grid and backward time step. dt_back <= 0 selects
/// 0.9 / CFL automatically; otherwise the solver checks it against the
/// declared stability bound and throws on violation.
struct SlowGrid {
    double rx = 2.0;
    int nx = 81;
    double horizon = 0.2;
    double dt_back = 0.0;

    void validate() const;
    double hx() const { return 2.0 * rx / (nx - 1); }
    double x(int i) const { return -rx + i * hx(); }
};

/// Backward-solve output. Slices are stored at the requested forward
/// times (plus t = horizon and t = 0); a slice is a vector over the slow
/// grid for the effective problem, or over slow x fast nodes (fast index
/// fastest) for the epsilon-problem.
struct ValueTensor {
    SlowGrid slow;
    std::optional<Grid2D> fast;
    double dt = 0.0;
    std::vector<double> slice_times;
    std::vector<Eigen::VectorXd> slices;

    const Eigen::VectorXd& slice_at(double t, double tol) const;
};

struct ConvergenceReport {
    std::vector<double> epsilons;       // decreasing
    std::vector<double> errors;         // sup over the window K of |V^eps - V|
    std::vector<double> layer_errors;   // same sup at t = 0.99 T
    double osc_V = 0.0;                 // oscillation of V over K
    double layer_threshold = 0.0;       // 0.5 * osc of |g - gbar| on the window
    std::vector<double> runtimes_sec;
    double dt_used = 0.0;
};

/// Stability bound declared by the explicit slow block (shared by both
/// solvers; the epsilon term enters only through the mixed derivative).
double cfl_limit_effective(const ControlProblem& prob, const SlowGrid& slow,
                           const Field& m);
double cfl_limit_full(const ControlProblem& prob, const SlowGrid& slow,
                      const Grid2D& fast, double epsilon);

/// Backward march of the effective problem
///   -dV/dt + Hbar(x, DV, D2V) + a V = 0,  V(T, x) = gbar(x),
/// with per-control upwind differences for the gradient and central
/// differences for the curvature (monotone under the CFL bound). All time
/// slices are stored.
ValueTensor solve_effective(const ControlProblem& prob, const Field& m,
                            const SlowGrid& slow);

/// Backward march of the full problem with the fast generator scaled by
/// 1/epsilon. Operator splitting: the Hamiltonian block (including the
/// mixed derivative over sqrt(epsilon), via sign-adaptive 7-point
/// stencils) steps explicitly; the stiff fast block steps implicitly with
/// one factorization reused across all steps, so dt is
/// epsilon-independent. The discount term stays in the explicit block so
/// that y-free data reproduce the effective march step for step.
ValueTensor solve_full(const ControlProblem& prob, const DynamicsSpec& spec,
                       const SlowGrid& slow, const Grid2D& fast, double epsilon,
                       const std::vector<double>& slice_times = {});

/// Runs solve_full per epsilon and solve_effective once, with one shared
/// time step (the most restrictive CFL over the list) so the trivial
/// y-free case stays exact for every epsilon. Errors are measured on the
/// compact window K = [0.5 T, 0.9 T] x [-Rx/2, Rx/2] x [-1, 1]^2, away
/// from the terminal layer, plus one measurement inside the layer at
/// t = 0.99 T.
ConvergenceReport convergence_study(const ControlProblem& prob,
                                    const DynamicsSpec& spec, const SlowGrid& slow,
                                    const Grid2D& fast,
                                    const std::vector<double>& epsilons);

}  // namespace grushin
