#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Sparse>

#include "grushin/dynamics.hpp"

namespace grushin {

/// Truncated rectangular grid over the fast variables. Node counts are odd
/// so the origin lies exactly on a node (the ergodic constant is read off
/// at the origin without interpolation).
struct Grid2D {
    double r1 = 0.0, r2 = 0.0;  // half-widths
    int n1 = 0, n2 = 0;         // node counts, odd and >= 3

    static Grid2D make(double r1, double r2, int n1, int n2);
    /// Default grid for a given dynamics: half-width 6/sqrt(alpha), 241^2.
    static Grid2D standard(const DynamicsSpec& spec, int n = 241, double width = 6.0);

    double h1() const { return 2.0 * r1 / (n1 - 1); }
    double h2() const { return 2.0 * r2 / (n2 - 1); }
    double y1(int i) const { return -r1 + i * h1(); }
    double y2(int j) const { return -r2 + j * h2(); }
    int index(int i, int j) const { return i * n2 + j; }
    int size() const { return n1 * n2; }
    int origin_index() const { return index((n1 - 1) / 2, (n2 - 1) / 2); }
    double cell_area() const { return h1() * h2(); }
    Point2 node(int i, int j) const { return {y1(i), y2(j)}; }

    bool operator==(const Grid2D& o) const = default;
};

/// Scalar function sampled on a Grid2D, stored row-major in y1.
struct Field {
    Grid2D grid;
    Eigen::VectorXd values;

    Field() = default;
    explicit Field(const Grid2D& g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}

    double& at(int i, int j) { return values[grid.index(i, j)]; }
    double at(int i, int j) const { return values[grid.index(i, j)]; }

    template <typename F>
    static Field sample(const Grid2D& g, F&& f) {
        Field out(g);
        for (int i = 0; i < g.n1; ++i)
            for (int j = 0; j < g.n2; ++j)
                out.at(i, j) = f(g.node(i, j));
        return out;
    }
};

class SolverError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Monotone finite-difference discretization of the generator L on a grid.
///
/// Second derivatives use central differences, the drift term uses
/// first-order upwind differences (the drift points inward, so upwinding
/// always reaches an interior neighbor). At boundary nodes the outward leg
/// of a second difference has no node to stand on; it is closed with a
/// linear-extrapolation ghost, whose one-sided second difference vanishes.
/// This is the unique closure that keeps every off-diagonal coupling
/// nonnegative, i.e. the discrete maximum principle.
///
/// Immutable after construction; shareable across threads. Factorizations
/// of (a I + b L) are cached internally under a mutex.
class DiscreteGenerator {
  public:
    DiscreteGenerator(const DynamicsSpec& spec, const Grid2D& grid);

    const DynamicsSpec& spec() const { return spec_; }
    const Grid2D& grid() const { return grid_; }
    const Eigen::SparseMatrix<double>& matrix() const { return op_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& u) const { return op_ * u; }

    /// Solves (a I + b L) x = rhs through a cached LU factorization and
    /// verifies the relative residual against `tol`.
    Eigen::VectorXd solve_shifted(double a, double b, const Eigen::VectorXd& rhs,
                                  double tol = 1e-10) const;

  private:
    using Factor = Eigen::SparseLU<Eigen::SparseMatrix<double>>;

    std::shared_ptr<const Factor> factor_for(double a, double b) const;

    DynamicsSpec spec_;
    Grid2D grid_;
    Eigen::SparseMatrix<double> op_;
    double op_inf_norm_ = 0.0;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::pair<double, double>, std::shared_ptr<Factor>> cache_;
};

DiscreteGenerator discretize(const DynamicsSpec& spec, const Grid2D& grid);

/// Solves (delta I + L_h) u = F. The system matrix is an M-matrix, so the
/// solution obeys ||u||_inf <= ||F||_inf / delta.
Field solve_discounted(const DiscreteGenerator& gen, double delta, const Field& F);

/// Principal null vector of the adjoint L_h^T, computed by inverse
/// iteration (vanishingly small shift, renormalized each sweep), clamped
/// and normalized so that sum(m) * cell_area = 1, m >= 0.
Field stationary_density(const DiscreteGenerator& gen);

struct MarchResult {
    Field u;                           // state at t_end
    std::vector<double> times;         // step times, increasing
    std::vector<double> origin_trace;  // value at the origin per step
};

/// Implicit-Euler march of du/dt + L_h u = 0 from u0 to t_end.
/// Unconditionally stable and monotone.
MarchResult solve_parabolic(const DiscreteGenerator& gen, const Field& u0,
                            double t_end, double dt);

/// Implicit-Euler march of dv/dt + L_h v = f from v(0) = 0 to t_end.
MarchResult solve_forced(const DiscreteGenerator& gen, const Field& f,
                         double t_end, double dt);

}  // namespace grushin
