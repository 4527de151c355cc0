#include "grushin/pde.hpp"

#include <cmath>
#include <stdexcept>

namespace grushin {

Grid2D Grid2D::make(double r1, double r2, int n1, int n2) {
    if (!(r1 > 0.0) || !(r2 > 0.0))
        throw std::invalid_argument("Grid2D: half-widths must be positive");
    if (n1 < 3 || n2 < 3 || n1 % 2 == 0 || n2 % 2 == 0)
        throw std::invalid_argument("Grid2D: counts must be odd and >= 3");
    return Grid2D{r1, r2, n1, n2};
}

Grid2D Grid2D::standard(const DynamicsSpec& spec, int n, double width) {
    spec.validate();
    const double r = width / std::sqrt(spec.alpha);
    return make(r, r, n, n);
}

DiscreteGenerator::DiscreteGenerator(const DynamicsSpec& spec, const Grid2D& grid)
    : spec_(spec), grid_(grid) {
    spec_.validate();
    const int n1 = grid.n1, n2 = grid.n2;
    const double h1 = grid.h1(), h2 = grid.h2();
    const double rho2 = spec.rho * spec.rho;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(grid.size()) * 7);
    auto couple = [&](int row, int col, double c) {
        // contributes c * (u_row - u_col); c >= 0 by construction
        trip.emplace_back(row, row, c);
        trip.emplace_back(row, col, -c);
    };

    // One direction of -a u'' + d u' per call. The drift difference is the
    // theta-blend of central and upwind with theta = min(1, 2a/(|d| h)),
    // the largest central share that keeps both couplings nonnegative; it
    // falls back to pure upwind exactly where the diffusion is too weak
    // (and the inward drift guarantees the upwind neighbor exists). At the
    // walls the outward diffusion leg is dropped (linear-extrapolation
    // ghost), leaving the upwinded first-order term.
    auto assemble_direction = [&](int row, double a, double d, double h,
                                  int col_minus, int col_plus, bool interior) {
        if (!interior) {
            if (d > 0.0)      couple(row, col_minus, d / h);
            else if (d < 0.0) couple(row, col_plus, -d / h);
            return;
        }
        const double ad = std::abs(d);
        const double theta = ad * h <= 2.0 * a ? 1.0 : 2.0 * a / (ad * h);
        const double diff = a / (h * h);
        double cp = diff - theta * d / (2.0 * h);
        double cm = diff + theta * d / (2.0 * h);
        if (theta < 1.0) {
            if (d > 0.0) cm += (1.0 - theta) * d / h;
            else         cp -= (1.0 - theta) * d / h;
        }
        if (cp > 0.0) couple(row, col_plus, cp);
        if (cm > 0.0) couple(row, col_minus, cm);
    };

    for (int i = 0; i < n1; ++i) {
        const double y1 = grid.y1(i);
        for (int j = 0; j < n2; ++j) {
            const double y2 = grid.y2(j);
            const int r = grid.index(i, j);
            assemble_direction(r, 1.0, spec.alpha * y1, h1,
                               i > 0 ? grid.index(i - 1, j) : -1,
                               i < n1 - 1 ? grid.index(i + 1, j) : -1,
                               i > 0 && i < n1 - 1);
            assemble_direction(r, y1 * y1 + rho2, spec.alpha * y2, h2,
                               j > 0 ? grid.index(i, j - 1) : -1,
                               j < n2 - 1 ? grid.index(i, j + 1) : -1,
                               j > 0 && j < n2 - 1);
        }
    }

    op_.resize(grid.size(), grid.size());
    op_.setFromTriplets(trip.begin(), trip.end());
    op_.makeCompressed();
    op_inf_norm_ = 0.0;
    for (int row = 0; row < op_.rows(); ++row)
        op_inf_norm_ = std::max(op_inf_norm_, op_.row(row).cwiseAbs().sum());
}

DiscreteGenerator discretize(const DynamicsSpec& spec, const Grid2D& grid) {
    return DiscreteGenerator(spec, grid);
}

std::shared_ptr<const DiscreteGenerator::Factor>
DiscreteGenerator::factor_for(double a, double b) const {
    const auto key = std::make_pair(a, b);
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    // Factorize outside the lock so independent shifts proceed in
    // parallel; a duplicated factorization for the same key is harmless.
    Eigen::SparseMatrix<double> m = b * op_;
    Eigen::SparseMatrix<double> eye(op_.rows(), op_.cols());
    eye.setIdentity();
    m += a * eye;
    m.makeCompressed();
    auto f = std::make_shared<Factor>();
    f->compute(m);
    if (f->info() != Eigen::Success)
        throw SolverError("sparse LU factorization failed");
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto [it, inserted] = cache_.emplace(key, std::move(f));
    return it->second;
}

namespace {

// Residual rhs - (a I + b L) x accumulated in extended precision, so the
// stopping rule can be enforced below the double-precision rounding floor
// of the matrix-vector product.
Eigen::VectorXd extended_residual(const Eigen::SparseMatrix<double>& op, double a,
                                  double b, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& rhs) {
    Eigen::VectorXd r(x.size());
    std::vector<long double> acc(static_cast<size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        acc[static_cast<size_t>(i)] =
            static_cast<long double>(rhs[i]) - static_cast<long double>(a) * x[i];
    for (int col = 0; col < op.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(op, col); it; ++it)
            acc[static_cast<size_t>(it.row())] -=
                static_cast<long double>(b) * it.value() * x[col];
    for (Eigen::Index i = 0; i < x.size(); ++i)
        r[i] = static_cast<double>(acc[static_cast<size_t>(i)]);
    return r;
}

}  // namespace

Eigen::VectorXd DiscreteGenerator::solve_shifted(double a, double b,
                                                 const Eigen::VectorXd& rhs,
                                                 double tol) const {
    const auto fp = factor_for(a, b);
    const Factor& f = *fp;
    Eigen::VectorXd x = f.solve(rhs);
    if (f.info() != Eigen::Success)
        throw SolverError("sparse LU solve failed");

    // LU-preconditioned refinement until the normwise backward error is
    // below tol: ||r||_2 <= tol * (||rhs||_2 + ||a I + b L|| ||x||_2).
    // Relative to ||rhs|| alone the rule is unattainable in double once
    // ||x|| ~ ||rhs||/delta, whatever the solver.
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return x;
    const double mat_norm = std::abs(a) + std::abs(b) * op_inf_norm_;
    double res = 0.0;
    for (int iter = 0; iter < 8; ++iter) {
        Eigen::VectorXd r = extended_residual(op_, a, b, x, rhs);
        res = r.norm();
        if (res <= tol * (rhs_norm + mat_norm * x.norm())) return x;
        x += f.solve(r);
    }
    char msg[128];
    std::snprintf(msg, sizeof(msg),
                  "linear solve residual %.3e exceeds %.1e * ||rhs|| (%.3e)", res,
                  tol, tol * rhs_norm);
    throw SolverError(msg);
}

Field solve_discounted(const DiscreteGenerator& gen, double delta, const Field& F) {
    if (!(delta > 0.0))
        throw std::invalid_argument("solve_discounted: delta must be > 0");
    if (!(F.grid == gen.grid()))
        throw std::invalid_argument("solve_discounted: grid mismatch");
    Field u(gen.grid());
    u.values = gen.solve_shifted(delta, 1.0, F.values);
    return u;
}

Field stationary_density(const DiscreteGenerator& gen) {
    const Grid2D& grid = gen.grid();
    Eigen::SparseMatrix<double> adj = gen.matrix().transpose();

    // Small relative shift keeps the factorization nonsingular; the
    // spectral gap of the generator (~alpha) makes a couple of sweeps
    // plenty.
    const double diag_scale = gen.matrix().diagonal().cwiseAbs().maxCoeff();
    const double shift = 1e-10 * diag_scale;
    Eigen::SparseMatrix<double> a = adj;
    Eigen::SparseMatrix<double> eye(a.rows(), a.cols());
    eye.setIdentity();
    a += shift * eye;
    a.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw SolverError("stationary_density: factorization failed");

    Eigen::VectorXd m = Eigen::VectorXd::Constant(grid.size(), 1.0 / grid.size());
    bool converged = false;
    for (int sweep = 0; sweep < 50; ++sweep) {
        Eigen::VectorXd next = lu.solve(m);
        if (lu.info() != Eigen::Success)
            throw SolverError("stationary_density: inverse iteration solve failed");
        next /= next.lpNorm<1>();
        const double change = (next - m).lpNorm<Eigen::Infinity>() /
                              next.lpNorm<Eigen::Infinity>();
        m = next;
        const double res = (adj * m).lpNorm<Eigen::Infinity>() /
                           (diag_scale * m.lpNorm<Eigen::Infinity>());
        if (change < 1e-13 && res < 1e-12) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw SolverError("stationary_density: inverse iteration did not converge");

    // Normalize as a density, then police the sign.
    m /= m.sum() * grid.cell_area();
    const double min_val = m.minCoeff();
    if (min_val < -1e-12)
        throw SolverError("stationary_density: negative density " +
                          std::to_string(min_val));
    m = m.cwiseMax(0.0);
    m /= m.sum() * grid.cell_area();

    Field out(grid);
    out.values = std::move(m);
    return out;
}

namespace {

MarchResult march(const DiscreteGenerator& gen, const Field& start,
                  const Field* forcing, double t_end, double dt) {
    if (!(dt > 0.0) || !(t_end > 0.0))
        throw std::invalid_argument("march: dt and t_end must be > 0");
    const int n_steps = std::max(1, static_cast<int>(std::ceil(t_end / dt - 1e-12)));
    const double dt_eff = t_end / n_steps;

    MarchResult out;
    out.u = start;
    out.times.reserve(n_steps);
    out.origin_trace.reserve(n_steps);
    const int origin = gen.grid().origin_index();

    Eigen::VectorXd rhs;
    for (int k = 1; k <= n_steps; ++k) {
        rhs = out.u.values;
        if (forcing) rhs += dt_eff * forcing->values;
        out.u.values = gen.solve_shifted(1.0, dt_eff, rhs);
        out.times.push_back(k * dt_eff);
        out.origin_trace.push_back(out.u.values[origin]);
    }
    return out;
}

}  // namespace

MarchResult solve_parabolic(const DiscreteGenerator& gen, const Field& u0,
                            double t_end, double dt) {
    if (!(u0.grid == gen.grid()))
        throw std::invalid_argument("solve_parabolic: grid mismatch");
    return march(gen, u0, nullptr, t_end, dt);
}

MarchResult solve_forced(const DiscreteGenerator& gen, const Field& f,
                         double t_end, double dt) {
    if (!(f.grid == gen.grid()))
        throw std::invalid_argument("solve_forced: grid mismatch");
    Field zero(gen.grid());
    return march(gen, zero, &f, t_end, dt);
}

}  // namespace grushin
