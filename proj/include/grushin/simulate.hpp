#pragma once

#include <cstdint>
#include <vector>

#include "grushin/dynamics.hpp"
#include "grushin/pde.hpp"

namespace grushin {

/// Monte Carlo run parameters. Per-path RNG streams are derived from
/// (seed, path index), so results are reproducible and independent of the
/// number of worker threads.
struct SimConfig {
    double dt = 0.0;        // if <= 0, defaults to 1e-3 / alpha
    std::int64_t n_steps = 0;
    std::int64_t n_paths = 64;
    std::int64_t burn_in = -1;  // if < 0, defaults to 10 / (alpha * dt)
    std::uint64_t seed = 1;
    Point2 initial{0.0, 0.0};

    /// Fills defaulted fields and checks the invariants
    /// dt * alpha < 1 and burn_in < n_steps.
    SimConfig resolved(const DynamicsSpec& spec) const;
};

/// Gaussian increments for one Euler step, already scaled by sqrt(dt).
/// The third channel drives the rho-regularization and is ignored when
/// rho = 0.
struct Noise {
    double w1 = 0.0;
    double w2 = 0.0;
    double w3 = 0.0;
};

/// One explicit Euler-Maruyama step:
///   y' = y + b(y) dt + sqrt(2) * sigma_rho(y) dW,
/// with sigma_rho(y) dW = (w1, y1 w2 + rho w3).
Point2 euler_step(const DynamicsSpec& spec, const Point2& y, double dt,
                  const Noise& dw);

/// Occupation histogram of the fast process. Cell (i,j) is the h1 x h2
/// rectangle centered on grid node (i,j); mass holds densities, so
/// sum(mass) * cell_area + n_outside / n_total == 1.
struct Histogram2D {
    Grid2D grid;
    Eigen::VectorXd mass;
    std::uint64_t n_outside = 0;
    std::uint64_t n_total = 0;

    double outside_fraction() const {
        return n_total ? static_cast<double>(n_outside) / n_total : 0.0;
    }
};

/// Stationary-regime sample moments with batch-means standard errors
/// (one batch per path).
struct MomentEstimates {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    std::int64_t n_samples = 0;
    Eigen::Vector2d mean_stderr = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second_stderr = Eigen::Matrix2d::Zero();
};

/// Time-averaged occupation over all paths after burn-in. Deterministic
/// for a fixed config: accumulation is chunked by path index and merged
/// in chunk order whatever the thread count. Samples falling beyond the
/// grid are counted in n_outside, never clamped.
/// Requires the grid to cover at least [-4/sqrt(alpha), 4/sqrt(alpha)]^2.
Histogram2D simulate_occupation(const DynamicsSpec& spec, const SimConfig& cfg,
                                const Grid2D& grid, int n_threads = 0);

MomentEstimates estimate_moments(const DynamicsSpec& spec, const SimConfig& cfg,
                                 int n_threads = 0);

/// Kolmogorov-Smirnov distance between the y1-marginal CDF of the
/// histogram and the Gaussian CDF with mean 0 and variance 1/alpha,
/// evaluated at the cell edges.
double ks_distance_y1_marginal(const Histogram2D& hist, const DynamicsSpec& spec);

/// CDF of N(0, 1/alpha) -- the closed-form y1 marginal of the invariant
/// measure, exposed for tests and diagnostics.
double ou_marginal_cdf(const DynamicsSpec& spec, double y1);

}  // namespace grushin
