#pragma once

#include <Eigen/Dense>

namespace grushin {

/// Fast-process coefficients: Grushin-type diffusion with an
/// Ornstein-Uhlenbeck drift of rate alpha. rho >= 0 regularizes the
/// degenerate diffusion (rho = 0 is the degenerate process itself).
struct DynamicsSpec {
    double alpha = 2.0;
    double rho = 0.0;

    /// Throws std::invalid_argument unless alpha > 0 and rho >= 0.
    void validate() const;
};

/// A point in the fast-variable plane.
struct Point2 {
    double y1 = 0.0;
    double y2 = 0.0;
};

/// Second-order jet (value, gradient, Hessian) of a scalar function,
/// the argument package of the infinitesimal generator.
struct Jet2 {
    double value = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();  // must be symmetric
};

/// sigma_rho(y) sigma_rho(y)^T = diag(1, y1^2 + rho^2).
/// Positive semidefinite; definite iff y1 != 0 or rho > 0.
Eigen::Matrix2d diffusion_product(const DynamicsSpec& spec, const Point2& y);

/// b(y) = -alpha * y.
Eigen::Vector2d drift(const DynamicsSpec& spec, const Point2& y);

/// L u(y) = -tr(sigma sigma^T Y) - b . q
///        = -Y11 - (y1^2 + rho^2) Y22 + alpha (y1 q1 + y2 q2).
/// Linear in the jet; kills constants.
double generator_apply(const DynamicsSpec& spec, const Jet2& jet, const Point2& y);

/// W(y) = y1^4/12 + y2^2/2. Nonnegative, coercive.
double lyapunov_W(const Point2& y);

/// L_rho W(y) = -2 y1^2 - rho^2 + (alpha/3) y1^4 + alpha y2^2.
double lyapunov_residual(const DynamicsSpec& spec, const Point2& y);

/// Smallest radius R0 (up to bracketing tolerance) such that
/// lyapunov_residual >= 1 on {|y| >= R0}. Found by bisection on the
/// angular worst case; the result is recertified on a dense angular
/// sample before returning.
double lyapunov_radius(const DynamicsSpec& spec);

/// With Phi(z) = z1^4 + z2^2 + M, returns the smallest L (up to scan
/// resolution) such that  -Delta_G Phi + alpha z . D Phi >= 2 alpha Phi - L
/// everywhere. The z-dependence reduces to the single variable z1, so the
/// scan is a 1-D maximization. Requires alpha > 1 and M >= 1.
double phi_theta_constant(const DynamicsSpec& spec, double M);

}  // namespace grushin
