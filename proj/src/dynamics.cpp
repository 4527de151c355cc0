#include "grushin/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace grushin {

void DynamicsSpec::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("DynamicsSpec: alpha must be > 0");
    if (!(rho >= 0.0) || !std::isfinite(rho))
        throw std::invalid_argument("DynamicsSpec: rho must be >= 0");
}

Eigen::Matrix2d diffusion_product(const DynamicsSpec& spec, const Point2& y) {
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    a(0, 0) = 1.0;
    a(1, 1) = y.y1 * y.y1 + spec.rho * spec.rho;
    return a;
}

Eigen::Vector2d drift(const DynamicsSpec& spec, const Point2& y) {
    return {-spec.alpha * y.y1, -spec.alpha * y.y2};
}

double generator_apply(const DynamicsSpec& spec, const Jet2& jet, const Point2& y) {
    const double a22 = y.y1 * y.y1 + spec.rho * spec.rho;
    return -jet.hess(0, 0) - a22 * jet.hess(1, 1) +
           spec.alpha * (y.y1 * jet.grad(0) + y.y2 * jet.grad(1));
}

double lyapunov_W(const Point2& y) {
    const double y1sq = y.y1 * y.y1;
    return y1sq * y1sq / 12.0 + 0.5 * y.y2 * y.y2;
}

double lyapunov_residual(const DynamicsSpec& spec, const Point2& y) {
    const double y1sq = y.y1 * y.y1;
    return -2.0 * y1sq - spec.rho * spec.rho +
           (spec.alpha / 3.0) * y1sq * y1sq + spec.alpha * y.y2 * y.y2;
}

namespace {

// Minimum of the residual over the circle |y| = r. With c = cos^2(theta)
// the residual is a convex quadratic in c on [0, 1], so the minimum is the
// clamped vertex.
double residual_min_on_circle(const DynamicsSpec& spec, double r) {
    const double r2 = r * r;
    const double a = (spec.alpha / 3.0) * r2 * r2;           // c^2 term
    const double b = -(2.0 + spec.alpha) * r2;               // c term
    const double c0 = spec.alpha * r2 - spec.rho * spec.rho; // constant
    if (a <= 0.0) return c0;  // r == 0
    double cstar = -b / (2.0 * a);
    if (cstar < 0.0) cstar = 0.0;
    if (cstar > 1.0) cstar = 1.0;
    return (a * cstar + b) * cstar + c0;
}

}  // namespace

double lyapunov_radius(const DynamicsSpec& spec) {
    spec.validate();
    // Beyond r_up the angular minimum exceeds 1 for every direction:
    // once the quadratic's vertex is interior, min = alpha r^2 - rho^2
    // - 3(2+alpha)^2/(4 alpha), increasing in r.
    const double alpha = spec.alpha;
    const double tail = 3.0 * (2.0 + alpha) * (2.0 + alpha) / (4.0 * alpha);
    double r_up = std::sqrt((1.0 + spec.rho * spec.rho + tail) / alpha);
    r_up = std::max(r_up, std::sqrt(3.0 * (2.0 + alpha) / (2.0 * alpha)));
    r_up *= 1.0 + 1e-9;
    if (residual_min_on_circle(spec, r_up) < 1.0)
        throw std::runtime_error("lyapunov_radius: upper bracket failed");

    // Largest scan radius where the inequality still fails.
    const int n_scan = 4096;
    double lo = 0.0;
    for (int k = n_scan; k >= 0; --k) {
        const double r = r_up * k / n_scan;
        if (residual_min_on_circle(spec, r) < 1.0) {
            lo = r;
            break;
        }
    }
    double hi = std::min(lo + r_up / n_scan, r_up);
    for (int it = 0; it < 200 && hi - lo > 1e-12 * r_up; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual_min_on_circle(spec, mid) < 1.0 ? lo : hi) = mid;
    }

    // Recertify on a dense angular sample at the returned radius.
    const int n_dir = 10000;
    for (int k = 0; k < n_dir; ++k) {
        const double th = 2.0 * M_PI * k / n_dir;
        const Point2 y{hi * std::cos(th), hi * std::sin(th)};
        if (lyapunov_residual(spec, y) < 1.0 - 1e-9)
            throw std::runtime_error("lyapunov_radius: certificate failed");
    }
    return hi;
}

double phi_theta_constant(const DynamicsSpec& spec, double M) {
    spec.validate();
    if (!(spec.alpha > 1.0))
        throw std::invalid_argument("phi_theta_constant: requires alpha > 1");
    if (!(M >= 1.0))
        throw std::invalid_argument("phi_theta_constant: requires M >= 1");

    // -Delta_G Phi + alpha z . D Phi - 2 alpha Phi = 2 alpha z1^4 - 14 z1^2
    // - 2 alpha M, so L = 2 alpha M + max_t (14 t - 2 alpha t^2), t = z1^2.
    // The maximum is located by ternary search (the objective is concave).
    const double alpha = spec.alpha;
    auto deficit = [&](double t) { return 14.0 * t - 2.0 * alpha * t * t; };
    double lo = 0.0, hi = 14.0 / alpha;  // past the root, deficit < 0
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (deficit(m1) < deficit(m2)) lo = m1; else hi = m2;
    }
    return 2.0 * alpha * M + deficit(0.5 * (lo + hi));
}

}  // namespace grushin
