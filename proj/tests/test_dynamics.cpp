#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "grushin/dynamics.hpp"

using namespace grushin;

TEST_CASE("spec validation") {
    CHECK_THROWS_AS((DynamicsSpec{0.0, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((DynamicsSpec{-1.0, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((DynamicsSpec{1.0, -0.1}.validate()), std::invalid_argument);
    CHECK_NOTHROW((DynamicsSpec{1.0, 0.0}.validate()));
}

TEST_CASE("diffusion product") {
    DynamicsSpec s{1.0, 0.0};
    Eigen::Matrix2d a = diffusion_product(s, {3.0, 7.0});
    CHECK(a(0, 0) == 1.0);
    CHECK(a(1, 1) == 9.0);
    CHECK(a(0, 1) == 0.0);

    a = diffusion_product(s, {0.0, 5.0});
    CHECK(a(1, 1) == 0.0);  // degenerate on the axis y1 = 0

    a = diffusion_product(DynamicsSpec{1.0, 0.1}, {0.0, 0.0});
    CHECK(a(1, 1) == doctest::Approx(0.01).epsilon(1e-14));

    // psd with smallest eigenvalue min(1, y1^2 + rho^2); the determinant
    // is orientation independent
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        DynamicsSpec spec{1.0 + std::abs(u(eng)), std::abs(u(eng))};
        Point2 y{u(eng), u(eng)};
        Eigen::Matrix2d m = diffusion_product(spec, y);
        const double expected = y.y1 * y.y1 + spec.rho * spec.rho;
        CHECK(m.determinant() == doctest::Approx(expected).epsilon(1e-12));
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
        CHECK(es.eigenvalues().minCoeff() >= -1e-14);
        CHECK(es.eigenvalues().minCoeff() ==
              doctest::Approx(std::min(1.0, expected)).epsilon(1e-12));
    }
}

TEST_CASE("drift") {
    CHECK(drift(DynamicsSpec{2.0, 0.0}, {1.0, -3.0}).isApprox(Eigen::Vector2d(-2.0, 6.0)));
    CHECK(drift(DynamicsSpec{1.0, 0.0}, {0.0, 0.0}).norm() == 0.0);
    CHECK(drift(DynamicsSpec{0.5, 0.0}, {4.0, 2.0}).isApprox(Eigen::Vector2d(-2.0, -1.0)));
}

TEST_CASE("generator on explicit jets") {
    DynamicsSpec s{1.0, 0.0};
    // u = y1^2 at (2, 0): -2 + 2 alpha y1^2 = 6
    Jet2 jet;
    jet.grad << 4.0, 0.0;
    jet.hess << 2.0, 0.0, 0.0, 0.0;
    CHECK(generator_apply(s, jet, {2.0, 0.0}) == doctest::Approx(6.0));

    // u = y2^2 at (1, 1): -2 y1^2 + 2 alpha y2^2 = 0
    jet = Jet2{};
    jet.grad << 0.0, 2.0;
    jet.hess << 0.0, 0.0, 0.0, 2.0;
    CHECK(generator_apply(s, jet, {1.0, 1.0}) == doctest::Approx(0.0));

    // constants die
    CHECK(generator_apply(s, Jet2{}, {3.0, -2.0}) == 0.0);
}

TEST_CASE("generator is linear in the jet and reflection invariant") {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    auto random_jet = [&]() {
        Jet2 j;
        j.value = u(eng);
        j.grad << u(eng), u(eng);
        const double hxx = u(eng), hxy = u(eng), hyy = u(eng);
        j.hess << hxx, hxy, hxy, hyy;
        return j;
    };
    for (int k = 0; k < 300; ++k) {
        DynamicsSpec spec{0.5 + std::abs(u(eng)), std::abs(u(eng))};
        Point2 y{u(eng), u(eng)};
        Jet2 a = random_jet(), b = random_jet();
        const double ca = u(eng), cb = u(eng);
        Jet2 lin;
        lin.value = ca * a.value + cb * b.value;
        lin.grad = ca * a.grad + cb * b.grad;
        lin.hess = ca * a.hess + cb * b.hess;
        const double lhs = generator_apply(spec, lin, y);
        const double rhs = ca * generator_apply(spec, a, y) +
                           cb * generator_apply(spec, b, y);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

        // joint point/jet negation: gradients flip, Hessian stays
        Jet2 neg = a;
        neg.grad = -a.grad;
        CHECK(generator_apply(spec, neg, {-y.y1, -y.y2}) ==
              doctest::Approx(generator_apply(spec, a, y)).epsilon(1e-12));
    }
}

TEST_CASE("lyapunov function and residual") {
    CHECK(lyapunov_W({0.0, 0.0}) == 0.0);
    CHECK(lyapunov_W({1.0, 1.0}) == doctest::Approx(7.0 / 12.0));
    CHECK(lyapunov_W({2.0, 0.0}) == doctest::Approx(4.0 / 3.0));

    DynamicsSpec s{1.0, 0.0};
    CHECK(lyapunov_residual(s, {3.0, 0.0}) == doctest::Approx(9.0));
    CHECK(lyapunov_residual(s, {0.0, 0.0}) == 0.0);
    CHECK(lyapunov_residual(s, {1.0, 1.0}) == doctest::Approx(-2.0 / 3.0));
}

TEST_CASE("lyapunov radius certifies the exterior inequality") {
    DynamicsSpec s1{1.0, 0.0};
    const double r1 = lyapunov_radius(s1);
    CHECK(r1 <= 3.0);
    CHECK(r1 > 0.0);

    // residual >= 1 on a dense exterior sample
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> scale(1.0, 10.0);
    for (int k = 0; k < 10000; ++k) {
        const double r = r1 * scale(eng), th = angle(eng);
        CHECK(lyapunov_residual(s1, {r * std::cos(th), r * std::sin(th)}) >=
              1.0 - 1e-9);
    }

    // monotone in alpha
    CHECK(lyapunov_radius(DynamicsSpec{10.0, 0.0}) < r1);
    // just inside the radius the inequality fails on the worst ray
    bool fails_inside = false;
    for (int k = 0; k < 512; ++k) {
        const double th = 2.0 * M_PI * k / 512;
        if (lyapunov_residual(s1, {0.97 * r1 * std::cos(th), 0.97 * r1 * std::sin(th)}) < 1.0)
            fails_inside = true;
    }
    CHECK(fails_inside);
}

TEST_CASE("theta inequality constant") {
    CHECK_THROWS_AS((phi_theta_constant(DynamicsSpec{1.0, 0.0}, 1.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS((phi_theta_constant(DynamicsSpec{2.0, 0.0}, 0.5)),
                    std::invalid_argument);

    // 1-D oracle: max of 14 t - 2 alpha t^2 over t >= 0 by dense scan
    const double alpha = 2.0, M = 1.0;
    double scan_max = 0.0;
    for (int k = 0; k <= 2000000; ++k) {
        const double t = 8.0 * k / 2000000;
        scan_max = std::max(scan_max, 14.0 * t - 2.0 * alpha * t * t);
    }
    CHECK(scan_max == doctest::Approx(12.25).epsilon(1e-9));
    const double L = phi_theta_constant(DynamicsSpec{alpha, 0.0}, M);
    CHECK(L == doctest::Approx(2.0 * alpha * M + scan_max).epsilon(1e-9));

    // definitional recheck: -Delta_G Phi + alpha z D Phi >= 2 alpha Phi - L
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    double slack_min = 1e30;
    for (int k = 0; k < 100000; ++k) {
        const double z1 = u(eng), z2 = u(eng);
        const double phi = z1 * z1 * z1 * z1 + z2 * z2 + M;
        const double lhs = -14.0 * z1 * z1 +
                           alpha * (4.0 * z1 * z1 * z1 * z1 + 2.0 * z2 * z2);
        const double slack = lhs - (2.0 * alpha * phi - L);
        CHECK(slack >= -1e-9);
        slack_min = std::min(slack_min, slack);
    }
    // L is the smallest such constant: the bound is nearly attained
    CHECK(slack_min < 0.05 * L);
}
