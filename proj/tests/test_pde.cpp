#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "grushin/pde.hpp"
#include "grushin/simulate.hpp"

using namespace grushin;

namespace {
const DynamicsSpec kSpec{2.0, 0.0};
Grid2D test_grid(int n = 121) { return Grid2D::standard(kSpec, n); }
}  // namespace

TEST_CASE("grid validation and geometry") {
    CHECK_THROWS_AS((Grid2D::make(1.0, 1.0, 4, 5)), std::invalid_argument);
    CHECK_THROWS_AS((Grid2D::make(1.0, 1.0, 1, 5)), std::invalid_argument);
    CHECK_THROWS_AS((Grid2D::make(-1.0, 1.0, 5, 5)), std::invalid_argument);
    Grid2D g = Grid2D::make(2.0, 3.0, 5, 7);
    CHECK(g.h1() == doctest::Approx(1.0));
    CHECK(g.h2() == doctest::Approx(1.0));
    CHECK(g.y1(2) == doctest::Approx(0.0));
    CHECK(g.y2(3) == doctest::Approx(0.0));
    CHECK(g.origin_index() == g.index(2, 3));
}

TEST_CASE("discrete generator kills constants and matches the jet form") {
    Grid2D grid = Grid2D::standard(DynamicsSpec{1.0, 0.0}, 121);
    DiscreteGenerator gen(DynamicsSpec{1.0, 0.0}, grid);

    Field c(grid);
    c.values.setConstant(3.7);
    CHECK(gen.apply(c.values).lpNorm<Eigen::Infinity>() < 1e-9);

    // u = y1^2: interior rows reproduce the generator exactly (central
    // differences are exact on quadratics and the drift blend is central
    // at this resolution)
    Field u = Field::sample(grid, [](Point2 y) { return y.y1 * y.y1; });
    Eigen::VectorXd lu = gen.apply(u.values);
    int i = 0;
    while (grid.y1(i) < 2.0 - 1e-9) ++i;
    REQUIRE(grid.y1(i) == doctest::Approx(2.0));
    CHECK(lu[grid.index(i, (grid.n2 - 1) / 2)] == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("monotone stencil: sign audit over all rows") {
    Grid2D grid = test_grid(81);
    for (double rho : {0.0, 0.05}) {
        DiscreteGenerator gen(DynamicsSpec{2.0, rho}, grid);
        const auto& m = gen.matrix();
        double row_sum_max = 0.0;
        for (int col = 0; col < m.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(m, col); it; ++it)
                if (it.row() != it.col()) CHECK(it.value() <= 0.0);
        Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.size());
        row_sum_max = (m * ones).lpNorm<Eigen::Infinity>();
        CHECK(row_sum_max < 1e-9);
    }
}

TEST_CASE("discounted solve: constants, manufactured solution, refinement") {
    const double delta = 0.3;

    Grid2D grid = test_grid(121);
    DiscreteGenerator gen(kSpec, grid);

    Field c(grid);
    c.values.setConstant(2.0);
    Field u = solve_discounted(gen, delta, c);
    CHECK((u.values.array() - 2.0 / delta).abs().maxCoeff() < 1e-9);

    // manufactured: u = y1^2 solves (delta + L) u = (delta + 2 alpha) y1^2 - 2.
    // The interior stencil is exact on this solution (central differences
    // on a quadratic), so away from the truncation boundary only solver
    // tolerance remains.
    {
        Field F = Field::sample(grid, [&](Point2 y) {
            return (delta + 2.0 * kSpec.alpha) * y.y1 * y.y1 - 2.0;
        });
        Field sol = solve_discounted(gen, delta, F);
        double err = 0.0;
        for (int i = 0; i < grid.n1; ++i)
            for (int j = 0; j < grid.n2; ++j)
                if (std::abs(grid.y1(i)) < grid.r1 / 2 && std::abs(grid.y2(j)) < grid.r2 / 2)
                    err = std::max(err, std::abs(sol.at(i, j) - grid.y1(i) * grid.y1(i)));
        CHECK(err < 1e-6);
    }

    // u = y2^2 exercises the upwind strip along the degeneracy axis, where
    // the truncation error is genuinely O(h): halving h at least halves it
    auto manufactured_error = [&](int n) {
        Grid2D g = test_grid(n);
        DiscreteGenerator gn(kSpec, g);
        Field F = Field::sample(g, [&](Point2 y) {
            return (delta + 2.0 * kSpec.alpha) * y.y2 * y.y2 - 2.0 * y.y1 * y.y1;
        });
        Field sol = solve_discounted(gn, delta, F);
        double err = 0.0;
        for (int i = 0; i < g.n1; ++i)
            for (int j = 0; j < g.n2; ++j)
                if (std::abs(g.y1(i)) < g.r1 / 2 && std::abs(g.y2(j)) < g.r2 / 2)
                    err = std::max(err, std::abs(sol.at(i, j) - g.y2(j) * g.y2(j)));
        return err;
    };
    const double e_coarse = manufactured_error(61);
    const double e_fine = manufactured_error(121);
    CHECK(e_fine < 0.08);
    CHECK(e_coarse / e_fine >= 1.8);  // at least first order under refinement

    // linearity
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> rnd(-1.0, 1.0);
    Field f1(grid), f2(grid);
    for (int k = 0; k < grid.size(); ++k) {
        f1.values[k] = rnd(eng);
        f2.values[k] = rnd(eng);
    }
    Field s1 = solve_discounted(gen, delta, f1);
    Field s2 = solve_discounted(gen, delta, f2);
    Field f12(grid);
    f12.values = f1.values + f2.values;
    Field s12 = solve_discounted(gen, delta, f12);
    CHECK((s12.values - s1.values - s2.values).lpNorm<Eigen::Infinity>() < 1e-7);

    CHECK_THROWS_AS(solve_discounted(gen, 0.0, c), std::invalid_argument);
}

TEST_CASE("discrete maximum principle") {
    Grid2D grid = test_grid(61);
    DiscreteGenerator gen(kSpec, grid);
    std::mt19937_64 eng(17);
    std::uniform_real_distribution<double> rnd(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double delta = 0.05 + rnd(eng);
        Field F(grid);
        for (int k = 0; k < grid.size(); ++k) F.values[k] = rnd(eng);
        Field u = solve_discounted(gen, delta, F);
        CHECK(u.values.minCoeff() >= -1e-10);
        CHECK(delta * u.values.lpNorm<Eigen::Infinity>() <=
              F.values.lpNorm<Eigen::Infinity>() * (1.0 + 1e-12));
    }
}

TEST_CASE("stationary density: normalization, marginal, symmetry, adjoint") {
    Grid2D grid = test_grid(121);
    DiscreteGenerator gen(kSpec, grid);
    Field m = stationary_density(gen);

    CHECK(std::abs(m.values.sum() * grid.cell_area() - 1.0) < 1e-10);
    CHECK(m.values.minCoeff() >= 0.0);

    // y1 marginal vs the closed-form OU Gaussian(0, 1/alpha)
    double sup_err = 0.0;
    for (int i = 0; i < grid.n1; ++i) {
        double col = 0.0;
        for (int j = 0; j < grid.n2; ++j) col += m.at(i, j);
        col *= grid.h2();
        const double y = grid.y1(i);
        const double exact = std::sqrt(kSpec.alpha / (2.0 * M_PI)) *
                             std::exp(-0.5 * kSpec.alpha * y * y);
        sup_err = std::max(sup_err, std::abs(col - exact));
    }
    CHECK(sup_err < 0.01);

    // reflection symmetries
    double asym = 0.0;
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j) {
            asym = std::max(asym, std::abs(m.at(i, j) - m.at(grid.n1 - 1 - i, j)));
            asym = std::max(asym, std::abs(m.at(i, j) - m.at(i, grid.n2 - 1 - j)));
        }
    CHECK(asym < 1e-8);

    // adjoint consistency: <L u, m> = 0 for random smooth bumps
    std::mt19937_64 eng(23);
    std::uniform_real_distribution<double> loc(-1.5, 1.5), wid(0.3, 1.0), amp(-2.0, 2.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double cx = loc(eng), cy = loc(eng), s = wid(eng), a = amp(eng);
        Field u = Field::sample(grid, [&](Point2 y) {
            const double d2 = (y.y1 - cx) * (y.y1 - cx) + (y.y2 - cy) * (y.y2 - cy);
            return a * std::exp(-d2 / (s * s));
        });
        const double pairing = (gen.apply(u.values).cwiseProduct(m.values)).sum() *
                               grid.cell_area();
        CHECK(std::abs(pairing) < 1e-6);
    }
}

TEST_CASE("stationary density cross-validates against Monte Carlo") {
    Grid2D grid = test_grid(121);
    Field m = stationary_density(DiscreteGenerator(kSpec, grid));
    SimConfig cfg;
    cfg.n_paths = 64;
    cfg.n_steps = 150000;
    cfg.seed = 97;
    Histogram2D h = simulate_occupation(kSpec, cfg, grid);
    // compare aggregated cell masses on a coarse partition
    const int factor = 4;
    const int c2 = (grid.n2 + factor - 1) / factor;
    const int c1 = (grid.n1 + factor - 1) / factor;
    std::vector<double> qa(static_cast<size_t>(c1) * c2, 0.0), qb(qa);
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j) {
            const size_t k = static_cast<size_t>(i / factor) * c2 + j / factor;
            qa[k] += m.at(i, j) * grid.cell_area();
            qb[k] += h.mass[grid.index(i, j)] * grid.cell_area();
        }
    double tv = 0.0;
    for (size_t k = 0; k < qa.size(); ++k) tv += std::abs(qa[k] - qb[k]);
    CHECK(0.5 * tv < 0.05);
}

TEST_CASE("parabolic march: constants, max principle, ergodic limit") {
    Grid2D grid = test_grid(121);
    DiscreteGenerator gen(kSpec, grid);

    Field c(grid);
    c.values.setConstant(-1.25);
    MarchResult r = solve_parabolic(gen, c, 1.0, 0.05);
    CHECK((r.u.values.array() + 1.25).abs().maxCoeff() < 1e-10);

    std::mt19937_64 eng(31);
    std::uniform_real_distribution<double> rnd(-1.0, 2.0);
    Field u0(grid);
    for (int k = 0; k < grid.size(); ++k) u0.values[k] = rnd(eng);
    r = solve_parabolic(gen, u0, 0.5, 0.01);
    CHECK(r.u.values.maxCoeff() <= u0.values.maxCoeff() + 1e-9);
    CHECK(r.u.values.minCoeff() >= u0.values.minCoeff() - 1e-9);

    // long-time limit at the origin approaches the invariant average
    Field f = Field::sample(grid, [](Point2 y) { return y.y1 * y.y1 + y.y2 * y.y2; });
    r = solve_parabolic(gen, f, 10.0, 0.01);
    CHECK(r.origin_trace.back() == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("forced march: linear-in-time constants and rate limit") {
    Grid2D grid = test_grid(121);
    DiscreteGenerator gen(kSpec, grid);

    Field c(grid);
    c.values.setConstant(0.8);
    MarchResult r = solve_forced(gen, c, 2.0, 0.05);
    CHECK((r.u.values.array() - 0.8 * 2.0).abs().maxCoeff() < 1e-9);

    Field f = Field::sample(grid, [](Point2 y) { return y.y1 * y.y1 + y.y2 * y.y2; });
    r = solve_forced(gen, f, 10.0, 0.01);
    CHECK(r.origin_trace.back() / r.times.back() == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("domain-size insensitivity of the discounted solve") {
    // doubling the half-widths with the same spacing changes the solution
    // on the inner half-domain by well under 1%
    const double delta = 0.1;
    Field F_small, u_small, u_big;
    Grid2D g1 = test_grid(81);
    {
        DiscreteGenerator gen(kSpec, g1);
        F_small = Field::sample(g1, [](Point2 y) {
            return std::cos(y.y1) + 1.0 / (1.0 + y.y2 * y.y2);
        });
        u_small = solve_discounted(gen, delta, F_small);
    }
    Grid2D g2 = Grid2D::make(2.0 * g1.r1, 2.0 * g1.r2, 2 * g1.n1 - 1, 2 * g1.n2 - 1);
    {
        DiscreteGenerator gen(kSpec, g2);
        Field F = Field::sample(g2, [](Point2 y) {
            return std::cos(y.y1) + 1.0 / (1.0 + y.y2 * y.y2);
        });
        u_big = solve_discounted(gen, delta, F);
    }
    const int off1 = (g2.n1 - g1.n1) / 2, off2 = (g2.n2 - g1.n2) / 2;
    double diff = 0.0;
    for (int i = 0; i < g1.n1; ++i)
        for (int j = 0; j < g1.n2; ++j) {
            if (std::abs(g1.y1(i)) > g1.r1 / 2 || std::abs(g1.y2(j)) > g1.r2 / 2)
                continue;
            CHECK(g2.y1(i + off1) == doctest::Approx(g1.y1(i)));
            diff = std::max(diff, std::abs(u_small.at(i, j) - u_big.at(i + off1, j + off2)));
        }
    CHECK(diff < 0.01 * u_small.values.lpNorm<Eigen::Infinity>());
}

TEST_CASE("regularized densities converge to the degenerate one") {
    Grid2D grid = test_grid(121);
    Field m0 = stationary_density(DiscreteGenerator(DynamicsSpec{2.0, 0.0}, grid));
    Field m5 = stationary_density(DiscreteGenerator(DynamicsSpec{2.0, 0.05}, grid));
    Field m2 = stationary_density(DiscreteGenerator(DynamicsSpec{2.0, 0.02}, grid));
    auto tv = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return 0.5 * (a - b).lpNorm<1>() * grid.cell_area();
    };
    const double tv5 = tv(m5.values, m0.values);
    const double tv2 = tv(m2.values, m0.values);
    CHECK(tv2 < tv5);  // smaller rho, closer to the degenerate density
    // rho^2-extrapolation lands an order of magnitude closer still
    const double w = 0.02 * 0.02 / (0.05 * 0.05 - 0.02 * 0.02);
    Eigen::VectorXd ext = m2.values - w * (m5.values - m2.values);
    CHECK(tv(ext, m0.values) < 0.2 * tv2);
}

TEST_CASE("grid-smoothness smoke check of the corrector route") {
    // centered second differences of the discounted solution stay bounded
    // on the inner half-domain (no grid-scale oscillation)
    Grid2D grid = test_grid(81);
    DiscreteGenerator gen(kSpec, grid);
    Field F = Field::sample(grid, [](Point2 y) { return std::cos(y.y1) + y.y2 * 0.0; });
    Field u = solve_discounted(gen, 0.05, F);
    double d2max = 0.0;
    for (int i = 1; i < grid.n1 - 1; ++i)
        for (int j = 1; j < grid.n2 - 1; ++j) {
            if (std::abs(grid.y1(i)) > grid.r1 / 2 || std::abs(grid.y2(j)) > grid.r2 / 2)
                continue;
            const double dxx = (u.at(i + 1, j) - 2 * u.at(i, j) + u.at(i - 1, j)) /
                               (grid.h1() * grid.h1());
            const double dyy = (u.at(i, j + 1) - 2 * u.at(i, j) + u.at(i, j - 1)) /
                               (grid.h2() * grid.h2());
            d2max = std::max({d2max, std::abs(dxx), std::abs(dyy)});
        }
    CHECK(d2max < 50.0);
}
