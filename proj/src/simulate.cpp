#include "grushin/simulate.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

namespace grushin {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 path_engine(std::uint64_t seed, std::int64_t path) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(path))));
}

constexpr std::int64_t kChunkPaths = 8;

// Runs `worker(chunk_index)` over all chunks on up to n_threads threads.
// Chunk boundaries depend only on n_paths, so any thread count produces
// the same per-chunk results.
template <typename Worker>
void run_chunked(std::int64_t n_paths, int n_threads, Worker&& worker) {
    const std::int64_t n_chunks = (n_paths + kChunkPaths - 1) / kChunkPaths;
    if (n_threads <= 0) {
        n_threads = static_cast<int>(std::thread::hardware_concurrency());
        if (n_threads <= 0) n_threads = 1;
    }
    n_threads = static_cast<int>(std::min<std::int64_t>(n_threads, n_chunks));
    if (n_threads <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c) worker(c);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&]() {
            for (std::int64_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
                worker(c);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

SimConfig SimConfig::resolved(const DynamicsSpec& spec) const {
    spec.validate();
    SimConfig c = *this;
    if (c.dt <= 0.0) c.dt = 1e-3 / spec.alpha;
    if (c.burn_in < 0)
        c.burn_in = static_cast<std::int64_t>(std::ceil(10.0 / (spec.alpha * c.dt)));
    if (!(c.dt * spec.alpha < 1.0))
        throw std::invalid_argument("SimConfig: requires dt * alpha < 1");
    if (c.n_steps <= 0) throw std::invalid_argument("SimConfig: n_steps must be > 0");
    if (c.n_paths <= 0) throw std::invalid_argument("SimConfig: n_paths must be > 0");
    if (c.burn_in >= c.n_steps)
        throw std::invalid_argument("SimConfig: requires burn_in < n_steps");
    return c;
}

Point2 euler_step(const DynamicsSpec& spec, const Point2& y, double dt,
                  const Noise& dw) {
    if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be > 0");
    const double s2 = std::sqrt(2.0);
    return {y.y1 - spec.alpha * y.y1 * dt + s2 * dw.w1,
            y.y2 - spec.alpha * y.y2 * dt + s2 * (y.y1 * dw.w2 + spec.rho * dw.w3)};
}

namespace {

// Simulates paths [first, last) and feeds every post-burn-in state to sink.
template <typename Sink>
void run_paths(const DynamicsSpec& spec, const SimConfig& cfg,
               std::int64_t first, std::int64_t last, Sink&& sink) {
    const double sdt = std::sqrt(cfg.dt);
    const bool use_rho = spec.rho > 0.0;
    for (std::int64_t p = first; p < last; ++p) {
        auto eng = path_engine(cfg.seed, p);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Point2 y = cfg.initial;
        for (std::int64_t k = 0; k < cfg.n_steps; ++k) {
            Noise dw{sdt * gauss(eng), sdt * gauss(eng),
                     use_rho ? sdt * gauss(eng) : 0.0};
            y = euler_step(spec, y, cfg.dt, dw);
            if (k >= cfg.burn_in) sink(p, y);
        }
    }
}

}  // namespace

Histogram2D simulate_occupation(const DynamicsSpec& spec, const SimConfig& cfg_in,
                                const Grid2D& grid, int n_threads) {
    const SimConfig cfg = cfg_in.resolved(spec);
    const double needed = 4.0 / std::sqrt(spec.alpha);
    if (grid.r1 < needed || grid.r2 < needed)
        throw std::invalid_argument(
            "simulate_occupation: grid must cover [-4/sqrt(alpha), 4/sqrt(alpha)]^2");

    const double h1 = grid.h1(), h2 = grid.h2();
    const std::int64_t n_chunks = (cfg.n_paths + kChunkPaths - 1) / kChunkPaths;
    std::vector<std::vector<std::uint64_t>> counts(
        n_chunks, std::vector<std::uint64_t>());
    std::vector<std::uint64_t> outside(n_chunks, 0);

    run_chunked(cfg.n_paths, n_threads, [&](std::int64_t c) {
        auto& cell = counts[c];
        cell.assign(static_cast<size_t>(grid.size()), 0);
        const std::int64_t first = c * kChunkPaths;
        const std::int64_t last = std::min(first + kChunkPaths, cfg.n_paths);
        run_paths(spec, cfg, first, last, [&](std::int64_t, const Point2& y) {
            // cell (i,j) covers [y1_i - h1/2, y1_i + h1/2) x [...]
            const double fi = (y.y1 + grid.r1) / h1 + 0.5;
            const double fj = (y.y2 + grid.r2) / h2 + 0.5;
            const auto i = static_cast<std::int64_t>(std::floor(fi));
            const auto j = static_cast<std::int64_t>(std::floor(fj));
            if (i < 0 || i >= grid.n1 || j < 0 || j >= grid.n2)
                ++outside[c];
            else
                ++cell[static_cast<size_t>(grid.index(static_cast<int>(i),
                                                      static_cast<int>(j)))];
        });
    });

    Histogram2D hist;
    hist.grid = grid;
    hist.mass = Eigen::VectorXd::Zero(grid.size());
    std::vector<std::uint64_t> total(static_cast<size_t>(grid.size()), 0);
    for (std::int64_t c = 0; c < n_chunks; ++c) {
        hist.n_outside += outside[c];
        for (size_t k = 0; k < total.size(); ++k) total[k] += counts[c][k];
    }
    std::uint64_t inside = 0;
    for (auto v : total) inside += v;
    hist.n_total = inside + hist.n_outside;
    if (hist.n_total == 0)
        throw std::runtime_error("simulate_occupation: no samples recorded");
    const double norm = 1.0 / (static_cast<double>(hist.n_total) * grid.cell_area());
    for (int k = 0; k < grid.size(); ++k)
        hist.mass[k] = static_cast<double>(total[static_cast<size_t>(k)]) * norm;
    return hist;
}

MomentEstimates estimate_moments(const DynamicsSpec& spec, const SimConfig& cfg_in,
                                 int n_threads) {
    const SimConfig cfg = cfg_in.resolved(spec);

    // Per-path sums; a path is one batch for the standard errors.
    struct Sums {
        double n = 0, y1 = 0, y2 = 0, y11 = 0, y12 = 0, y22 = 0;
    };
    std::vector<Sums> per_path(static_cast<size_t>(cfg.n_paths));
    run_chunked(cfg.n_paths, n_threads, [&](std::int64_t c) {
        const std::int64_t first = c * kChunkPaths;
        const std::int64_t last = std::min(first + kChunkPaths, cfg.n_paths);
        run_paths(spec, cfg, first, last, [&](std::int64_t p, const Point2& y) {
            Sums& s = per_path[static_cast<size_t>(p)];
            s.n += 1;
            s.y1 += y.y1;
            s.y2 += y.y2;
            s.y11 += y.y1 * y.y1;
            s.y12 += y.y1 * y.y2;
            s.y22 += y.y2 * y.y2;
        });
    });

    MomentEstimates out;
    const auto np = static_cast<double>(cfg.n_paths);
    Eigen::Matrix<double, 5, 1> acc = Eigen::Matrix<double, 5, 1>::Zero();
    for (const Sums& s : per_path) {
        acc[0] += s.y1 / s.n;
        acc[1] += s.y2 / s.n;
        acc[2] += s.y11 / s.n;
        acc[3] += s.y12 / s.n;
        acc[4] += s.y22 / s.n;
        out.n_samples += static_cast<std::int64_t>(s.n);
    }
    acc /= np;
    out.mean << acc[0], acc[1];
    out.second << acc[2], acc[3], acc[3], acc[4];

    Eigen::Matrix<double, 5, 1> var = Eigen::Matrix<double, 5, 1>::Zero();
    for (const Sums& s : per_path) {
        Eigen::Matrix<double, 5, 1> b;
        b << s.y1 / s.n, s.y2 / s.n, s.y11 / s.n, s.y12 / s.n, s.y22 / s.n;
        var += (b - acc).cwiseAbs2();
    }
    var /= np > 1 ? np * (np - 1) : 1.0;
    const Eigen::Matrix<double, 5, 1> se = var.cwiseSqrt();
    out.mean_stderr << se[0], se[1];
    out.second_stderr << se[2], se[3], se[3], se[4];
    return out;
}

double ou_marginal_cdf(const DynamicsSpec& spec, double y1) {
    return 0.5 * std::erfc(-y1 * std::sqrt(spec.alpha / 2.0));
}

double ks_distance_y1_marginal(const Histogram2D& hist, const DynamicsSpec& spec) {
    if (hist.n_total == 0)
        throw std::invalid_argument("ks_distance_y1_marginal: empty histogram");
    const Grid2D& g = hist.grid;
    // Column masses relative to the recorded (inside) total.
    std::vector<double> col(static_cast<size_t>(g.n1), 0.0);
    double inside = 0.0;
    for (int i = 0; i < g.n1; ++i) {
        double s = 0.0;
        for (int j = 0; j < g.n2; ++j) s += hist.mass[g.index(i, j)];
        col[static_cast<size_t>(i)] = s * g.cell_area();
        inside += col[static_cast<size_t>(i)];
    }
    if (inside <= 0.0)
        throw std::invalid_argument("ks_distance_y1_marginal: no recorded mass");

    double cum = 0.0, ks = 0.0;
    for (int i = 0; i < g.n1; ++i) {
        const double left = g.y1(i) - 0.5 * g.h1();
        ks = std::max(ks, std::abs(cum / inside - ou_marginal_cdf(spec, left)));
        cum += col[static_cast<size_t>(i)];
        const double right = g.y1(i) + 0.5 * g.h1();
        ks = std::max(ks, std::abs(cum / inside - ou_marginal_cdf(spec, right)));
    }
    return ks;
}

}  // namespace grushin
