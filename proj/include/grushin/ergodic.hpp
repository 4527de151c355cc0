#pragma once

#include <cstdint>
#include <vector>

#include "grushin/pde.hpp"

namespace grushin {

/// Empirical Lipschitz diagnostic of a discounted solution against the
/// bound L / (alpha - 1) for the forcing's Lipschitz constant L.
struct LipschitzDiag {
    double emp_lip = 0.0;  // max centered-difference gradient over delta and nodes
    double bound = 0.0;    // L / (alpha - 1)
};

/// Weighted Holder-quotient diagnostic: sup over sampled node pairs of
/// |u(x) - u(y)| / (|x - y|^gamma (Phi(x) + Phi(y))), Phi = y1^4 + y2^2 + M.
/// The quotient is expected to be stable in delta; the observed spread
/// across the schedule is recorded.
struct HolderDiag {
    double gamma = 1.0;
    double M = 1.0;
    double emp_ratio = 0.0;         // at the smallest delta
    double ratio_spread = 0.0;      // (max - min) / max across the schedule
};

/// Logarithmic-growth diagnostic of the corrector:
/// emp_C = sup |w(y)| / (1 + log(y1^4 + y2^2 + 1)), plus the closed-form
/// generator identity for the log supersolution, checked at random
/// exterior points. emp_linear is the least-squares slope of |w| against
/// |y| (intercept absorbed), i.e. the best-fit linear growth constant;
/// under domain doubling it shrinks for log-growing w and holds steady
/// for linearly growing w, which is the discrimination the diagnostic is
/// for.
struct LogGrowthDiag {
    double emp_C = 0.0;
    double emp_linear = 0.0;
    double identity_residual = 0.0;   // max |L g - closed form| at sampled points
    bool supersolution_ok = false;    // L g + delta g >= printed lower bound at samples
};

struct DeltaTraceEntry {
    double delta = 0.0;
    double lambda_estimate = 0.0;  // -delta * u_delta(0)
    double sup_gradient = 0.0;     // max centered-difference gradient of u_delta
};

/// Output of the vanishing-discount limit: the ergodic constant, the
/// corrector normalized to w(0) = 0, the per-delta trace and the
/// regularity diagnostics.
struct CorrectorResult {
    double lambda = 0.0;
    Field w;
    std::vector<DeltaTraceEntry> delta_trace;  // sorted by decreasing delta
    LipschitzDiag lipschitz;
    HolderDiag holder;
    LogGrowthDiag log_growth;
};

class ErgodicError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Default discount schedule {0.1, 0.05, 0.02, 0.01, 0.005}.
std::vector<double> default_delta_schedule();

/// Solves the discounted problem (delta I + L) u = F. Thin wrapper over
/// solve_discounted kept for symmetry with the rest of this module.
Field approximate_corrector(const DiscreteGenerator& gen, const Field& F,
                            double delta);

/// Runs the delta schedule, Richardson-extrapolates -delta u_delta(0) to
/// delta = 0 (affine fit on the last three points), takes
/// w = u_{delta_min} - u_{delta_min}(0) and fills all diagnostics.
/// Throws ErgodicError when the trace fails to contract (too-small grid).
CorrectorResult extract_lambda_w(const DiscreteGenerator& gen, const Field& F,
                                 const std::vector<double>& delta_schedule,
                                 double holder_gamma = 1.0, double holder_M = 1.0);

/// Max centered-difference gradient magnitude of u over interior nodes.
double sup_gradient(const Field& u);

/// Lipschitz diagnostic against the alpha > 1 gradient bound; refuses
/// alpha <= 1 (the estimate has no content there).
LipschitzDiag check_lipschitz(const Field& u_delta, double L, double alpha);

/// Weighted Holder quotient over `n_pairs` seeded random node pairs.
HolderDiag check_holder(const Field& u_delta, double gamma, double M,
                        std::uint64_t pair_seed = 20240901, int n_pairs = 100000);

/// Log-growth diagnostic of w (requires w(0) = 0) and the supersolution
/// identity checks for g = C1 log(y1^4 + y2^2).
LogGrowthDiag check_log_growth(const DynamicsSpec& spec, const Field& w);

struct ErgodicTriple {
    double discounted = 0.0;  // extrapolated delta * u_delta(0)
    double parabolic = 0.0;   // u(t_end, 0), u0 = f
    double forced = 0.0;      // 1/t-extrapolated v(t, 0) / t
};

/// The three long-run averages that all equal the integral of f against
/// the invariant measure: vanishing discount, long-time parabolic value at
/// the origin, and linear growth rate of the forced problem. Horizon
/// t_end = 20 / alpha; both time routes share one march. The forced route
/// removes its O(1/t) tail by two-point extrapolation in 1/t.
ErgodicTriple ergodic_three_ways(const DiscreteGenerator& gen, const Field& f);

}  // namespace grushin
