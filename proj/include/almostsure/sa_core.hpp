#pragma once

// Generic stochastic-approximation machinery for iterates of the form
//   x_{n+1} = x_n + alpha_n (f(x_n) - x_n) + e1_{n+1} + e2_{n+1}:
// l_p Lyapunov functions and the drift/smoothness/norm checks, skeleton
// anchors, conditional expectations through kernel powers, the noise
// decomposition along anchors, growth and martingale-difference checks,
// the Robbins-Siegmund envelope and the one-step recursion fit.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "almostsure/algorithms.hpp"
#include "almostsure/errors.hpp"
#include "almostsure/markov_core.hpp"
#include "almostsure/trajectory.hpp"

namespace almostsure::sa {

using algorithms::FieldMap;
using algorithms::SampleMap;
using algorithms::StepSchedule;
using algorithms::UpdateMaps;

// ---------------------------------------------------------------------------
// Lyapunov function phi(x) = 1/2 ||x||_p^2
// ---------------------------------------------------------------------------

class LyapunovP {
public:
    /// Throws InvalidArgument unless p >= 2.
    explicit LyapunovP(double p);
    double p() const noexcept { return p_; }

private:
    double p_;
};

/// ||x||_p computed with max-scaling, safe for large p.
double norm_p(const Vector& x, double p);

double phi_value(const LyapunovP& lp, const Vector& x);

/// sign(x_i) |x_i|^{p-1} ||x||_p^{2-p}; the zero vector maps to zero.
Vector phi_gradient(const LyapunovP& lp, const Vector& x);

/// Sample point with the witness ratio, kept for diagnostics.
struct Witness {
    double value = 0.0;
    Vector point;
};

struct LyapunovReport {
    double p = 2.0;
    std::size_t samples = 0;
    /// (i) smallest C with phi(y) <= phi(x) + <grad phi(x), y - x> + C ||y - x||_2^2.
    Witness smoothness_C;
    /// (ii) phi(0) == 0 and phi(x) > 0 on every nonzero sample.
    bool positive_definite = false;
    /// (iii) max relative deviation of <grad phi(x), x> from 2 phi(x).
    double homogeneity_error = 0.0;
    /// (iii) sum_i |grad_i(x)| |y_i| <= C sqrt(phi(x)) sqrt(phi(y)).
    double dual_pairing_C = 0.0;
    /// (iii) ||x||_2 <= C sqrt(phi(x)).
    double norm_upper_C = 0.0;
    /// (iii) sqrt(phi(x)) <= C ||x||_2.
    double norm_lower_C = 0.0;
    /// (iv) largest eta with <grad phi(x - x*), f(x) - x> <= -eta phi(x - x*).
    Witness drift_eta;
    bool passed = false;
};

class DriftViolated : public Error {
public:
    DriftViolated(const std::string& what, LyapunovReport report)
        : Error(what), report_(std::move(report)) {}
    const LyapunovReport& report() const noexcept { return report_; }

private:
    LyapunovReport report_;
};

/// Throws DriftViolated when the fitted eta is <= 1e-10.
LyapunovReport check_lyapunov_conditions(const LyapunovP& lp, const FieldMap& f, const Vector& x_star,
                                         std::size_t sample_count, std::uint64_t seed);

/// Largest observed ||f(x) - f(y)||_2 / ||x - y||_2 over seeded pairs.
Witness fit_lipschitz(const FieldMap& f, std::size_t dim, const Vector& center, std::size_t sample_count,
                      std::uint64_t seed);

struct PChoice {
    double p = 2.0;
    double eta = 0.0;
};

/// Smallest p = 2^k with gamma' n^{1/p} <= (1 + gamma') / 2, and
/// eta = 1 - gamma' n^{1/p}.
PChoice choose_p_for_q(std::size_t num_sa_pairs, double gamma_prime);

/// max ||T'_* q - q*||_inf / ||q - q*||_inf over seeded random q.
Witness estimate_gamma_prime(const mdp::MdpSpec& mdp, const mdp::Policy& policy,
                             const mdp::StochasticVec& d_pi, const Matrix& q_star, std::size_t samples,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Skeleton anchors
// ---------------------------------------------------------------------------

/// Open interval of admissible growth exponents a for t_m = ceil(m^a).
std::pair<double, double> anchor_exponent_interval(double nu);

struct AnchorSequence {
    /// t_0 .. t_{M+1}; exact integers up to 2^53.
    std::vector<double> times;
    /// beta_m = sum_{t = t_m}^{t_{m+1} - 1} alpha_t, m = 0 .. M.
    std::vector<double> betas;
    std::vector<double> alpha_at_anchor;
    double exponent_a = 0.0;
    double nu = 0.0;
    /// max_m alpha_{t_m} / beta_m^2 and the m achieving it.
    double anchor_C = 0.0;
    std::size_t anchor_C_witness = 0;
    /// max of the ratio over the second half does not exceed the first half.
    bool ratio_nonincreasing = false;
    /// beta_m decays like m^{-beta_exponent}; Robbins-Monro iff it lies in (1/2, 1].
    double beta_exponent = 0.0;
    double beta_sum = 0.0;
    double beta_sq_sum = 0.0;
    /// Share of sum beta^2 contributed by the last half of the anchors.
    double beta_sq_tail_share = 0.0;

    std::size_t count() const noexcept { return betas.size(); }
    /// t_m as an index; throws InvalidArgument if it is not exactly representable.
    std::size_t time(std::size_t m) const;
};

/// Requires an inv_poly schedule with nu in (2/3, 1); throws NuOutOfRange.
/// Uses the midpoint of anchor_exponent_interval(nu).
AnchorSequence build_anchors(const StepSchedule& schedule, std::size_t count_M);

/// Same construction with an explicit exponent (no range check on a).
AnchorSequence build_anchors_with_exponent(const StepSchedule& schedule, std::size_t count_M, double a);

/// Unit-step anchors t_m = m (beta_m = alpha_m), used with i.i.d. sampling.
AnchorSequence unit_anchors(const StepSchedule& schedule, std::size_t count_M);

/// sum_{t = first}^{last - 1} (t + offset)^{-nu}; exact summation for short
/// or early ranges, Euler-Maclaurin otherwise.
double inv_poly_block_sum(double nu, double offset, double first, double last);

void write_anchors_csv(std::ostream& out, const AnchorSequence& anchors);

// ---------------------------------------------------------------------------
// Conditional expectations
// ---------------------------------------------------------------------------

/// P^k by repeated squaring, cached per k. Safe for concurrent use.
class KernelPowers {
public:
    explicit KernelPowers(markov::StochasticMatrix kernel);
    const markov::StochasticMatrix& kernel() const noexcept { return kernel_; }
    std::size_t size() const noexcept { return kernel_.size(); }
    const Matrix& power(std::size_t k) const;

private:
    markov::StochasticMatrix kernel_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, Matrix> cache_;
};

/// sum_y (P^lag)(y0, y) G(w, y). Throws InvalidArgument when lag == 0.
Vector conditional_expectation_G(const KernelPowers& kernel, std::size_t y0, std::size_t lag,
                                 const SampleMap& G, const Vector& w);

/// Kernel whose rows all equal `law`: the i.i.d. sampling model.
markov::StochasticMatrix iid_kernel(const markov::StochasticVec& law);

// ---------------------------------------------------------------------------
// Noise decomposition along the anchors
// ---------------------------------------------------------------------------

struct NoiseDecomposition {
    std::vector<std::size_t> anchor_times;   // t_0 .. t_M
    std::vector<std::size_t> anchor_states;  // Y_{t_m}, m = 0 .. M-1
    std::vector<double> betas;               // beta_0 .. beta_{M-1}
    std::vector<Vector> skeleton;            // w_{t_0} .. w_{t_M}
    std::vector<Vector> e1;
    std::vector<Vector> e2;
    /// sum_t alpha_t E[G(w_{t_m}, Y_{t+1}) | Y_{t_m}] as used to center e1.
    std::vector<Vector> centering;
    /// max_m || w_{t_{m+1}} - (w_{t_m} + beta_m g(w_{t_m}) + e1 + e2) ||_inf
    double reconstruction_residual = 0.0;
    long lag_offset = 0;

    std::size_t segments() const noexcept { return e1.size(); }
};

/// `trace` holds every iterate w_0 .. w_T with T >= t_M. `lag_offset`
/// shifts the conditional-expectation lag (0 is the correct centering; a
/// nonzero value builds the negative control). Throws TraceTooShort.
NoiseDecomposition decompose_noise(const std::vector<Vector>& trace, const trajectory::SamplePath& path,
                                   const AnchorSequence& anchors, std::size_t segments,
                                   const UpdateMaps& maps, const KernelPowers& kernel,
                                   const StepSchedule& schedule, long lag_offset = 0);

struct GrowthReport {
    double C_e1 = 0.0;
    double C_e2 = 0.0;
    std::size_t witness_e1 = 0;
    std::size_t witness_e2 = 0;
    /// Least-squares slope of log(||e|| / beta^k) vs log(m + 1) over the
    /// second half, ignoring roundoff-level segments.
    double trend_e1 = 0.0;
    double trend_e2 = 0.0;
};

inline constexpr double kGrowthCap = 1e6;
inline constexpr double kGrowthTrendMax = 0.5;

/// Fits ||e1|| <= C beta (1 + ||w||^2) and ||e2|| <= C beta^2 (1 + ||w||^2).
GrowthReport fit_noise_growth(const NoiseDecomposition& decomp);

/// Message when a constant exceeds kGrowthCap or a trend exceeds kGrowthTrendMax.
std::optional<std::string> growth_violation(const GrowthReport& report);

/// fit_noise_growth, throwing GrowthViolated on a violation.
GrowthReport check_noise_growth(const NoiseDecomposition& decomp);

struct MdsReport {
    /// max_m || independent E[e1 | Y_{t_m}] ||_inf.
    double analytic_violation = 0.0;
    /// max over checked anchors and coordinates of |mean| / standard error.
    double mc_max_z = 0.0;
    std::size_t mc_anchors_checked = 0;
    std::size_t mc_samples = 0;

    bool passes(double analytic_tol = 1e-10, double z_max = 3.0) const {
        return analytic_violation <= analytic_tol && mc_max_z <= z_max;
    }
};

/// Recomputes E[e1[m] | Y_{t_m}] by propagating the anchor-state law step by
/// step (independent of KernelPowers) and resamples each checked segment
/// `mc_samples` times from its anchor state.
MdsReport check_mds(const NoiseDecomposition& decomp, const markov::StochasticMatrix& kernel,
                    const SampleMap& G, const StepSchedule& schedule, std::size_t mc_samples,
                    std::size_t mc_anchor_count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Robbins-Siegmund envelope and the one-step recursion
// ---------------------------------------------------------------------------

struct Envelope {
    double final_value = 0.0;
    std::vector<double> trace;
};

/// z_{n+1} = (1 - T_n) z_n + C T_n^2, with the factor clamped to 0 when T_n >= 1.
Envelope robbins_siegmund_envelope(double z0, const StepSchedule& T, double C, std::size_t steps);

struct RecursionFit {
    double C1 = 0.0;
    double C2 = 0.0;
    std::size_t n0 = 0;
};

inline constexpr double kRecursionC2Cap = 1e6;

/// Fits phi_{m+1} <= (1 - C1 beta_m) phi_m + inner_m + C2 beta_m^2 for m >= n0,
/// where inner_m = <grad phi(x_m - x*), e1[m]>. Throws RecursionInfeasible.
RecursionFit fundamental_recursion_check(const std::vector<double>& phi, const std::vector<double>& inner,
                                         const std::vector<double>& betas);

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct AssumptionReport {
    std::string problem;
    double lipschitz_L = 0.0;
    LyapunovReport lyapunov;
    /// Eigenvalue drift constant (linear TD) or the chosen-p eta (Q-learning).
    double analytic_eta = 0.0;
    double gamma_prime = 0.0;
    GrowthReport growth;
    bool growth_ok = false;
    MdsReport mds;
    RecursionFit recursion;
    bool recursion_ok = false;
    std::vector<std::string> failures;

    bool passed() const noexcept { return failures.empty(); }
};

void write_report(std::ostream& out, const AssumptionReport& report);

}  // namespace almostsure::sa
