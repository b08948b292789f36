#pragma once

// Finite row-stochastic matrices: validation, support-graph structure
// (irreducibility, periods), Doeblin minorization, simplex contraction,
// stationary distributions and geometric mixing envelopes.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace almostsure {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace markov {

/// Entries at or below this value are structural zeros on the support graph.
inline constexpr double kSupportThreshold = 1e-15;

/// Tolerance the library uses when it asserts "sums to one".
inline constexpr double kSumTolerance = 1e-12;

/// A probability vector over a finite index set.
class StochasticVec {
public:
    /// Validates `probs`; entries in [-tol, 0) are clamped to zero and the
    /// vector is renormalized when its sum is within `tol` of one.
    static StochasticVec from(Vector probs, double tol = kSumTolerance);
    static StochasticVec uniform(std::size_t n);
    static StochasticVec point_mass(std::size_t n, std::size_t at);

    const Vector& probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(probs_.size()); }
    double operator[](std::size_t i) const { return probs_(static_cast<Eigen::Index>(i)); }

    friend bool operator==(const StochasticVec& a, const StochasticVec& b) {
        return a.probs_ == b.probs_;
    }

private:
    explicit StochasticVec(Vector probs) : probs_(std::move(probs)) {}
    Vector probs_;
};

/// Square matrix whose rows are StochasticVec. Row i is the law of the
/// next state given the current state i.
class StochasticMatrix {
public:
    const Matrix& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return rows_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    StochasticVec row(std::size_t i) const;

    friend bool operator==(const StochasticMatrix& a, const StochasticMatrix& b) {
        return a.rows_ == b.rows_;
    }

private:
    friend StochasticMatrix validate_stochastic(Matrix m, double tol);
    explicit StochasticMatrix(Matrix rows) : rows_(std::move(rows)) {}
    Matrix rows_;
};

/// Throws InvalidArgument (non-square/empty), NegativeEntry, RowSumMismatch.
StochasticMatrix validate_stochastic(Matrix m, double tol = 1e-9);

struct DoeblinCertificate {
    std::size_t power_N = 1;
    double epsilon = 0.0;
    StochasticVec minorizing_measure = StochasticVec::uniform(1);
    double checked_at_tolerance = kSumTolerance;
};

struct MixingCertificate {
    double prefactor_C = 0.0;
    double rate_rho = 0.0;
    std::size_t horizon_checked = 0;
    /// Largest observed ||delta_s P^t - mu||_1 - C rho^t over the checked range.
    double worst_margin = 0.0;
};

/// Boolean support pattern of P (entries > kSupportThreshold).
std::vector<std::vector<bool>> support_pattern(const StochasticMatrix& p);

/// Strongly connected components of the support digraph; component id per state.
std::vector<std::size_t> strongly_connected_components(const StochasticMatrix& p);

bool is_irreducible(const StochasticMatrix& p);

/// gcd of the cycle lengths through `state` on the support digraph; 0 when
/// no cycle passes through it.
std::size_t period(const StochasticMatrix& p, std::size_t state);

bool is_aperiodic(const StochasticMatrix& p);

bool is_ergodic(const StochasticMatrix& p);

/// Searches N = 1 .. (n-1)^2 + 1 for a strictly positive power of P.
std::optional<DoeblinCertificate> doeblin_certificate(const StochasticMatrix& p);

/// Lipschitz constant 1 - epsilon of mu -> mu P^N on the simplex (l1).
double contraction_factor(const DoeblinCertificate& cert);

Matrix matrix_power(const Matrix& m, std::size_t k);

/// Restriction of P to `states`, which must form a closed set (every row
/// keeps its full mass). Throws InvalidArgument otherwise.
StochasticMatrix restrict_to(const StochasticMatrix& p, const std::vector<std::size_t>& states);

double l1_distance(const Vector& a, const Vector& b);

/// Fixed-point iteration mu <- mu P^N from uniform. Throws NotErgodic or
/// NoConvergence.
StochasticVec stationary_distribution(const StochasticMatrix& p, double tol = 1e-13);

/// Same as above, starting from an arbitrary point of the simplex.
StochasticVec stationary_distribution_from(const StochasticMatrix& p, const StochasticVec& start,
                                           double tol = 1e-13);

/// Independent route: solves mu (P - I) = 0 with sum(mu) = 1 by a dense
/// least-squares solve. Used as a cross-check.
Vector stationary_by_linear_solve(const StochasticMatrix& p);

/// Throws NotErgodic, EnvelopeViolated.
MixingCertificate mixing_certificate(const StochasticMatrix& p, std::size_t horizon);

/// Matrix text format: first line n, then n rows of n whitespace-separated
/// decimals. Errors name the offending line.
Matrix read_matrix(std::istream& in);
Matrix read_matrix_file(const std::string& path);
void write_matrix(std::ostream& out, const Matrix& m);

void write_certificate(std::ostream& out, const DoeblinCertificate& cert);

}  // namespace markov
}  // namespace almostsure
