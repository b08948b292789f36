#pragma once

// Step-size schedules and the three learning updates (tabular TD, linear
// TD, Q-learning), each also available in the unified form
//   w_{t+1} = w_t + alpha_t (F(w_t, Y_{t+1}) - w_t),  f(w) = E_stationary F(w, Y).

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "almostsure/mdp_model.hpp"
#include "almostsure/trajectory.hpp"

namespace almostsure::algorithms {

class StepSchedule {
public:
    enum class Family { InvPoly, Constant, Explicit };

    /// alpha_t = 1 / (t + offset)^nu, offset >= 1, nu > 0.
    static StepSchedule inv_poly(double nu, std::size_t offset = 2);
    static StepSchedule constant(double c);
    static StepSchedule explicit_list(std::vector<double> values);

    /// Parses `inv_poly:NU:OFFSET` or `constant:C`.
    static StepSchedule parse(const std::string& text);
    std::string to_string() const;

    double operator()(std::size_t t) const;

    Family family() const noexcept { return family_; }
    double nu() const noexcept { return nu_; }
    std::size_t offset() const noexcept { return offset_; }
    double constant_value() const noexcept { return constant_; }
    const std::vector<double>& values() const noexcept { return values_; }

    friend bool operator==(const StepSchedule&, const StepSchedule&) = default;

private:
    StepSchedule() = default;
    Family family_ = Family::Constant;
    double nu_ = 0.0;
    std::size_t offset_ = 2;
    double constant_ = 0.0;
    std::vector<double> values_;
};

enum class RobbinsMonro { Satisfies, FailsDivergence, FailsSquareSummable, Unknown };

std::string to_string(RobbinsMonro c);

/// Symbolic classification on the schedule family.
RobbinsMonro robbins_monro_class(const StepSchedule& schedule);

/// Index of the augmented sample y = (s, s') on the pair chain.
inline std::size_t pair_index(std::size_t s, std::size_t s_next, std::size_t num_states) {
    return s * num_states + s_next;
}
/// Index of y = (s, a, s') on the triple chain.
inline std::size_t triple_index(std::size_t s, std::size_t a, std::size_t s_next,
                                std::size_t num_actions, std::size_t num_states) {
    return (s * num_actions + a) * num_states + s_next;
}

struct Pair {
    std::size_t s;
    std::size_t s_next;
};
struct Triple {
    std::size_t s;
    std::size_t a;
    std::size_t s_next;
};

Pair decode_pair(std::size_t y, std::size_t num_states);
Triple decode_triple(std::size_t y, std::size_t num_actions, std::size_t num_states);

class LinearTdSpec {
public:
    /// Throws on dimension mismatch and on the TdMatrices errors.
    static LinearTdSpec create(mdp::InducedChain chain, mdp::FeatureMap features, double gamma,
                               StepSchedule schedule, Vector w0, mdp::TdOptions options = {});

    const mdp::InducedChain& chain() const noexcept { return chain_; }
    const mdp::FeatureMap& features() const noexcept { return features_; }
    double gamma() const noexcept { return gamma_; }
    const StepSchedule& schedule() const noexcept { return schedule_; }
    const Vector& w0() const noexcept { return w0_; }
    const mdp::TdMatrices& td() const noexcept { return td_; }
    std::size_t num_states() const noexcept { return chain_.num_states(); }

private:
    LinearTdSpec(mdp::InducedChain chain, mdp::FeatureMap features, double gamma,
                 StepSchedule schedule, Vector w0, mdp::TdMatrices td)
        : chain_(std::move(chain)), features_(std::move(features)), gamma_(gamma),
          schedule_(std::move(schedule)), w0_(std::move(w0)), td_(std::move(td)) {}

    mdp::InducedChain chain_;
    mdp::FeatureMap features_;
    double gamma_;
    StepSchedule schedule_;
    Vector w0_;
    mdp::TdMatrices td_;
};

class QLearningSpec {
public:
    /// With `require_ergodic`, throws NotErgodic unless the state-action
    /// chain is irreducible and aperiodic.
    static QLearningSpec create(mdp::MdpSpec mdp, mdp::Policy behavior, StepSchedule schedule,
                                Matrix q0, bool require_ergodic = true);

    const mdp::MdpSpec& mdp() const noexcept { return mdp_; }
    const mdp::Policy& behavior() const noexcept { return behavior_; }
    const StepSchedule& schedule() const noexcept { return schedule_; }
    const Matrix& q0() const noexcept { return q0_; }
    const Matrix& q_star() const noexcept { return q_star_; }
    /// Stationary state law of the behavior chain.
    const mdp::StochasticVec& d_pi() const noexcept { return d_pi_; }

private:
    QLearningSpec(mdp::MdpSpec mdp, mdp::Policy behavior, StepSchedule schedule, Matrix q0,
                  Matrix q_star, mdp::StochasticVec d_pi)
        : mdp_(std::move(mdp)), behavior_(std::move(behavior)), schedule_(std::move(schedule)),
          q0_(std::move(q0)), q_star_(std::move(q_star)), d_pi_(std::move(d_pi)) {}

    mdp::MdpSpec mdp_;
    mdp::Policy behavior_;
    StepSchedule schedule_;
    Matrix q0_;
    Matrix q_star_;
    mdp::StochasticVec d_pi_;
};

/// Flattening of S x A tables, entry (s, a) at s*A + a.
Vector flatten(const Matrix& q);
Matrix unflatten(const Vector& v, std::size_t num_states, std::size_t num_actions);

/// w + alpha (F(w, y) - w) with F the linear TD map.
Vector linear_td_step(const Vector& w, Pair y, double alpha, const LinearTdSpec& spec);

/// q(s, a) <- q(s, a) + alpha (r(s, a) + gamma max_b q(s', b) - q(s, a)).
Matrix q_learning_step(const Matrix& q, Triple y, double alpha, const mdp::MdpSpec& mdp);

/// v(s) <- v(s) + alpha (r_pi(s) + gamma v(s') - v(s)).
Vector tabular_td_step(const Vector& v, Pair y, double alpha, const mdp::InducedChain& chain,
                       double gamma);

using SampleMap = std::function<Vector(const Vector&, std::size_t)>;
using FieldMap = std::function<Vector(const Vector&)>;

/// F(w, y) on augmented-state indices and its stationary average f.
struct UpdateMaps {
    SampleMap F;
    FieldMap f;
    std::size_t num_samples = 0;
};

/// F(w, (s, s')) = (r_pi(s) + gamma x(s')^T w - x(s)^T w) x(s) + w;  f(w) = A w + b + w.
UpdateMaps eval_F_f_td(const LinearTdSpec& spec);

/// F on flattened tables over (s, a, s'); f(q) = T'_* q.
UpdateMaps eval_F_f_q(const QLearningSpec& spec);

struct IterateTrace {
    std::vector<std::size_t> steps;
    std::vector<Vector> iterates;
    std::vector<double> errors;
};

/// Runs the update along `path` (step t consumes path.states[t + 1]) and
/// records the iterate at each checkpoint with its l2 error to w*.
/// Throws HorizonExceeded.
IterateTrace run_iterates(const LinearTdSpec& spec, const trajectory::SamplePath& path,
                          const std::vector<std::size_t>& checkpoints);

/// As above for Q-learning; iterates are flattened tables, errors are l_inf to q*.
IterateTrace run_iterates(const QLearningSpec& spec, const trajectory::SamplePath& path,
                          const std::vector<std::size_t>& checkpoints);

/// Every iterate w_0 .. w_last (flattened for Q-learning).
std::vector<Vector> run_dense(const LinearTdSpec& spec, const trajectory::SamplePath& path,
                              std::size_t last);
std::vector<Vector> run_dense(const QLearningSpec& spec, const trajectory::SamplePath& path,
                              std::size_t last);

}  // namespace almostsure::algorithms
