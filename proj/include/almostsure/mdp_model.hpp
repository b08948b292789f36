#pragma once

// Finite MDPs, policy-induced chains, the linear TD system (A, b, w*),
// Bellman operators and the augmented chains that drive the samplers.

#include <cstddef>
#include <vector>

#include "almostsure/markov_core.hpp"

namespace almostsure::mdp {

using markov::StochasticMatrix;
using markov::StochasticVec;

/// Finite MDP. Transitions are stored as an (S*A) x S matrix whose row
/// s*A + a is p(. | s, a).
class MdpSpec {
public:
    /// `transition[s][a]` is the next-state law; reward is S x A.
    static MdpSpec create(Matrix reward, const std::vector<std::vector<Vector>>& transition,
                          double discount, Vector init_dist);
    static MdpSpec create(Matrix reward, Matrix state_action_transition, double discount,
                          Vector init_dist);

    std::size_t num_states() const noexcept { return static_cast<std::size_t>(reward_.rows()); }
    std::size_t num_actions() const noexcept { return static_cast<std::size_t>(reward_.cols()); }
    double discount() const noexcept { return discount_; }
    const Matrix& reward() const noexcept { return reward_; }
    double reward(std::size_t s, std::size_t a) const {
        return reward_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }
    /// (S*A) x S matrix of next-state laws.
    const Matrix& transition() const noexcept { return transition_; }
    double p(std::size_t s, std::size_t a, std::size_t s_next) const {
        return transition_(static_cast<Eigen::Index>(s * num_actions() + a),
                           static_cast<Eigen::Index>(s_next));
    }
    const StochasticVec& init_dist() const noexcept { return init_; }

    friend bool operator==(const MdpSpec& a, const MdpSpec& b) {
        return a.reward_ == b.reward_ && a.transition_ == b.transition_ &&
               a.discount_ == b.discount_ && a.init_ == b.init_;
    }

private:
    MdpSpec(Matrix reward, Matrix transition, double discount, StochasticVec init)
        : reward_(std::move(reward)), transition_(std::move(transition)), discount_(discount),
          init_(std::move(init)) {}

    Matrix reward_;
    Matrix transition_;
    double discount_;
    StochasticVec init_;
};

/// pi(a | s) stored as an S x A matrix with stochastic rows.
class Policy {
public:
    static Policy create(Matrix action_probs);
    static Policy uniform(std::size_t num_states, std::size_t num_actions);

    double operator()(std::size_t s, std::size_t a) const {
        return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }
    const Matrix& action_probs() const noexcept { return probs_; }
    std::size_t num_states() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t num_actions() const noexcept { return static_cast<std::size_t>(probs_.cols()); }

    friend bool operator==(const Policy& a, const Policy& b) { return a.probs_ == b.probs_; }

private:
    explicit Policy(Matrix probs) : probs_(std::move(probs)) {}
    Matrix probs_;
};

struct InducedChain {
    StochasticMatrix P_pi;
    Vector r_pi;
    StochasticVec d_pi;

    Eigen::DiagonalMatrix<double, Eigen::Dynamic> D_pi() const { return d_pi.probs().asDiagonal(); }
    std::size_t num_states() const noexcept { return P_pi.size(); }
};

/// Feature matrix X, one row x(s)^T per state.
class FeatureMap {
public:
    /// With `check_rank`, throws RankDeficient unless the smallest singular
    /// value exceeds 1e-10 times the largest.
    static FeatureMap create(Matrix x, bool check_rank = true);
    static FeatureMap tabular(std::size_t num_states);

    const Matrix& X() const noexcept { return x_; }
    std::size_t num_states() const noexcept { return static_cast<std::size_t>(x_.rows()); }
    std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }
    auto row(std::size_t s) const { return x_.row(static_cast<Eigen::Index>(s)); }

    friend bool operator==(const FeatureMap& a, const FeatureMap& b) { return a.x_ == b.x_; }

private:
    explicit FeatureMap(Matrix x) : x_(std::move(x)) {}
    Matrix x_;
};

/// Ratio of smallest to largest singular value of X.
double feature_conditioning(const Matrix& x);

struct TdMatrices {
    Matrix A;
    Vector b;
    Vector w_star;
    /// Smallest eigenvalue of -(A + A^T)/2.
    double drift_eta = 0.0;
};

struct TdOptions {
    /// Off-switch used to push degenerate features through to the drift check.
    bool require_negative_definite = true;
};

/// Throws SingularA, NotNegativeDefinite.
TdMatrices td_matrices(const InducedChain& chain, const FeatureMap& features, double gamma,
                       TdOptions options = {});

/// Throws NotErgodic when the induced chain is not irreducible and aperiodic.
InducedChain induce_chain(const MdpSpec& mdp, const Policy& policy);

/// Solves (I - gamma P_pi) v = r_pi.
Vector value_function(const InducedChain& chain, double gamma);

/// (T_* q)(s, a) = r(s, a) + gamma sum_s' p(s'|s, a) max_a' q(s', a').
Matrix bellman_optimality_apply(const MdpSpec& mdp, const Matrix& q);

struct OptimalQ {
    Matrix q;
    std::size_t iterations = 0;
};

/// Value iteration from q = 0 until ||T q - q|| <= tol (1 - gamma) / gamma.
OptimalQ optimal_q(const MdpSpec& mdp, double tol = 1e-12);

/// (T'_* q)(s, a) = d(s) pi(a|s) [(T_* q)(s, a) - q(s, a)] + q(s, a).
Matrix weighted_bellman_apply(const MdpSpec& mdp, const Policy& policy, const StochasticVec& d_pi,
                              const Matrix& q);

/// Chain on S x A pairs (index s*A + a): (s, a) -> (s', a') with
/// probability p(s'|s, a) pi(a'|s'). Not checked for ergodicity.
StochasticMatrix state_action_chain(const MdpSpec& mdp, const Policy& policy);

/// Augmented chain together with the closed set of states the sampler can
/// actually visit and the stationary law (zero off that set).
struct AugmentedChain {
    StochasticMatrix kernel;
    std::vector<std::size_t> live;
    StochasticVec stationary;
};

/// Pair chain Y = (s, s'), index s*|S| + s':
/// P_Y((s0, s0'), (s1, s1')) = 1[s1 = s0'] P_pi(s1, s1').
AugmentedChain augmented_td_kernel(const InducedChain& chain);

/// Triple chain Y = (s, a, s'), index (s*A + a)*|S| + s':
/// ((s, a, s'), (s1, a1, s1')) -> 1[s1 = s'] pi(a1|s1) p(s1'|s1, a1).
/// Throws NotErgodic unless the state-action chain is irreducible and aperiodic.
AugmentedChain augmented_q_kernel(const MdpSpec& mdp, const Policy& policy);

/// As augmented_q_kernel but only requires the state chain to be ergodic;
/// (s, a) pairs with pi(a|s) = 0 are simply never visited.
AugmentedChain q_triple_chain_unchecked(const MdpSpec& mdp, const Policy& policy);

/// Stationary law of `kernel` computed on the closed set `live` and embedded
/// back into the full index space.
StochasticVec stationary_on(const StochasticMatrix& kernel, const std::vector<std::size_t>& live);

/// Law of Y_0 for the augmented samplers: init(s) P_pi(s, s') on pairs,
/// init(s) pi(a|s) p(s'|s, a) on triples.
StochasticVec pair_initial_law(const InducedChain& chain, const StochasticVec& init);
StochasticVec triple_initial_law(const MdpSpec& mdp, const Policy& policy);

}  // namespace almostsure::mdp
