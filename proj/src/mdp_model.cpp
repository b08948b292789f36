#include "almostsure/mdp_model.hpp"

#include <cmath>
#include <sstream>

#include "almostsure/errors.hpp"

namespace almostsure::mdp {

namespace {

Eigen::Index idx(std::size_t i) {
    return static_cast<Eigen::Index>(i);
}

void require_discount(double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw InvalidArgument("discount must lie in [0, 1), got " + std::to_string(gamma));
    }
}

Vector max_over_actions(const Matrix& q) {
    return q.rowwise().maxCoeff();
}

}  // namespace

MdpSpec MdpSpec::create(Matrix reward, const std::vector<std::vector<Vector>>& transition,
                        double discount, Vector init_dist) {
    const auto num_states = static_cast<std::size_t>(reward.rows());
    const auto num_actions = static_cast<std::size_t>(reward.cols());
    if (transition.size() != num_states) {
        throw InvalidArgument("transition must have one entry per state");
    }
    Matrix flat(idx(num_states * num_actions), idx(num_states));
    for (std::size_t s = 0; s < num_states; ++s) {
        if (transition[s].size() != num_actions) {
            throw InvalidArgument("transition[" + std::to_string(s) + "] must have one law per action");
        }
        for (std::size_t a = 0; a < num_actions; ++a) {
            if (static_cast<std::size_t>(transition[s][a].size()) != num_states) {
                throw InvalidArgument("transition[" + std::to_string(s) + "][" + std::to_string(a) +
                                      "] has the wrong length");
            }
            flat.row(idx(s * num_actions + a)) = transition[s][a].transpose();
        }
    }
    return create(std::move(reward), std::move(flat), discount, std::move(init_dist));
}

MdpSpec MdpSpec::create(Matrix reward, Matrix state_action_transition, double discount,
                        Vector init_dist) {
    if (reward.rows() == 0 || reward.cols() == 0) {
        throw InvalidArgument("an MDP needs at least one state and one action");
    }
    if (!reward.allFinite()) {
        throw InvalidArgument("rewards must be finite");
    }
    const Eigen::Index n = reward.rows();
    if (state_action_transition.rows() != n * reward.cols() || state_action_transition.cols() != n) {
        throw InvalidArgument("transition table has the wrong shape");
    }
    require_discount(discount);
    for (Eigen::Index row = 0; row < state_action_transition.rows(); ++row) {
        const auto law = StochasticVec::from(state_action_transition.row(row).transpose(), 1e-9);
        state_action_transition.row(row) = law.probs().transpose();
    }
    if (init_dist.size() != n) {
        throw InvalidArgument("initial distribution has the wrong length");
    }
    auto init = StochasticVec::from(std::move(init_dist), 1e-9);
    return MdpSpec(std::move(reward), std::move(state_action_transition), discount, std::move(init));
}

Policy Policy::create(Matrix action_probs) {
    if (action_probs.rows() == 0 || action_probs.cols() == 0) {
        throw InvalidArgument("policy must be nonempty");
    }
    for (Eigen::Index s = 0; s < action_probs.rows(); ++s) {
        action_probs.row(s) = StochasticVec::from(action_probs.row(s).transpose(), 1e-9).probs().transpose();
    }
    return Policy(std::move(action_probs));
}

Policy Policy::uniform(std::size_t num_states, std::size_t num_actions) {
    return create(Matrix::Constant(idx(num_states), idx(num_actions), 1.0 / static_cast<double>(num_actions)));
}

double feature_conditioning(const Matrix& x) {
    const Eigen::JacobiSVD<Matrix> svd(x);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) {
        return 0.0;
    }
    // A tall matrix with fewer rows than columns can never have full column rank.
    if (x.rows() < x.cols()) {
        return 0.0;
    }
    return sv(sv.size() - 1) / sv(0);
}

FeatureMap FeatureMap::create(Matrix x, bool check_rank) {
    if (x.rows() == 0 || x.cols() == 0) {
        throw InvalidArgument("feature matrix must be nonempty");
    }
    if (!x.allFinite()) {
        throw InvalidArgument("features must be finite");
    }
    if (check_rank) {
        const double ratio = feature_conditioning(x);
        if (!(ratio > 1e-10)) {
            std::ostringstream msg;
            msg << "feature matrix lacks full column rank (singular value ratio " << ratio << ")";
            throw RankDeficient(msg.str());
        }
    }
    return FeatureMap(std::move(x));
}

FeatureMap FeatureMap::tabular(std::size_t num_states) {
    return FeatureMap(Matrix::Identity(idx(num_states), idx(num_states)));
}

InducedChain induce_chain(const MdpSpec& mdp, const Policy& policy) {
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    if (policy.num_states() != n || policy.num_actions() != na) {
        throw InvalidArgument("policy dimensions do not match the MDP");
    }
    Matrix p = Matrix::Zero(idx(n), idx(n));
    Vector r(idx(n));
    for (std::size_t s = 0; s < n; ++s) {
        double rs = 0.0;
        for (std::size_t a = 0; a < na; ++a) {
            const double w = policy(s, a);
            p.row(idx(s)) += w * mdp.transition().row(idx(s * na + a));
            rs += w * mdp.reward(s, a);
        }
        r(idx(s)) = rs;
    }
    auto p_pi = markov::validate_stochastic(std::move(p), 1e-9);
    if (!markov::is_ergodic(p_pi)) {
        throw NotErgodic("the policy-induced chain is not irreducible and aperiodic");
    }
    auto d_pi = markov::stationary_distribution(p_pi);
    return InducedChain{std::move(p_pi), std::move(r), std::move(d_pi)};
}

TdMatrices td_matrices(const InducedChain& chain, const FeatureMap& features, double gamma,
                       TdOptions options) {
    require_discount(gamma);
    if (features.num_states() != chain.num_states()) {
        throw InvalidArgument("feature matrix rows must match the number of states");
    }
    const Matrix& x = features.X();
    const auto n = idx(chain.num_states());
    const Vector& d = chain.d_pi.probs();

    TdMatrices out;
    out.A = x.transpose() * d.asDiagonal() * (gamma * chain.P_pi.rows() - Matrix::Identity(n, n)) * x;
    out.b = x.transpose() * d.asDiagonal() * chain.r_pi;

    const Matrix sym = 0.5 * (out.A + out.A.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    out.drift_eta = -eig.eigenvalues().maxCoeff();
    if (options.require_negative_definite && !(out.drift_eta > 1e-10)) {
        std::ostringstream msg;
        msg << "symmetric part of A has largest eigenvalue " << -out.drift_eta
            << "; A is not negative definite";
        throw NotNegativeDefinite(msg.str());
    }

    const Eigen::FullPivLU<Matrix> lu(out.A);
    if (lu.isInvertible()) {
        out.w_star = lu.solve(-out.b);
    } else if (!options.require_negative_definite) {
        out.w_star = out.A.completeOrthogonalDecomposition().solve(-out.b);
        return out;
    } else {
        const Eigen::JacobiSVD<Matrix> svd(out.A);
        const Vector& sv = svd.singularValues();
        std::ostringstream msg;
        msg << "A is singular (condition estimate " << sv(0) / sv(sv.size() - 1) << ")";
        throw SingularA(msg.str());
    }
    const double residual = (out.A * out.w_star + out.b).lpNorm<Eigen::Infinity>();
    if (residual > 1e-8) {
        std::ostringstream msg;
        msg << "linear solve residual " << residual << " exceeds 1e-8";
        throw SingularA(msg.str());
    }
    return out;
}

Vector value_function(const InducedChain& chain, double gamma) {
    require_discount(gamma);
    const auto n = idx(chain.num_states());
    const Matrix system = Matrix::Identity(n, n) - gamma * chain.P_pi.rows();
    return system.partialPivLu().solve(chain.r_pi);
}

Matrix bellman_optimality_apply(const MdpSpec& mdp, const Matrix& q) {
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    if (static_cast<std::size_t>(q.rows()) != n || static_cast<std::size_t>(q.cols()) != na) {
        throw InvalidArgument("action-value table has the wrong shape");
    }
    const Vector best = max_over_actions(q);
    const Vector lookahead = mdp.transition() * best;  // row s*A + a
    Matrix out(idx(n), idx(na));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            out(idx(s), idx(a)) = mdp.reward(s, a) + mdp.discount() * lookahead(idx(s * na + a));
        }
    }
    return out;
}

OptimalQ optimal_q(const MdpSpec& mdp, double tol) {
    const double gamma = mdp.discount();
    OptimalQ out;
    out.q = Matrix::Zero(mdp.reward().rows(), mdp.reward().cols());
    if (gamma == 0.0) {
        out.q = mdp.reward();
        out.iterations = 1;
        return out;
    }
    const double stop = tol * (1.0 - gamma) / gamma;
    while (true) {
        Matrix next = bellman_optimality_apply(mdp, out.q);
        ++out.iterations;
        const double gap = (next - out.q).lpNorm<Eigen::Infinity>();
        out.q = std::move(next);
        if (gap <= stop) {
            return out;
        }
        if (out.iterations > 100'000'000) {
            throw NoConvergence("value iteration exceeded its iteration budget");
        }
    }
}

Matrix weighted_bellman_apply(const MdpSpec& mdp, const Policy& policy, const StochasticVec& d_pi,
                              const Matrix& q) {
    const Matrix tq = bellman_optimality_apply(mdp, q);
    Matrix out = q;
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        for (Eigen::Index a = 0; a < q.cols(); ++a) {
            const double weight = d_pi[static_cast<std::size_t>(s)] *
                                  policy(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
            out(s, a) = weight * (tq(s, a) - q(s, a)) + q(s, a);
        }
    }
    return out;
}

StochasticMatrix state_action_chain(const MdpSpec& mdp, const Policy& policy) {
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    Matrix k = Matrix::Zero(idx(n * na), idx(n * na));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t s1 = 0; s1 < n; ++s1) {
                for (std::size_t a1 = 0; a1 < na; ++a1) {
                    k(idx(s * na + a), idx(s1 * na + a1)) = mdp.p(s, a, s1) * policy(s1, a1);
                }
            }
        }
    }
    return markov::validate_stochastic(std::move(k), 1e-9);
}

StochasticVec stationary_on(const StochasticMatrix& kernel, const std::vector<std::size_t>& live) {
    const auto sub = markov::restrict_to(kernel, live);
    const auto mu = markov::stationary_distribution(sub);
    Vector full = Vector::Zero(idx(kernel.size()));
    for (std::size_t i = 0; i < live.size(); ++i) {
        full(idx(live[i])) = mu[i];
    }
    return StochasticVec::from(std::move(full), 1e-9);
}

AugmentedChain augmented_td_kernel(const InducedChain& chain) {
    const std::size_t n = chain.num_states();
    Matrix k = Matrix::Zero(idx(n * n), idx(n * n));
    std::vector<std::size_t> live;
    for (std::size_t s0 = 0; s0 < n; ++s0) {
        for (std::size_t s0n = 0; s0n < n; ++s0n) {
            for (std::size_t s1n = 0; s1n < n; ++s1n) {
                k(idx(s0 * n + s0n), idx(s0n * n + s1n)) = chain.P_pi(s0n, s1n);
            }
            if (chain.P_pi(s0, s0n) > markov::kSupportThreshold) {
                live.push_back(s0 * n + s0n);
            }
        }
    }
    auto kernel = markov::validate_stochastic(std::move(k), 1e-9);
    auto stationary = stationary_on(kernel, live);
    return AugmentedChain{std::move(kernel), std::move(live), std::move(stationary)};
}

AugmentedChain q_triple_chain_unchecked(const MdpSpec& mdp, const Policy& policy) {
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    if (policy.num_states() != n || policy.num_actions() != na) {
        throw InvalidArgument("policy dimensions do not match the MDP");
    }
    const std::size_t size = n * na * n;
    Matrix k = Matrix::Zero(idx(size), idx(size));
    std::vector<std::size_t> live;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t s_next = 0; s_next < n; ++s_next) {
                const std::size_t from = (s * na + a) * n + s_next;
                for (std::size_t a1 = 0; a1 < na; ++a1) {
                    for (std::size_t s1n = 0; s1n < n; ++s1n) {
                        k(idx(from), idx((s_next * na + a1) * n + s1n)) =
                            policy(s_next, a1) * mdp.p(s_next, a1, s1n);
                    }
                }
                if (policy(s, a) > markov::kSupportThreshold &&
                    mdp.p(s, a, s_next) > markov::kSupportThreshold) {
                    live.push_back(from);
                }
            }
        }
    }
    auto kernel = markov::validate_stochastic(std::move(k), 1e-9);
    auto stationary = stationary_on(kernel, live);
    return AugmentedChain{std::move(kernel), std::move(live), std::move(stationary)};
}

AugmentedChain augmented_q_kernel(const MdpSpec& mdp, const Policy& policy) {
    if (!markov::is_ergodic(state_action_chain(mdp, policy))) {
        throw NotErgodic("the state-action chain induced by the behavior policy is not ergodic");
    }
    return q_triple_chain_unchecked(mdp, policy);
}

StochasticVec pair_initial_law(const InducedChain& chain, const StochasticVec& init) {
    const std::size_t n = chain.num_states();
    Vector law(idx(n * n));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t s_next = 0; s_next < n; ++s_next) {
            law(idx(s * n + s_next)) = init[s] * chain.P_pi(s, s_next);
        }
    }
    return StochasticVec::from(std::move(law), 1e-9);
}

StochasticVec triple_initial_law(const MdpSpec& mdp, const Policy& policy) {
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    Vector law(idx(n * na * n));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t s_next = 0; s_next < n; ++s_next) {
                law(idx((s * na + a) * n + s_next)) = mdp.init_dist()[s] * policy(s, a) * mdp.p(s, a, s_next);
            }
        }
    }
    return StochasticVec::from(std::move(law), 1e-9);
}

}  // namespace almostsure::mdp
