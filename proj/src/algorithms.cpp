#include "almostsure/algorithms.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "almostsure/errors.hpp"

namespace almostsure::algorithms {

namespace {

Eigen::Index idx(std::size_t i) {
    return static_cast<Eigen::Index>(i);
}

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError("schedule " + what + " '" + text + "' is not a number");
    }
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string current;
    std::istringstream in(text);
    while (std::getline(in, current, sep)) {
        parts.push_back(current);
    }
    return parts;
}

// The linear TD map at a single (s, s').
Vector td_F(const Vector& w, Pair y, const LinearTdSpec& spec) {
    const auto& x = spec.features();
    const double delta = spec.chain().r_pi(idx(y.s)) + spec.gamma() * x.row(y.s_next).dot(w) -
                         x.row(y.s).dot(w);
    return delta * x.row(y.s).transpose() + w;
}

void check_checkpoints(const std::vector<std::size_t>& checkpoints, std::size_t horizon) {
    for (std::size_t c : checkpoints) {
        if (c > horizon) {
            throw HorizonExceeded("checkpoint " + std::to_string(c) + " exceeds path horizon " +
                                  std::to_string(horizon));
        }
    }
}

template <typename Step>
IterateTrace run_generic(Vector w, const trajectory::SamplePath& path,
                         const std::vector<std::size_t>& checkpoints, Step step,
                         const std::function<double(const Vector&)>& error) {
    check_checkpoints(checkpoints, path.horizon());
    std::vector<std::size_t> order = checkpoints;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    IterateTrace trace;
    std::size_t t = 0;
    for (std::size_t target : order) {
        for (; t < target; ++t) {
            step(w, t, path.states[t + 1]);
        }
        trace.steps.push_back(target);
        trace.iterates.push_back(w);
        trace.errors.push_back(error(w));
    }
    return trace;
}

}  // namespace

StepSchedule StepSchedule::inv_poly(double nu, std::size_t offset) {
    if (!(nu > 0.0) || !std::isfinite(nu)) {
        throw InvalidArgument("inv_poly exponent must be positive");
    }
    if (offset < 1) {
        throw InvalidArgument("inv_poly offset must be at least 1");
    }
    StepSchedule s;
    s.family_ = Family::InvPoly;
    s.nu_ = nu;
    s.offset_ = offset;
    return s;
}

StepSchedule StepSchedule::constant(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw InvalidArgument("constant step size must be positive");
    }
    StepSchedule s;
    s.family_ = Family::Constant;
    s.constant_ = c;
    return s;
}

StepSchedule StepSchedule::explicit_list(std::vector<double> values) {
    if (values.empty()) {
        throw InvalidArgument("explicit schedule must be nonempty");
    }
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidArgument("explicit step sizes must be positive");
        }
    }
    StepSchedule s;
    s.family_ = Family::Explicit;
    s.values_ = std::move(values);
    return s;
}

StepSchedule StepSchedule::parse(const std::string& text) {
    const auto parts = split(text, ':');
    if (!parts.empty() && parts[0] == "inv_poly") {
        if (parts.size() != 3) {
            throw ParseError("expected inv_poly:NU:OFFSET, got '" + text + "'");
        }
        const double offset = parse_number(parts[2], "offset");
        if (offset < 1 || offset != std::floor(offset)) {
            throw ParseError("inv_poly offset must be a positive integer, got '" + parts[2] + "'");
        }
        return inv_poly(parse_number(parts[1], "exponent"), static_cast<std::size_t>(offset));
    }
    if (!parts.empty() && parts[0] == "constant") {
        if (parts.size() != 2) {
            throw ParseError("expected constant:C, got '" + text + "'");
        }
        return constant(parse_number(parts[1], "value"));
    }
    throw ParseError("unknown schedule '" + text + "' (expected inv_poly:NU:OFFSET or constant:C)");
}

std::string StepSchedule::to_string() const {
    auto shortest = [](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    switch (family_) {
        case Family::InvPoly:
            return "inv_poly:" + shortest(nu_) + ":" + std::to_string(offset_);
        case Family::Constant:
            return "constant:" + shortest(constant_);
        case Family::Explicit:
            return "explicit:" + std::to_string(values_.size());
    }
    return "unknown";
}

double StepSchedule::operator()(std::size_t t) const {
    switch (family_) {
        case Family::InvPoly:
            return std::pow(static_cast<double>(t + offset_), -nu_);
        case Family::Constant:
            return constant_;
        case Family::Explicit:
            if (t >= values_.size()) {
                throw InvalidArgument("explicit schedule has no value at step " + std::to_string(t));
            }
            return values_[t];
    }
    return 0.0;
}

std::string to_string(RobbinsMonro c) {
    switch (c) {
        case RobbinsMonro::Satisfies:
            return "Satisfies";
        case RobbinsMonro::FailsDivergence:
            return "FailsDivergence";
        case RobbinsMonro::FailsSquareSummable:
            return "FailsSquareSummable";
        case RobbinsMonro::Unknown:
            return "Unknown";
    }
    return "Unknown";
}

RobbinsMonro robbins_monro_class(const StepSchedule& schedule) {
    switch (schedule.family()) {
        case StepSchedule::Family::InvPoly:
            // sum t^-nu diverges iff nu <= 1; sum t^-2nu converges iff nu > 1/2.
            if (schedule.nu() > 1.0) {
                return RobbinsMonro::FailsDivergence;
            }
            if (schedule.nu() <= 0.5) {
                return RobbinsMonro::FailsSquareSummable;
            }
            return RobbinsMonro::Satisfies;
        case StepSchedule::Family::Constant:
            return RobbinsMonro::FailsSquareSummable;
        case StepSchedule::Family::Explicit:
            return RobbinsMonro::Unknown;
    }
    return RobbinsMonro::Unknown;
}

Pair decode_pair(std::size_t y, std::size_t num_states) {
    return Pair{y / num_states, y % num_states};
}

Triple decode_triple(std::size_t y, std::size_t num_actions, std::size_t num_states) {
    const std::size_t sa = y / num_states;
    return Triple{sa / num_actions, sa % num_actions, y % num_states};
}

LinearTdSpec LinearTdSpec::create(mdp::InducedChain chain, mdp::FeatureMap features, double gamma,
                                  StepSchedule schedule, Vector w0, mdp::TdOptions options) {
    if (features.num_states() != chain.num_states()) {
        throw InvalidArgument("feature rows must match the number of states");
    }
    if (static_cast<std::size_t>(w0.size()) != features.feature_dim()) {
        throw InvalidArgument("initial weights must have feature_dim entries");
    }
    auto td = mdp::td_matrices(chain, features, gamma, options);
    return LinearTdSpec(std::move(chain), std::move(features), gamma, std::move(schedule), std::move(w0),
                        std::move(td));
}

QLearningSpec QLearningSpec::create(mdp::MdpSpec mdp, mdp::Policy behavior, StepSchedule schedule,
                                    Matrix q0, bool require_ergodic) {
    if (static_cast<std::size_t>(q0.rows()) != mdp.num_states() ||
        static_cast<std::size_t>(q0.cols()) != mdp.num_actions()) {
        throw InvalidArgument("initial table must be S x A");
    }
    if (require_ergodic && !markov::is_ergodic(mdp::state_action_chain(mdp, behavior))) {
        throw NotErgodic("the state-action chain induced by the behavior policy is not ergodic");
    }
    const auto chain = mdp::induce_chain(mdp, behavior);
    auto q_star = mdp::optimal_q(mdp).q;
    return QLearningSpec(std::move(mdp), std::move(behavior), std::move(schedule), std::move(q0),
                         std::move(q_star), chain.d_pi);
}

Vector flatten(const Matrix& q) {
    Vector v(q.size());
    const auto na = q.cols();
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        for (Eigen::Index a = 0; a < na; ++a) {
            v(s * na + a) = q(s, a);
        }
    }
    return v;
}

Matrix unflatten(const Vector& v, std::size_t num_states, std::size_t num_actions) {
    if (static_cast<std::size_t>(v.size()) != num_states * num_actions) {
        throw InvalidArgument("flattened table has the wrong length");
    }
    Matrix q(idx(num_states), idx(num_actions));
    for (std::size_t s = 0; s < num_states; ++s) {
        for (std::size_t a = 0; a < num_actions; ++a) {
            q(idx(s), idx(a)) = v(idx(s * num_actions + a));
        }
    }
    return q;
}

Vector linear_td_step(const Vector& w, Pair y, double alpha, const LinearTdSpec& spec) {
    return w + alpha * (td_F(w, y, spec) - w);
}

Matrix q_learning_step(const Matrix& q, Triple y, double alpha, const mdp::MdpSpec& mdp) {
    Matrix out = q;
    const auto s = idx(y.s);
    const auto a = idx(y.a);
    const double target = mdp.reward(y.s, y.a) + mdp.discount() * q.row(idx(y.s_next)).maxCoeff();
    out(s, a) = q(s, a) + alpha * (target - q(s, a));
    return out;
}

Vector tabular_td_step(const Vector& v, Pair y, double alpha, const mdp::InducedChain& chain,
                       double gamma) {
    Vector out = v;
    const auto s = idx(y.s);
    out(s) = v(s) + alpha * (chain.r_pi(s) + gamma * v(idx(y.s_next)) - v(s));
    return out;
}

UpdateMaps eval_F_f_td(const LinearTdSpec& spec) {
    const std::size_t n = spec.num_states();
    UpdateMaps maps;
    maps.num_samples = n * n;
    maps.F = [spec, n](const Vector& w, std::size_t y) { return td_F(w, decode_pair(y, n), spec); };
    maps.f = [spec](const Vector& w) -> Vector { return spec.td().A * w + spec.td().b + w; };
    return maps;
}

UpdateMaps eval_F_f_q(const QLearningSpec& spec) {
    const std::size_t n = spec.mdp().num_states();
    const std::size_t na = spec.mdp().num_actions();
    UpdateMaps maps;
    maps.num_samples = n * na * n;
    maps.F = [spec, n, na](const Vector& q, std::size_t y) {
        const Triple t = decode_triple(y, na, n);
        const auto& mdp = spec.mdp();
        double best = q(idx(t.s_next * na));
        for (std::size_t b = 1; b < na; ++b) {
            best = std::max(best, q(idx(t.s_next * na + b)));
        }
        Vector out = q;
        const auto at = idx(t.s * na + t.a);
        out(at) = (mdp.reward(t.s, t.a) + mdp.discount() * best - q(at)) + q(at);
        return out;
    };
    maps.f = [spec, n, na](const Vector& q) {
        const Matrix table = unflatten(q, n, na);
        return flatten(mdp::weighted_bellman_apply(spec.mdp(), spec.behavior(), spec.d_pi(), table));
    };
    return maps;
}

IterateTrace run_iterates(const LinearTdSpec& spec, const trajectory::SamplePath& path,
                          const std::vector<std::size_t>& checkpoints) {
    const std::size_t n = spec.num_states();
    const Vector& w_star = spec.td().w_star;
    return run_generic(
        spec.w0(), path, checkpoints,
        [&](Vector& w, std::size_t t, std::size_t y) {
            w = linear_td_step(w, decode_pair(y, n), spec.schedule()(t), spec);
        },
        [&](const Vector& w) { return (w - w_star).norm(); });
}

IterateTrace run_iterates(const QLearningSpec& spec, const trajectory::SamplePath& path,
                          const std::vector<std::size_t>& checkpoints) {
    const std::size_t n = spec.mdp().num_states();
    const std::size_t na = spec.mdp().num_actions();
    const auto& mdp = spec.mdp();
    const Vector q_star = flatten(spec.q_star());
    return run_generic(
        flatten(spec.q0()), path, checkpoints,
        [&](Vector& q, std::size_t t, std::size_t y) {
            // In-place form of q_learning_step on the flattened table.
            const Triple tr = decode_triple(y, na, n);
            double best = q(idx(tr.s_next * na));
            for (std::size_t b = 1; b < na; ++b) {
                best = std::max(best, q(idx(tr.s_next * na + b)));
            }
            const auto at = idx(tr.s * na + tr.a);
            q(at) += spec.schedule()(t) * (mdp.reward(tr.s, tr.a) + mdp.discount() * best - q(at));
        },
        [&](const Vector& q) { return (q - q_star).lpNorm<Eigen::Infinity>(); });
}

std::vector<Vector> run_dense(const LinearTdSpec& spec, const trajectory::SamplePath& path,
                              std::size_t last) {
    if (last > path.horizon()) {
        throw HorizonExceeded("dense run to " + std::to_string(last) + " exceeds path horizon " +
                              std::to_string(path.horizon()));
    }
    const std::size_t n = spec.num_states();
    std::vector<Vector> out;
    out.reserve(last + 1);
    out.push_back(spec.w0());
    for (std::size_t t = 0; t < last; ++t) {
        out.push_back(linear_td_step(out.back(), decode_pair(path.states[t + 1], n), spec.schedule()(t), spec));
    }
    return out;
}

std::vector<Vector> run_dense(const QLearningSpec& spec, const trajectory::SamplePath& path,
                              std::size_t last) {
    if (last > path.horizon()) {
        throw HorizonExceeded("dense run to " + std::to_string(last) + " exceeds path horizon " +
                              std::to_string(path.horizon()));
    }
    const std::size_t n = spec.mdp().num_states();
    const std::size_t na = spec.mdp().num_actions();
    std::vector<Vector> out;
    out.reserve(last + 1);
    out.push_back(flatten(spec.q0()));
    for (std::size_t t = 0; t < last; ++t) {
        const Matrix q = unflatten(out.back(), n, na);
        const Triple y = decode_triple(path.states[t + 1], na, n);
        out.push_back(flatten(q_learning_step(q, y, spec.schedule()(t), spec.mdp())));
    }
    return out;
}

}  // namespace almostsure::algorithms
