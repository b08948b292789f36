#include "almostsure/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "almostsure/errors.hpp"
#include "almostsure/trajectory.hpp"

namespace almostsure::harness {

namespace {

using algorithms::LinearTdSpec;
using algorithms::QLearningSpec;
using algorithms::RobbinsMonro;
using algorithms::StepSchedule;

constexpr double kSupport = 1e-15;

Eigen::Index idx(std::size_t i) {
    return static_cast<Eigen::Index>(i);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t k) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back(r.at(k));
    }
    return out;
}

void require_markov_schedule(const StepSchedule& schedule) {
    if (schedule.family() == StepSchedule::Family::InvPoly) {
        const double nu = schedule.nu();
        if (!(nu > 2.0 / 3.0 && nu < 1.0)) {
            std::ostringstream msg;
            msg << "Markovian sampling requires an inv_poly exponent nu in (2/3, 1); got nu = " << nu;
            throw NuOutOfRange(msg.str());
        }
        return;
    }
    const RobbinsMonro cls = algorithms::robbins_monro_class(schedule);
    if (cls == RobbinsMonro::FailsDivergence || cls == RobbinsMonro::FailsSquareSummable) {
        throw ScheduleNotRobbinsMonro("schedule " + schedule.to_string() + " " + algorithms::to_string(cls));
    }
}

void require_iid_schedule(const StepSchedule& schedule) {
    const RobbinsMonro cls = algorithms::robbins_monro_class(schedule);
    if (cls != RobbinsMonro::Satisfies) {
        throw ScheduleNotRobbinsMonro("i.i.d. runs need a Robbins-Monro schedule; " + schedule.to_string() +
                                      " " + algorithms::to_string(cls));
    }
}

std::vector<std::size_t> resolve_checkpoints(const ExperimentConfig& config) {
    std::vector<std::size_t> cps =
        config.checkpoints.empty() ? geometric_checkpoints(config.horizon) : config.checkpoints;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (cps[i] > config.horizon) {
            throw InvalidArgument("checkpoint " + std::to_string(cps[i]) + " lies beyond the horizon " +
                                  std::to_string(config.horizon));
        }
        if (i > 0 && cps[i] <= cps[i - 1]) {
            throw InvalidArgument("checkpoints must be strictly increasing");
        }
    }
    if (cps.empty() || cps.front() != 0) {
        cps.insert(cps.begin(), 0);
    }
    return cps;
}

void validate_common(const ExperimentConfig& config) {
    if (config.seeds.size() < 2) {
        throw InvalidArgument("an experiment needs at least 2 seeds");
    }
    if (!(config.thresholds.final_error_max >= 0.0) || !(config.thresholds.decay_factor_min > 0.0)) {
        throw InvalidArgument("thresholds must be nonnegative with a positive decay factor");
    }
}

template <typename Spec>
const Spec& problem_as(const ExperimentConfig& config, const char* what) {
    const Spec* spec = std::get_if<Spec>(&config.problem);
    if (spec == nullptr) {
        throw InvalidArgument(std::string("experiment ") + to_string(config.experiment) + " needs a " + what +
                              " problem");
    }
    return *spec;
}

template <typename Fn>
std::vector<SeedResult> for_each_seed(const std::vector<std::uint64_t>& seeds, std::size_t jobs, Fn fn) {
    std::vector<SeedResult> out(seeds.size());
    if (jobs == 0) {
        jobs = std::max(1U, std::thread::hardware_concurrency());
    }
    jobs = std::min(jobs, seeds.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            out[i] = fn(seeds[i]);
        }
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) {
        workers.emplace_back([&, j] {
            try {
                for (std::size_t i = next++; i < seeds.size(); i = next++) {
                    out[i] = fn(seeds[i]);
                }
            } catch (...) {
                errors[j] = std::current_exception();
                next = seeds.size();
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

ConvergenceReport aggregate(const ExperimentConfig& config, std::vector<std::size_t> checkpoints,
                            std::vector<SeedResult> seeds, Vector oracle, std::string schedule) {
    ConvergenceReport report;
    report.experiment_id = config.experiment_id;
    report.experiment = config.experiment;
    report.checkpoints = std::move(checkpoints);
    report.seeds = std::move(seeds);
    report.thresholds = config.thresholds;
    report.oracle = std::move(oracle);
    report.schedule = std::move(schedule);

    std::vector<std::vector<double>> errors;
    errors.reserve(report.seeds.size());
    for (const auto& s : report.seeds) {
        errors.push_back(s.errors);
    }
    for (std::size_t k = 0; k < report.checkpoints.size(); ++k) {
        const auto col = column(errors, k);
        report.median_curve.push_back(quantile(col, 0.5));
        report.q10_curve.push_back(quantile(col, 0.1));
        report.q90_curve.push_back(quantile(col, 0.9));
    }
    report.verdict = convergence_verdict(report.checkpoints, errors, config.thresholds);
    return report;
}

markov::StochasticVec td_initial(const ExperimentConfig& config, std::size_t n) {
    if (config.initial_states) {
        if (config.initial_states->size() != n) {
            throw InvalidArgument("initial state law has the wrong dimension");
        }
        return *config.initial_states;
    }
    return markov::StochasticVec::uniform(n);
}

markov::StochasticVec q_initial_triples(const ExperimentConfig& config, const QLearningSpec& spec) {
    const auto& mdp = spec.mdp();
    if (!config.initial_states) {
        return mdp::triple_initial_law(mdp, spec.behavior());
    }
    const std::size_t n = mdp.num_states();
    const std::size_t na = mdp.num_actions();
    if (config.initial_states->size() != n) {
        throw InvalidArgument("initial state law has the wrong dimension");
    }
    Vector law = Vector::Zero(idx(n * na * n));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            for (std::size_t s2 = 0; s2 < n; ++s2) {
                law(idx(algorithms::triple_index(s, a, s2, na, n))) =
                    (*config.initial_states)[s] * spec.behavior()(s, a) * mdp.p(s, a, s2);
            }
        }
    }
    return markov::StochasticVec::from(law, 1e-9);
}

std::vector<std::string> unvisited_pairs(const QLearningSpec& spec) {
    std::vector<std::string> out;
    const auto& mdp = spec.mdp();
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
            if (spec.d_pi()[s] * spec.behavior()(s, a) <= kSupport) {
                out.push_back("(" + std::to_string(s) + "," + std::to_string(a) + ")");
            }
        }
    }
    return out;
}

RunAssumptions td_run_assumptions(const LinearTdSpec& spec, std::uint64_t seed,
                                  std::vector<std::string>& diagnostics) {
    RunAssumptions out;
    const auto maps = algorithms::eval_F_f_td(spec);
    const Vector& w_star = spec.td().w_star;
    out.analytic_eta = spec.td().drift_eta;
    out.lipschitz_L =
        sa::fit_lipschitz(maps.f, static_cast<std::size_t>(w_star.size()), w_star, 200, seed).value;
    try {
        out.fitted_eta = sa::check_lyapunov_conditions(sa::LyapunovP(2.0), maps.f, w_star, 200, seed).drift_eta.value;
    } catch (const sa::DriftViolated& e) {
        out.fitted_eta = e.report().drift_eta.value;
        diagnostics.push_back(e.what());
    }
    return out;
}

RunAssumptions q_run_assumptions(const QLearningSpec& spec, std::uint64_t seed,
                                 std::vector<std::string>& diagnostics) {
    RunAssumptions out;
    const auto maps = algorithms::eval_F_f_q(spec);
    const Vector q_star = algorithms::flatten(spec.q_star());
    out.lipschitz_L = sa::fit_lipschitz(maps.f, static_cast<std::size_t>(q_star.size()), q_star, 200, seed).value;
    out.gamma_prime =
        sa::estimate_gamma_prime(spec.mdp(), spec.behavior(), spec.d_pi(), spec.q_star(), 1000, seed).value;
    if (!(out.gamma_prime < 1.0)) {
        diagnostics.push_back("empirical gamma' is not below 1");
        return out;
    }
    const auto choice = sa::choose_p_for_q(static_cast<std::size_t>(q_star.size()), out.gamma_prime);
    out.lyapunov_p = choice.p;
    out.analytic_eta = choice.eta;
    try {
        out.fitted_eta =
            sa::check_lyapunov_conditions(sa::LyapunovP(choice.p), maps.f, q_star, 200, seed).drift_eta.value;
    } catch (const sa::DriftViolated& e) {
        out.fitted_eta = e.report().drift_eta.value;
        diagnostics.push_back(e.what());
    }
    return out;
}

ConvergenceReport run_td(const ExperimentConfig& config, bool markovian) {
    validate_common(config);
    const auto& spec = problem_as<LinearTdSpec>(config, "linear TD");
    if (markovian) {
        require_markov_schedule(spec.schedule());
    } else {
        require_iid_schedule(spec.schedule());
    }
    const auto checkpoints = resolve_checkpoints(config);
    const auto aug = mdp::augmented_td_kernel(spec.chain());
    const auto init = mdp::pair_initial_law(spec.chain(), td_initial(config, spec.num_states()));
    const Vector& w_star = spec.td().w_star;

    auto seeds = for_each_seed(config.seeds, config.jobs, [&](std::uint64_t seed) {
        const auto path = markovian
                              ? trajectory::sample_path({aug.kernel, init, config.horizon, seed})
                              : trajectory::sample_iid_path(aug.stationary, config.horizon, seed);
        const auto trace = algorithms::run_iterates(spec, path, checkpoints);
        SeedResult r;
        r.seed = seed;
        r.errors = trace.errors;
        for (const auto& w : trace.iterates) {
            r.phi.push_back(0.5 * (w - w_star).squaredNorm());
        }
        r.final_iterate = trace.iterates.back();
        return r;
    });

    auto report = aggregate(config, checkpoints, std::move(seeds), w_star, spec.schedule().to_string());
    report.assumptions = td_run_assumptions(spec, config.seeds.front(), report.diagnostics);
    return report;
}

ConvergenceReport run_q(const ExperimentConfig& config, bool markovian) {
    validate_common(config);
    const auto& spec = problem_as<QLearningSpec>(config, "Q-learning");
    if (markovian) {
        require_markov_schedule(spec.schedule());
    } else {
        require_iid_schedule(spec.schedule());
    }
    const auto checkpoints = resolve_checkpoints(config);
    const auto missing = unvisited_pairs(spec);
    const auto aug = missing.empty() ? mdp::augmented_q_kernel(spec.mdp(), spec.behavior())
                                     : mdp::q_triple_chain_unchecked(spec.mdp(), spec.behavior());
    const auto init = q_initial_triples(config, spec);
    const Vector q_star = algorithms::flatten(spec.q_star());

    RunAssumptions assumptions;
    std::vector<std::string> diagnostics;
    if (missing.empty()) {
        assumptions = q_run_assumptions(spec, config.seeds.front(), diagnostics);
    }
    const sa::LyapunovP lp(assumptions.lyapunov_p);

    auto seeds = for_each_seed(config.seeds, config.jobs, [&](std::uint64_t seed) {
        const auto path = markovian
                              ? trajectory::sample_path({aug.kernel, init, config.horizon, seed})
                              : trajectory::sample_iid_path(aug.stationary, config.horizon, seed);
        const auto trace = algorithms::run_iterates(spec, path, checkpoints);
        SeedResult r;
        r.seed = seed;
        r.errors = trace.errors;
        for (const auto& q : trace.iterates) {
            r.phi.push_back(sa::phi_value(lp, q - q_star));
        }
        r.final_iterate = trace.iterates.back();
        return r;
    });

    auto report = aggregate(config, checkpoints, std::move(seeds), q_star, spec.schedule().to_string());
    report.assumptions = assumptions;
    report.diagnostics = std::move(diagnostics);
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) {
            names += (names.empty() ? "" : " ") + m;
        }
        report.diagnostics.push_back("state-action pairs never visited by the behavior policy: " + names);
        report.verdict.verdict = Verdict::Inconclusive;
    }
    return report;
}

}  // namespace

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::TdMarkov:
            return "td-markov";
        case Experiment::TdIid:
            return "td-iid";
        case Experiment::QMarkov:
            return "q-markov";
        case Experiment::QIid:
            return "q-iid";
    }
    return "unknown";
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Converged:
            return "Converged";
        case Verdict::Inconclusive:
            return "Inconclusive";
        case Verdict::Diverged:
            return "Diverged";
    }
    return "unknown";
}

Experiment parse_experiment(const std::string& text) {
    for (Experiment e : {Experiment::TdMarkov, Experiment::TdIid, Experiment::QMarkov, Experiment::QIid}) {
        if (to_string(e) == text) {
            return e;
        }
    }
    throw ParseError("unknown experiment '" + text + "' (expected td-markov, td-iid, q-markov or q-iid)");
}

SamplingMode sampling_mode(Experiment e) {
    return (e == Experiment::TdMarkov || e == Experiment::QMarkov) ? SamplingMode::Markovian
                                                                    : SamplingMode::IidStationary;
}

bool is_q_learning(Experiment e) {
    return e == Experiment::QMarkov || e == Experiment::QIid;
}

int exit_status(Verdict v) {
    switch (v) {
        case Verdict::Converged:
            return 0;
        case Verdict::Inconclusive:
            return 2;
        case Verdict::Diverged:
            return 3;
    }
    return 1;
}

std::vector<std::size_t> geometric_checkpoints(std::size_t horizon, std::size_t points) {
    std::vector<std::size_t> out{0};
    if (horizon == 0) {
        return out;
    }
    const auto h = static_cast<double>(horizon);
    for (std::size_t k = 0; k <= points; ++k) {
        const double t = std::round(std::pow(h, static_cast<double>(k) / static_cast<double>(points)));
        out.push_back(std::min(horizon, static_cast<std::size_t>(t)));
    }
    out.push_back(horizon / 10);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

VerdictDetail convergence_verdict(const std::vector<std::size_t>& steps,
                                  const std::vector<std::vector<double>>& errors_per_seed,
                                  const Thresholds& thresholds) {
    VerdictDetail d;
    if (steps.empty() || errors_per_seed.empty()) {
        return d;
    }
    for (const auto& e : errors_per_seed) {
        if (e.size() != steps.size()) {
            throw InvalidArgument("error curve length does not match the checkpoint grid");
        }
    }
    const std::size_t last = steps.size() - 1;
    const std::size_t horizon = steps.back();
    std::size_t tenth = 0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (steps[k] <= horizon / 10) {
            tenth = k;
        }
    }
    d.tenth_step = steps[tenth];
    d.median_initial = quantile(column(errors_per_seed, 0), 0.5);
    d.median_tenth = quantile(column(errors_per_seed, tenth), 0.5);
    d.median_final = quantile(column(errors_per_seed, last), 0.5);
    d.final_error_max =
        thresholds.relative_to_initial ? thresholds.final_error_max * d.median_initial : thresholds.final_error_max;
    for (const auto& e : errors_per_seed) {
        if (e.back() <= d.final_error_max) {
            ++d.seeds_within;
        }
    }
    if (steps.size() < 2) {
        return d;
    }
    if (d.median_final > 10.0 * d.median_initial) {
        d.verdict = Verdict::Diverged;
    } else if (d.median_final <= d.final_error_max &&
               d.median_final <= d.median_tenth / thresholds.decay_factor_min) {
        d.verdict = Verdict::Converged;
    }
    return d;
}

bool ConvergenceReport::monotone_after_tenth(std::size_t allowed_violations) const {
    std::size_t violations = 0;
    for (std::size_t k = 1; k < checkpoints.size(); ++k) {
        if (checkpoints[k - 1] >= verdict.tenth_step && median_curve[k] > median_curve[k - 1]) {
            ++violations;
        }
    }
    return violations <= allowed_violations;
}

ConvergenceReport run_td_markov(const ExperimentConfig& config) {
    return run_td(config, true);
}

ConvergenceReport run_td_iid(const ExperimentConfig& config) {
    return run_td(config, false);
}

ConvergenceReport run_q_markov(const ExperimentConfig& config) {
    return run_q(config, true);
}

ConvergenceReport run_q_iid(const ExperimentConfig& config) {
    return run_q(config, false);
}

ConvergenceReport run_experiment(const ExperimentConfig& config) {
    switch (config.experiment) {
        case Experiment::TdMarkov:
            return run_td_markov(config);
        case Experiment::TdIid:
            return run_td_iid(config);
        case Experiment::QMarkov:
            return run_q_markov(config);
        case Experiment::QIid:
            return run_q_iid(config);
    }
    throw InvalidArgument("unknown experiment");
}

void write_trace_csv(std::ostream& out, const ConvergenceReport& report) {
    out << "experiment_id,seed,step,error,phi\n" << std::setprecision(17);
    for (const auto& s : report.seeds) {
        for (std::size_t k = 0; k < report.checkpoints.size(); ++k) {
            out << report.experiment_id << ',' << s.seed << ',' << report.checkpoints[k] << ',' << s.errors[k]
                << ',' << s.phi[k] << '\n';
        }
    }
}

void write_report_txt(std::ostream& out, const ConvergenceReport& report) {
    const auto& v = report.verdict;
    out << std::setprecision(10);
    out << "experiment_id = " << report.experiment_id << '\n';
    out << "experiment = " << to_string(report.experiment) << '\n';
    out << "schedule = " << report.schedule << '\n';
    out << "seeds = " << report.seeds.size() << '\n';
    out << "horizon = " << (report.checkpoints.empty() ? 0 : report.checkpoints.back()) << '\n';
    out << "checkpoints = " << report.checkpoints.size() << '\n';
    out << "verdict = " << to_string(v.verdict) << '\n';
    out << "final_error_max = " << v.final_error_max << '\n';
    out << "final_error_relative = " << (report.thresholds.relative_to_initial ? "true" : "false") << '\n';
    out << "decay_factor_min = " << report.thresholds.decay_factor_min << '\n';
    out << "median_initial_error = " << v.median_initial << '\n';
    out << "median_error_at_tenth = " << v.median_tenth << '\n';
    out << "tenth_step = " << v.tenth_step << '\n';
    out << "median_final_error = " << v.median_final << '\n';
    out << "seeds_within_threshold = " << v.seeds_within << '\n';
    out << "lipschitz_L = " << report.assumptions.lipschitz_L << '\n';
    out << "analytic_eta = " << report.assumptions.analytic_eta << '\n';
    out << "lyapunov_p = " << report.assumptions.lyapunov_p << '\n';
    out << "fitted_eta = " << report.assumptions.fitted_eta << '\n';
    if (is_q_learning(report.experiment)) {
        out << "gamma_prime = " << report.assumptions.gamma_prime << '\n';
    }
    out << "oracle =";
    for (Eigen::Index i = 0; i < report.oracle.size(); ++i) {
        out << ' ' << report.oracle(i);
    }
    out << '\n';
    out << "median_curve =";
    for (double m : report.median_curve) {
        out << ' ' << m;
    }
    out << '\n';
    for (const auto& d : report.diagnostics) {
        out << "diagnostic = " << d << '\n';
    }
}

sa::AssumptionReport check_assumptions(const ExperimentConfig& config, const AssumptionOptions& options) {
    sa::AssumptionReport report;
    report.problem = to_string(config.experiment);
    const bool markovian = sampling_mode(config.experiment) == SamplingMode::Markovian;
    const bool q = is_q_learning(config.experiment);

    std::optional<LinearTdSpec> td;
    std::optional<QLearningSpec> ql;
    if (q) {
        ql = problem_as<QLearningSpec>(config, "Q-learning");
    } else {
        td = problem_as<LinearTdSpec>(config, "linear TD");
    }
    const StepSchedule& schedule = q ? ql->schedule() : td->schedule();
    if (markovian) {
        require_markov_schedule(schedule);
    } else {
        require_iid_schedule(schedule);
    }

    const auto maps = q ? algorithms::eval_F_f_q(*ql) : algorithms::eval_F_f_td(*td);
    const Vector x_star = q ? algorithms::flatten(ql->q_star()) : td->td().w_star;
    const auto dim = static_cast<std::size_t>(x_star.size());

    report.lipschitz_L = sa::fit_lipschitz(maps.f, dim, x_star, options.lyapunov_samples, options.seed).value;

    double p = 2.0;
    if (q) {
        const auto missing = unvisited_pairs(*ql);
        if (!missing.empty()) {
            report.failures.push_back("state-action chain is not ergodic: " + std::to_string(missing.size()) +
                                      " pairs are never visited");
            return report;
        }
        report.gamma_prime =
            sa::estimate_gamma_prime(ql->mdp(), ql->behavior(), ql->d_pi(), ql->q_star(), 1000, options.seed)
                .value;
        if (!(report.gamma_prime < 1.0)) {
            report.failures.push_back("empirical gamma' is not below 1");
            return report;
        }
        const auto choice = sa::choose_p_for_q(dim, report.gamma_prime);
        p = choice.p;
        report.analytic_eta = choice.eta;
    } else {
        report.analytic_eta = td->td().drift_eta;
    }
    const sa::LyapunovP lp(p);
    try {
        report.lyapunov = sa::check_lyapunov_conditions(lp, maps.f, x_star, options.lyapunov_samples, options.seed);
    } catch (const sa::DriftViolated& e) {
        report.lyapunov = e.report();
        report.failures.push_back(std::string("drift: ") + e.what());
    }
    if (!report.lyapunov.positive_definite) {
        report.failures.push_back("Lyapunov function is not positive definite on the samples");
    }

    // One seeded dense run, split along anchors.
    const auto aug = q ? mdp::augmented_q_kernel(ql->mdp(), ql->behavior()) : mdp::augmented_td_kernel(td->chain());
    const markov::StochasticMatrix kernel = markovian ? aug.kernel : sa::iid_kernel(aug.stationary);
    sa::AnchorSequence anchors =
        (markovian && schedule.family() == StepSchedule::Family::InvPoly)
            ? sa::build_anchors(schedule, options.anchors)
            : sa::unit_anchors(schedule, options.anchors);
    std::size_t segments = options.anchors;
    while (segments > 1 && anchors.times[segments] > static_cast<double>(options.max_dense_steps)) {
        --segments;
    }
    const std::size_t last = anchors.time(segments);
    const auto init = q ? q_initial_triples(config, *ql)
                        : mdp::pair_initial_law(td->chain(), td_initial(config, td->num_states()));
    const auto path = markovian ? trajectory::sample_path({aug.kernel, init, last, options.seed})
                                : trajectory::sample_iid_path(aug.stationary, last, options.seed);
    const auto trace = q ? algorithms::run_dense(*ql, path, last) : algorithms::run_dense(*td, path, last);

    const sa::KernelPowers powers(kernel);
    const auto decomp = sa::decompose_noise(trace, path, anchors, segments, maps, powers, schedule);
    report.growth = sa::fit_noise_growth(decomp);
    if (const auto violation = sa::growth_violation(report.growth)) {
        report.failures.push_back("growth: " + *violation);
    } else {
        report.growth_ok = true;
    }

    const sa::SampleMap G = [&maps](const Vector& w, std::size_t y) -> Vector { return maps.F(w, y) - w; };
    report.mds = sa::check_mds(decomp, kernel, G, schedule, options.mc_samples, options.mc_anchors, options.seed);
    if (!report.mds.passes(options.mds_analytic_tol, options.mds_z_max)) {
        std::ostringstream msg;
        msg << "martingale-difference check failed (analytic " << report.mds.analytic_violation << ", max z "
            << report.mds.mc_max_z << ")";
        report.failures.push_back(msg.str());
    }

    std::vector<double> phi;
    std::vector<double> inner;
    for (std::size_t m = 0; m <= decomp.segments(); ++m) {
        phi.push_back(sa::phi_value(lp, decomp.skeleton[m] - x_star));
        if (m < decomp.segments()) {
            inner.push_back(sa::phi_gradient(lp, decomp.skeleton[m] - x_star).dot(decomp.e1[m]));
        }
    }
    try {
        report.recursion = sa::fundamental_recursion_check(phi, inner, decomp.betas);
        report.recursion_ok = true;
    } catch (const RecursionInfeasible& e) {
        report.failures.push_back(std::string("recursion: ") + e.what());
    }
    return report;
}

markov::StochasticMatrix random_ergodic_matrix(std::size_t n, std::uint64_t seed, double sparsity) {
    if (n == 0) {
        throw InvalidArgument("matrix size must be positive");
    }
    auto rng = trajectory::rng_stream(seed, 11);
    Matrix m(idx(n), idx(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const bool keep = i == j || j == (i + 1) % n || rng.uniform() >= sparsity;
            m(idx(i), idx(j)) = keep ? 0.05 + rng.uniform() : 0.0;
        }
        m.row(idx(i)) /= m.row(idx(i)).sum();
    }
    return markov::validate_stochastic(std::move(m), 1e-9);
}

mdp::MdpSpec random_mdp(std::size_t num_states, std::size_t num_actions, double gamma, std::uint64_t seed) {
    if (num_states == 0 || num_actions == 0) {
        throw InvalidArgument("MDP needs at least one state and one action");
    }
    auto rng = trajectory::rng_stream(seed, 12);
    Matrix reward(idx(num_states), idx(num_actions));
    Matrix transition(idx(num_states * num_actions), idx(num_states));
    for (std::size_t s = 0; s < num_states; ++s) {
        for (std::size_t a = 0; a < num_actions; ++a) {
            reward(idx(s), idx(a)) = rng.uniform();
            const auto row = idx(s * num_actions + a);
            for (std::size_t s2 = 0; s2 < num_states; ++s2) {
                transition(row, idx(s2)) = 0.05 + rng.uniform();
            }
            transition.row(row) /= transition.row(row).sum();
        }
    }
    return mdp::MdpSpec::create(std::move(reward), std::move(transition), gamma,
                                Vector::Constant(idx(num_states), 1.0 / static_cast<double>(num_states)));
}

mdp::FeatureMap random_features(std::size_t num_states, std::size_t dim, std::uint64_t seed, double scale) {
    if (dim > num_states) {
        throw RankDeficient("feature dimension exceeds the number of states");
    }
    auto rng = trajectory::rng_stream(seed, 13);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Matrix x(idx(num_states), idx(dim));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                x(i, j) = scale * rng.normal();
            }
        }
        try {
            return mdp::FeatureMap::create(std::move(x));
        } catch (const RankDeficient&) {
        }
    }
    throw RankDeficient("could not draw a full-rank feature matrix");
}

}  // namespace almostsure::harness
