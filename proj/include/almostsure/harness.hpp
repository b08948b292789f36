#pragma once

// Multi-seed convergence experiments for linear TD and Q-learning under
// Markovian or i.i.d. stationary sampling, the finite-horizon verdict, and
// the assumption report built from one seeded dense run.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "almostsure/algorithms.hpp"
#include "almostsure/mdp_model.hpp"
#include "almostsure/sa_core.hpp"

namespace almostsure::harness {

enum class Experiment { TdMarkov, TdIid, QMarkov, QIid };
enum class SamplingMode { Markovian, IidStationary };
enum class Verdict { Converged, Inconclusive, Diverged };

std::string to_string(Experiment e);
std::string to_string(Verdict v);
Experiment parse_experiment(const std::string& text);
SamplingMode sampling_mode(Experiment e);
bool is_q_learning(Experiment e);

/// 0 Converged, 2 Inconclusive, 3 Diverged.
int exit_status(Verdict v);

struct Thresholds {
    /// Absolute bound, or a multiple of the median initial error when
    /// `relative_to_initial` is set.
    double final_error_max = 0.1;
    bool relative_to_initial = false;
    double decay_factor_min = 4.0;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

using Problem = std::variant<std::monostate, algorithms::LinearTdSpec, algorithms::QLearningSpec>;

struct ExperimentConfig {
    std::string experiment_id;
    Experiment experiment = Experiment::TdMarkov;
    Problem problem;
    /// Law of S_0. Defaults to uniform for TD and the MDP's initial law for Q-learning.
    std::optional<markov::StochasticVec> initial_states;
    std::vector<std::uint64_t> seeds;
    std::size_t horizon = 0;
    /// Empty means geometric_checkpoints(horizon).
    std::vector<std::size_t> checkpoints;
    Thresholds thresholds;
    /// Worker threads; 0 means hardware concurrency.
    std::size_t jobs = 1;
};

/// {0} together with round(horizon^{k/points}), k = 0..points, and horizon / 10.
std::vector<std::size_t> geometric_checkpoints(std::size_t horizon, std::size_t points = 15);

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<double> errors;
    std::vector<double> phi;
    Vector final_iterate;
};

struct VerdictDetail {
    Verdict verdict = Verdict::Inconclusive;
    double median_initial = 0.0;
    double median_tenth = 0.0;
    double median_final = 0.0;
    double final_error_max = 0.0;
    std::size_t tenth_step = 0;
    std::size_t seeds_within = 0;
};

/// Median errors over seeds at each checkpoint. Converged needs median
/// final error <= final_error_max and median final <= median at horizon/10
/// divided by decay_factor_min; Diverged when the median final error exceeds
/// 10x the median initial error. Fewer than two checkpoints is Inconclusive.
VerdictDetail convergence_verdict(const std::vector<std::size_t>& steps,
                                  const std::vector<std::vector<double>>& errors_per_seed,
                                  const Thresholds& thresholds);

/// Constants attached to every run.
struct RunAssumptions {
    double lipschitz_L = 0.0;
    double analytic_eta = 0.0;
    double lyapunov_p = 2.0;
    double fitted_eta = 0.0;
    double gamma_prime = 0.0;
};

struct ConvergenceReport {
    std::string experiment_id;
    Experiment experiment = Experiment::TdMarkov;
    std::vector<std::size_t> checkpoints;
    std::vector<SeedResult> seeds;
    std::vector<double> median_curve;
    std::vector<double> q10_curve;
    std::vector<double> q90_curve;
    Thresholds thresholds;
    VerdictDetail verdict;
    Vector oracle;
    std::string schedule;
    RunAssumptions assumptions;
    std::vector<std::string> diagnostics;

    /// Median error curve never rises after horizon / 10, allowing one violation.
    bool monotone_after_tenth(std::size_t allowed_violations = 1) const;
};

/// Each requires a matching problem type and an admissible schedule.
/// Markovian runs need nu in (2/3, 1) for inv_poly schedules (NuOutOfRange);
/// i.i.d. runs need a Robbins-Monro schedule (ScheduleNotRobbinsMonro).
ConvergenceReport run_td_markov(const ExperimentConfig& config);
ConvergenceReport run_td_iid(const ExperimentConfig& config);
ConvergenceReport run_q_markov(const ExperimentConfig& config);
ConvergenceReport run_q_iid(const ExperimentConfig& config);
ConvergenceReport run_experiment(const ExperimentConfig& config);

void write_trace_csv(std::ostream& out, const ConvergenceReport& report);
void write_report_txt(std::ostream& out, const ConvergenceReport& report);

struct AssumptionOptions {
    std::uint64_t seed = 1;
    std::size_t anchors = 100;
    std::size_t max_dense_steps = 2'000'000;
    std::size_t lyapunov_samples = 1000;
    std::size_t mc_samples = 10'000;
    std::size_t mc_anchors = 10;
    double mds_analytic_tol = 1e-10;
    double mds_z_max = 3.0;
};

/// Lyapunov, Lipschitz, noise-growth, martingale-difference and recursion
/// checks on one dense seeded run. Failing checks are listed in
/// `failures`; configuration errors are thrown.
sa::AssumptionReport check_assumptions(const ExperimentConfig& config, const AssumptionOptions& options = {});

// ---------------------------------------------------------------------------
// Seeded instance generators
// ---------------------------------------------------------------------------

/// Random ergodic n x n stochastic matrix: a cycle plus self-loops keeps it
/// irreducible and aperiodic, other entries are dropped with probability `sparsity`.
markov::StochasticMatrix random_ergodic_matrix(std::size_t n, std::uint64_t seed, double sparsity = 0.3);

/// Random MDP with strictly positive transitions, rewards uniform on [0, 1)
/// and a uniform initial law.
mdp::MdpSpec random_mdp(std::size_t num_states, std::size_t num_actions, double gamma, std::uint64_t seed);

/// Gaussian feature matrix, redrawn until it passes the rank check.
mdp::FeatureMap random_features(std::size_t num_states, std::size_t dim, std::uint64_t seed, double scale = 1.0);

}  // namespace almostsure::harness
