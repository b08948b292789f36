#pragma once

// Experiment configuration files (JSON) and the subcommands behind the
// `almostsure` executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "almostsure/harness.hpp"

namespace almostsure::cli {

/// MDP drawn by harness::random_mdp.
struct GeneratedMdp {
    std::size_t states = 0;
    std::size_t actions = 1;
    double gamma = 0.9;
    std::uint64_t seed = 0;
};

/// Reward is S x A; transition is (S*A) x S with row s*A + a.
struct ExplicitMdp {
    Matrix reward;
    Matrix transition;
    double gamma = 0.9;
    std::optional<Vector> init;
};

struct FeatureSpec {
    enum class Kind { Tabular, Explicit, File, Generated };
    Kind kind = Kind::Tabular;
    Matrix matrix;
    std::string path;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    double scale = 1.0;
};

struct Tolerances {
    std::size_t lyapunov_samples = 1000;
    std::size_t anchors = 100;
    std::size_t max_dense_steps = 2'000'000;
    std::size_t mc_samples = 10'000;
    std::size_t mc_anchors = 10;
    double mds_analytic_tol = 1e-10;
    double mds_z_max = 3.0;
    std::uint64_t assumption_seed = 1;
};

struct CliConfig {
    std::string id;
    harness::Experiment experiment = harness::Experiment::TdMarkov;
    std::variant<GeneratedMdp, ExplicitMdp> mdp;
    /// Empty means the uniform policy.
    std::optional<Matrix> policy;
    std::optional<FeatureSpec> features;
    bool validate_features = true;
    std::string schedule = "inv_poly:0.8:2";
    std::vector<std::uint64_t> seeds;
    std::size_t horizon = 0;
    /// Empty means the geometric grid.
    std::vector<std::size_t> checkpoints;
    harness::Thresholds thresholds;
    std::optional<Vector> w0;
    std::optional<Matrix> q0;
    std::optional<Vector> initial_states;
    Tolerances tolerances;
    /// Directory used to resolve relative file paths.
    std::string base_dir;

    friend bool operator==(const CliConfig& a, const CliConfig& b);
};

/// Throws ParseError naming the offending field path (e.g. `thresholds.decay_factor_min`).
/// Unknown keys are errors; referenced files must exist.
CliConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
CliConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const CliConfig& config);

/// Builds the MDP, policy, features and learning spec. Throws the model errors.
harness::ExperimentConfig build_experiment(const CliConfig& config, std::size_t jobs = 1);

struct Flags {
    std::size_t jobs = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
};

/// Key-value chain report. Exit 0, or 1 with a message on `err`.
int cmd_analyze_chain(const std::filesystem::path& matrix_path, const std::filesystem::path& out_path,
                      const Flags& flags, std::ostream& err);

/// Writes trace.csv and report.txt under `out_dir`; exit status per harness::exit_status.
int cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir, const Flags& flags,
            std::ostream& err);

/// Writes the assumption report; 0 when every check passes, 3 otherwise, 1 on errors.
int cmd_check_assumptions(const std::filesystem::path& config_path, const std::filesystem::path& out_path,
                          const Flags& flags, std::ostream& err);

/// Prints "n,z" for the Robbins-Siegmund envelope with T_n = 1/(n+2).
int cmd_rs_demo(double z0, double C, std::size_t steps, std::ostream& out);

/// Entry point shared by the executable.
int run_main(int argc, char** argv);

}  // namespace almostsure::cli
