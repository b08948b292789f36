// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "almostsure/cli.hpp"
#include "almostsure/errors.hpp"
#include "almostsure/harness.hpp"
#include "almostsure/sa_core.hpp"
#include "skeleton_fixture.hpp"

using namespace almostsure;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition && ok) {
            ok = false;
            detail = what;
        }
    }
};

Vector random_simplex(std::size_t n, trajectory::Xoshiro256ss& rng) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = -std::log(1.0 - rng.uniform());
    }
    return v / v.sum();
}

Vector gaussian(Eigen::Index n, trajectory::Xoshiro256ss& rng, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = scale * rng.normal();
    }
    return v;
}

std::string num(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

Outcome chain_certification() {
    Outcome out;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 1 + seed % 10;
        const auto p = harness::random_ergodic_matrix(n, seed, 0.5);
        const auto cert = markov::doeblin_certificate(p);
        out.require(cert.has_value(), "no certificate for seed " + std::to_string(seed));
        if (!cert) {
            continue;
        }
        const Matrix pn = markov::matrix_power(p.rows(), cert->power_N);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out.require(pn(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + 1e-12 >=
                                cert->epsilon * cert->minorizing_measure[j],
                            "minorization fails for seed " + std::to_string(seed));
            }
        }
        const Vector mu = markov::stationary_distribution(p).probs();
        out.require(markov::l1_distance(mu, markov::stationary_by_linear_solve(p)) <= 1e-8,
                    "stationary mismatch for seed " + std::to_string(seed));
        auto rng = trajectory::rng_stream(seed, 100);
        for (int k = 0; k < 1000; ++k) {
            const Vector d = random_simplex(n, rng) - random_simplex(n, rng);
            const Vector moved = (d.transpose() * pn).transpose();
            out.require(moved.lpNorm<1>() <= (1 - cert->epsilon) * d.lpNorm<1>() + 1e-10,
                        "contraction fails for seed " + std::to_string(seed));
        }
        try {
            markov::mixing_certificate(p, 100);
        } catch (const EnvelopeViolated& e) {
            out.require(false, std::string("mixing envelope: ") + e.what());
        }
    }
    return out;
}

Outcome periodic_negatives() {
    Outcome out;
    const auto flip = markov::validate_stochastic((Matrix(2, 2) << 0, 1, 1, 0).finished());
    out.require(!markov::is_aperiodic(flip), "[[0,1],[1,0]] reported aperiodic");
    out.require(!markov::doeblin_certificate(flip).has_value(), "[[0,1],[1,0]] has a certificate");
    out.require(!markov::is_irreducible(markov::validate_stochastic(Matrix::Identity(2, 2))),
                "identity reported irreducible");
    return out;
}

Outcome fixed_point_oracles() {
    Outcome out;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t s = 1 + seed % 8;
        const std::size_t a = 1 + seed % 4;
        const auto mdp = harness::random_mdp(s, a, 0.9, seed);
        const auto policy = mdp::Policy::uniform(s, a);
        const auto chain = mdp::induce_chain(mdp, policy);
        const auto features = harness::random_features(s, 1 + seed % s, seed);
        const auto td = mdp::td_matrices(chain, features, 0.9);
        out.require((td.A * td.w_star + td.b).lpNorm<Eigen::Infinity>() <= 1e-8, "A w* + b residual");
        const double tol = 1e-10;
        const Matrix q = mdp::optimal_q(mdp, tol).q;
        out.require((mdp::bellman_optimality_apply(mdp, q) - q).lpNorm<Eigen::Infinity>() <= tol, "T q* residual");
        out.require((mdp::weighted_bellman_apply(mdp, policy, chain.d_pi, q) - q).lpNorm<Eigen::Infinity>() <= tol,
                    "T' q* residual");
        const auto tab = mdp::td_matrices(chain, mdp::FeatureMap::tabular(s), 0.9);
        out.require((tab.w_star - mdp::value_function(chain, 0.9)).lpNorm<Eigen::Infinity>() <= 1e-8,
                    "tabular w* differs from v_pi");
    }
    return out;
}

Outcome drift_conditions() {
    Outcome out;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t s = 2 + seed % 6;
        const std::size_t a = 1 + seed % 3;
        const auto mdp = harness::random_mdp(s, a, 0.9, seed);
        const auto policy = mdp::Policy::uniform(s, a);
        const auto chain = mdp::induce_chain(mdp, policy);
        const auto td = mdp::td_matrices(chain, harness::random_features(s, 1 + seed % s, seed), 0.9);
        out.require(td.drift_eta > 1e-10, "TD eta not positive for seed " + std::to_string(seed));

        const auto q = algorithms::QLearningSpec::create(mdp, policy, algorithms::StepSchedule::inv_poly(0.8, 2),
                                                         Matrix::Zero(static_cast<Eigen::Index>(s),
                                                                      static_cast<Eigen::Index>(a)));
        const double gp = sa::estimate_gamma_prime(mdp, policy, q.d_pi(), q.q_star(), 1000, seed).value;
        out.require(gp < 1.0, "gamma' >= 1 for seed " + std::to_string(seed));
        const auto choice = sa::choose_p_for_q(s * a, gp);
        out.require(choice.eta >= (1 - gp) / 2, "chosen eta below (1 - gamma')/2");
        try {
            const auto maps = algorithms::eval_F_f_q(q);
            const auto report = sa::check_lyapunov_conditions(sa::LyapunovP(choice.p), maps.f,
                                                              algorithms::flatten(q.q_star()), 1000, seed);
            out.require(report.drift_eta.value > 0.0, "fitted eta not positive");
        } catch (const sa::DriftViolated& e) {
            out.require(false, std::string("drift violated: ") + e.what());
        }
    }
    return out;
}

Outcome lyapunov_analytics() {
    Outcome out;
    auto rng = trajectory::rng_stream(5, 0);
    for (double p : {2.0, 4.0, 8.0, 16.0}) {
        const sa::LyapunovP lp(p);
        for (int k = 0; k < 100; ++k) {
            const Vector x = gaussian(4, rng);
            const Vector grad = sa::phi_gradient(lp, x);
            Vector fd(4);
            for (Eigen::Index i = 0; i < 4; ++i) {
                Vector up = x, down = x;
                up(i) += 1e-6;
                down(i) -= 1e-6;
                fd(i) = (sa::phi_value(lp, up) - sa::phi_value(lp, down)) / 2e-6;
            }
            out.require((fd - grad).norm() / grad.norm() <= 1e-5, "gradient mismatch at p = " + num(p));
            const double phi = sa::phi_value(lp, x);
            out.require(std::abs(grad.dot(x) - 2 * phi) <= 1e-10 * 2 * phi, "Euler identity at p = " + num(p));
        }
        const sa::FieldMap contraction = [](const Vector& x) -> Vector { return 0.5 * x; };
        const auto report = sa::check_lyapunov_conditions(lp, contraction, Vector::Zero(4), 1000, 9);
        out.require(std::isfinite(report.smoothness_C.value) && report.samples == 1000,
                    "smoothness constant not finite at p = " + num(p));
    }
    return out;
}

Vector enumerate_paths(const Matrix& p, std::size_t y, std::size_t steps, double prob, const sa::SampleMap& G,
                       const Vector& w) {
    if (steps == 0) {
        return prob * G(w, y);
    }
    Vector acc = Vector::Zero(w.size());
    for (Eigen::Index next = 0; next < p.cols(); ++next) {
        const double q = p(static_cast<Eigen::Index>(y), next);
        if (q > 0.0) {
            acc += enumerate_paths(p, static_cast<std::size_t>(next), steps - 1, prob * q, G, w);
        }
    }
    return acc;
}

Outcome conditional_expectation() {
    Outcome out;
    const sa::SampleMap G = [](const Vector& w, std::size_t y) -> Vector {
        Vector v(w.size());
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            v(i) = w(i) * std::sin(static_cast<double>(y + 2) * (i + 1)) + static_cast<double>(y * y);
        }
        return v;
    };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 1 + seed % 4;
        const auto p = harness::random_ergodic_matrix(n, seed, 0.5);
        const sa::KernelPowers powers(p);
        auto rng = trajectory::rng_stream(seed, 7);
        for (int k = 0; k < 20; ++k) {
            const Vector w = gaussian(3, rng, 2.0);
            for (std::size_t lag = 1; lag <= 5; ++lag) {
                for (std::size_t y0 = 0; y0 < n; ++y0) {
                    const Vector fast = sa::conditional_expectation_G(powers, y0, lag, G, w);
                    const Vector slow = enumerate_paths(p.rows(), y0, lag, 1.0, G, w);
                    out.require((fast - slow).lpNorm<Eigen::Infinity>() <= 1e-12,
                                "mismatch on seed " + std::to_string(seed) + ", lag " + std::to_string(lag));
                }
            }
        }
    }
    return out;
}

Outcome skeleton_decomposition() {
    Outcome out;
    const auto run = fixture::skeleton_run(fixture::five_state_td(), 100, 4);
    out.require(run.decomp.reconstruction_residual <= 1e-9,
                "reconstruction residual " + num(run.decomp.reconstruction_residual));
    const auto mds = sa::check_mds(run.decomp, run.aug->kernel, run.G, run.spec->schedule(), 10000, 10, 1);
    out.require(mds.analytic_violation <= 1e-10, "analytic MDS violation " + num(mds.analytic_violation));
    out.require(mds.mc_max_z <= 3.0, "Monte-Carlo z " + num(mds.mc_max_z));
    const auto growth = sa::fit_noise_growth(run.decomp);
    const auto violation = sa::growth_violation(growth);
    out.require(!violation.has_value(), "growth: " + violation.value_or(""));
    out.require(std::isfinite(growth.C_e1) && std::isfinite(growth.C_e2), "growth constants not finite");

    const auto control = fixture::skeleton_run(fixture::biased_two_state_td(), 100, 4, 1);
    const auto bad = sa::check_mds(control.decomp, control.aug->kernel, control.G, control.spec->schedule(), 10000,
                                   10, 1);
    out.require(!bad.passes(), "mis-lagged control passed the MDS check");
    out.require(bad.mc_max_z > 3.0, "mis-lagged control z " + num(bad.mc_max_z));
    return out;
}

Outcome anchor_arithmetic() {
    Outcome out;
    for (double nu : {0.70, 0.75, 0.80, 0.90, 0.95}) {
        const auto [lo, hi] = sa::anchor_exponent_interval(nu);
        out.require(lo < hi, "empty interval at nu = " + num(nu));
        const auto anchors = sa::build_anchors(algorithms::StepSchedule::inv_poly(nu, 2), 10000);
        out.require(std::isfinite(anchors.anchor_C), "anchor constant not finite at nu = " + num(nu));
        for (std::size_t m = 0; m < anchors.count(); ++m) {
            if (anchors.alpha_at_anchor[m] > anchors.anchor_C * anchors.betas[m] * anchors.betas[m] * (1 + 1e-12)) {
                out.require(false, "anchor inequality fails at nu = " + num(nu) + ", m = " + std::to_string(m));
                break;
            }
        }
    }
    try {
        sa::build_anchors(algorithms::StepSchedule::inv_poly(2.0 / 3.0, 2), 100);
        out.require(false, "nu = 2/3 accepted");
    } catch (const NuOutOfRange&) {
    }
    return out;
}

Outcome envelope() {
    Outcome out;
    const auto T = algorithms::StepSchedule::inv_poly(1.0, 2);
    const double z100 = sa::robbins_siegmund_envelope(2.0, T, 0.0, 100).final_value;
    out.require(std::abs(z100 - 2.0 / 101.0) <= 1e-12, "C = 0 gives " + num(z100));
    const double tail = sa::robbins_siegmund_envelope(1.0, T, 1.0, 1000000).final_value;
    out.require(tail < 1e-4, "C = 1 final value " + num(tail));
    const auto low = sa::robbins_siegmund_envelope(1.0, T, 0.5, 10000);
    const auto high = sa::robbins_siegmund_envelope(1.0, T, 3.0, 10000);
    for (std::size_t n = 0; n < low.trace.size(); ++n) {
        out.require(high.trace[n] >= low.trace[n], "domination fails at n = " + std::to_string(n));
    }
    return out;
}

Outcome regressions() {
    Outcome out;
    for (const char* name : {"td_markov.json", "td_iid.json", "q_markov.json", "q_iid.json"}) {
        const auto config = cli::load_config(fs::path(ALMOSTSURE_CONFIG_DIR) / name);
        const auto report = harness::run_experiment(cli::build_experiment(config, 0));
        out.require(report.verdict.verdict == harness::Verdict::Converged,
                    std::string(name) + " verdict " + harness::to_string(report.verdict.verdict));
    }

    const auto scalar = mdp::MdpSpec::create(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.9, Vector::Ones(1));
    const auto td = algorithms::LinearTdSpec::create(mdp::induce_chain(scalar, mdp::Policy::uniform(1, 1)),
                                                     mdp::FeatureMap::tabular(1), 0.9,
                                                     algorithms::StepSchedule::inv_poly(0.8, 2), Vector::Zero(1));
    const auto aug = mdp::augmented_td_kernel(td.chain());
    const auto path = trajectory::sample_path({aug.kernel, aug.stationary, 100000, 1});
    const double w = algorithms::run_iterates(td, path, {100000}).iterates[0](0);
    out.require(std::abs(w - 10.0) < 0.5, "scalar instance ends at " + num(w));

    harness::ExperimentConfig myopic;
    myopic.experiment_id = "q-gamma-zero";
    myopic.experiment = harness::Experiment::QMarkov;
    myopic.problem = algorithms::QLearningSpec::create(harness::random_mdp(3, 2, 0.0, 13), mdp::Policy::uniform(3, 2),
                                                       algorithms::StepSchedule::inv_poly(0.8, 2), Matrix::Zero(3, 2));
    myopic.seeds = {1, 2, 3, 4, 5};
    myopic.horizon = 200000;
    myopic.jobs = 0;
    const auto report = harness::run_experiment(myopic);
    for (const auto& seed : report.seeds) {
        out.require(seed.errors.back() < 0.01, "gamma = 0 Q-learning error " + num(seed.errors.back()));
    }
    return out;
}

std::string trace_text(const harness::ConvergenceReport& report) {
    std::ostringstream out;
    harness::write_trace_csv(out, report);
    return out.str();
}

Outcome determinism() {
    Outcome out;
    for (const char* name : {"td_markov.json", "q_markov.json"}) {
        auto config = cli::load_config(fs::path(ALMOSTSURE_CONFIG_DIR) / name);
        config.horizon = 20000;
        config.seeds.resize(6);
        const auto first = trace_text(harness::run_experiment(cli::build_experiment(config, 1)));
        const auto second = trace_text(harness::run_experiment(cli::build_experiment(config, 1)));
        const auto parallel = trace_text(harness::run_experiment(cli::build_experiment(config, 4)));
        out.require(first == second, std::string(name) + ": repeated run differs");
        out.require(first == parallel, std::string(name) + ": parallel run differs");
    }
    return out;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"markov chain certification", chain_certification},
        {"periodic and reducible negatives", periodic_negatives},
        {"fixed-point oracles", fixed_point_oracles},
        {"drift conditions", drift_conditions},
        {"lyapunov analytics", lyapunov_analytics},
        {"conditional expectation oracle", conditional_expectation},
        {"skeleton decomposition", skeleton_decomposition},
        {"anchor arithmetic", anchor_arithmetic},
        {"robbins-siegmund envelope", envelope},
        {"convergence regressions", regressions},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (outcome.ok ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first << " ("
                  << std::fixed << std::setprecision(1) << seconds << " s)";
        if (!outcome.ok) {
            std::cout << ": " << outcome.detail;
            ++failures;
        }
        std::cout << std::defaultfloat << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
