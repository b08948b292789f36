#include "almostsure/sa_core.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

namespace almostsure::sa {

namespace {

Eigen::Index idx(std::size_t i) {
    return static_cast<Eigen::Index>(i);
}

// Gaussian direction with a log-uniform scale in [1e-2, 1e2].
Vector random_vector(std::size_t dim, trajectory::Xoshiro256ss& rng) {
    Vector v(idx(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = rng.normal();
    }
    const double scale = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    return scale * v;
}

double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    if (xs.size() < 3) {
        return 0.0;
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

// Slope of log(ratio) against log(m + 1) over the second half, positive ratios only.
double ratio_trend(const std::vector<double>& ratio) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t m = ratio.size() / 2; m < ratio.size(); ++m) {
        if (ratio[m] > 0.0) {
            xs.push_back(std::log(static_cast<double>(m + 1)));
            ys.push_back(std::log(ratio[m]));
        }
    }
    return least_squares_slope(xs, ys);
}

Matrix sample_table(const SampleMap& G, const Vector& w, std::size_t num_samples) {
    Matrix table;
    for (std::size_t y = 0; y < num_samples; ++y) {
        const Vector g = G(w, y);
        if (y == 0) {
            table.resize(g.size(), idx(num_samples));
        }
        table.col(idx(y)) = g;
    }
    return table;
}

}  // namespace

LyapunovP::LyapunovP(double p) : p_(p) {
    if (!(p >= 2.0) || !std::isfinite(p)) {
        throw InvalidArgument("Lyapunov exponent p must be at least 2");
    }
}

double norm_p(const Vector& x, double p) {
    const double m = x.cwiseAbs().maxCoeff();
    if (m == 0.0) {
        return 0.0;
    }
    if (p == 2.0) {
        return x.norm();
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        s += std::pow(std::abs(x(i)) / m, p);
    }
    return m * std::pow(s, 1.0 / p);
}

double phi_value(const LyapunovP& lp, const Vector& x) {
    if (x.size() == 0) {
        return 0.0;
    }
    const double n = norm_p(x, lp.p());
    return 0.5 * n * n;
}

Vector phi_gradient(const LyapunovP& lp, const Vector& x) {
    if (lp.p() == 2.0) {
        return x;
    }
    Vector g = Vector::Zero(x.size());
    if (x.size() == 0) {
        return g;
    }
    const double n = norm_p(x, lp.p());
    if (n == 0.0) {
        return g;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double r = std::abs(x(i)) / n;
        const double mag = std::pow(r, lp.p() - 1.0) * n;
        g(i) = x(i) < 0.0 ? -mag : mag;
    }
    return g;
}

LyapunovReport check_lyapunov_conditions(const LyapunovP& lp, const FieldMap& f, const Vector& x_star,
                                         std::size_t sample_count, std::uint64_t seed) {
    const auto dim = static_cast<std::size_t>(x_star.size());
    auto rng = trajectory::rng_stream(seed, 0);

    LyapunovReport report;
    report.p = lp.p();
    report.samples = sample_count;
    report.smoothness_C.value = 0.0;
    report.drift_eta.value = std::numeric_limits<double>::infinity();
    report.positive_definite = phi_value(lp, Vector::Zero(idx(dim))) == 0.0;

    for (std::size_t i = 0; i < sample_count; ++i) {
        const Vector x = random_vector(dim, rng);
        const Vector y = (i % 2 == 0) ? Vector(x + random_vector(dim, rng)) : random_vector(dim, rng);
        const double phi_x = phi_value(lp, x);
        const double phi_y = phi_value(lp, y);
        const Vector grad_x = phi_gradient(lp, x);

        // (i) smoothness
        const Vector diff = y - x;
        const double gap = phi_y - phi_x - grad_x.dot(diff);
        const double sq = diff.squaredNorm();
        if (sq > 0.0 && gap / sq > report.smoothness_C.value) {
            report.smoothness_C = Witness{gap / sq, x};
        }

        // (ii) positive definiteness
        if (x.cwiseAbs().maxCoeff() > 0.0 && !(phi_x > 0.0)) {
            report.positive_definite = false;
        }

        // (iii) norm-like behaviour
        if (phi_x > 0.0) {
            report.homogeneity_error =
                std::max(report.homogeneity_error, std::abs(grad_x.dot(x) - 2.0 * phi_x) / (2.0 * phi_x));
            report.norm_upper_C = std::max(report.norm_upper_C, x.norm() / std::sqrt(phi_x));
            report.norm_lower_C = std::max(report.norm_lower_C, std::sqrt(phi_x) / x.norm());
            if (phi_y > 0.0) {
                const double pairing = grad_x.cwiseAbs().dot(y.cwiseAbs());
                report.dual_pairing_C =
                    std::max(report.dual_pairing_C, pairing / (std::sqrt(phi_x) * std::sqrt(phi_y)));
            }
        }

        // (iv) drift toward x*
        const Vector z = x_star + random_vector(dim, rng);
        const Vector delta = z - x_star;
        const double phi_delta = phi_value(lp, delta);
        if (phi_delta > 0.0) {
            const double ratio = -phi_gradient(lp, delta).dot(f(z) - z) / phi_delta;
            if (ratio < report.drift_eta.value) {
                report.drift_eta = Witness{ratio, z};
            }
        }
    }

    report.passed = report.positive_definite && std::isfinite(report.smoothness_C.value) &&
                    report.drift_eta.value > 1e-10;
    if (!(report.drift_eta.value > 1e-10)) {
        std::ostringstream msg;
        msg << "drift condition fails: fitted eta = " << report.drift_eta.value << " at p = " << lp.p();
        throw DriftViolated(msg.str(), report);
    }
    return report;
}

Witness fit_lipschitz(const FieldMap& f, std::size_t dim, const Vector& center, std::size_t sample_count,
                      std::uint64_t seed) {
    auto rng = trajectory::rng_stream(seed, 1);
    Witness best;
    for (std::size_t i = 0; i < sample_count; ++i) {
        const Vector x = center + random_vector(dim, rng);
        const Vector y = x + random_vector(dim, rng);
        const double denom = (x - y).norm();
        if (denom == 0.0) {
            continue;
        }
        const double ratio = (f(x) - f(y)).norm() / denom;
        if (ratio > best.value) {
            best = Witness{ratio, x};
        }
    }
    return best;
}

PChoice choose_p_for_q(std::size_t num_sa_pairs, double gamma_prime) {
    if (!(gamma_prime >= 0.0 && gamma_prime < 1.0)) {
        throw InvalidArgument("gamma' must lie in [0, 1)");
    }
    if (num_sa_pairs == 0) {
        throw InvalidArgument("need at least one state-action pair");
    }
    const double target = 0.5 * (1.0 + gamma_prime);
    const auto n = static_cast<double>(num_sa_pairs);
    double p = 2.0;
    for (int k = 1; k < 1024; ++k, p *= 2.0) {
        const double factor = gamma_prime * std::pow(n, 1.0 / p);
        if (factor <= target) {
            return PChoice{p, 1.0 - factor};
        }
    }
    throw NoConvergence("no power-of-two exponent satisfies the norm-equivalence target");
}

Witness estimate_gamma_prime(const mdp::MdpSpec& mdp, const mdp::Policy& policy,
                             const mdp::StochasticVec& d_pi, const Matrix& q_star, std::size_t samples,
                             std::uint64_t seed) {
    auto rng = trajectory::rng_stream(seed, 2);
    const std::size_t dim = static_cast<std::size_t>(q_star.size());
    Witness best;
    for (std::size_t i = 0; i < samples; ++i) {
        const Vector delta = random_vector(dim, rng);
        const Matrix q = q_star + algorithms::unflatten(delta, mdp.num_states(), mdp.num_actions());
        const double denom = (q - q_star).lpNorm<Eigen::Infinity>();
        if (denom == 0.0) {
            continue;
        }
        const Matrix tq = mdp::weighted_bellman_apply(mdp, policy, d_pi, q);
        const double ratio = (tq - q_star).lpNorm<Eigen::Infinity>() / denom;
        if (ratio > best.value) {
            best = Witness{ratio, algorithms::flatten(q)};
        }
    }
    return best;
}

std::pair<double, double> anchor_exponent_interval(double nu) {
    // alpha_{t_m} <= C beta_m^2 needs a >= 2 / (2 - nu); square-summable
    // beta_m needs a < 1 / (2 (1 - nu)).
    return {2.0 / (2.0 - nu), 1.0 / (2.0 * (1.0 - nu))};
}

std::size_t AnchorSequence::time(std::size_t m) const {
    const double t = times.at(m);
    if (t > 9007199254740992.0) {
        throw InvalidArgument("anchor t_" + std::to_string(m) + " is beyond exact integer range");
    }
    return static_cast<std::size_t>(t);
}

double inv_poly_block_sum(double nu, double offset, double first, double last) {
    if (last <= first) {
        return 0.0;
    }
    if (last - first <= 4096.0 || first < 1000.0) {
        long double acc = 0.0L;
        for (double t = first; t < last; t += 1.0) {
            acc += std::pow(static_cast<long double>(t + offset), -static_cast<long double>(nu));
        }
        return static_cast<double>(acc);
    }
    // Euler-Maclaurin for sum_{u=A}^{B-1} u^-nu, A = first + offset, B = last + offset.
    const double a = first + offset;
    const double b = last + offset;
    const double log_ratio = std::log1p((b - a) / a);
    const double integral = nu == 1.0 ? log_ratio
                                      : std::pow(a, 1.0 - nu) * std::expm1((1.0 - nu) * log_ratio) / (1.0 - nu);
    auto f = [nu](double t) { return std::pow(t, -nu); };
    auto d1 = [nu](double t) { return -nu * std::pow(t, -nu - 1.0); };
    auto d3 = [nu](double t) { return -nu * (nu + 1.0) * (nu + 2.0) * std::pow(t, -nu - 3.0); };
    return integral + 0.5 * (f(a) - f(b)) + (d1(b) - d1(a)) / 12.0 - (d3(b) - d3(a)) / 720.0;
}

AnchorSequence build_anchors(const StepSchedule& schedule, std::size_t count_M) {
    if (schedule.family() != StepSchedule::Family::InvPoly) {
        throw InvalidArgument("anchors are defined for inv_poly schedules");
    }
    const double nu = schedule.nu();
    if (!(nu > 2.0 / 3.0 && nu < 1.0)) {
        std::ostringstream msg;
        msg << "step exponent nu = " << nu
            << " is outside (2/3, 1); the admissible anchor exponent interval (2/(2-nu), 1/(2(1-nu))) is empty";
        throw NuOutOfRange(msg.str());
    }
    const auto [lo, hi] = anchor_exponent_interval(nu);
    return build_anchors_with_exponent(schedule, count_M, 0.5 * (lo + hi));
}

AnchorSequence build_anchors_with_exponent(const StepSchedule& schedule, std::size_t count_M, double a) {
    if (schedule.family() != StepSchedule::Family::InvPoly) {
        throw InvalidArgument("anchors are defined for inv_poly schedules");
    }
    if (!(a > 0.0)) {
        throw InvalidArgument("anchor exponent must be positive");
    }
    const double nu = schedule.nu();
    const auto offset = static_cast<double>(schedule.offset());

    AnchorSequence out;
    out.exponent_a = a;
    out.nu = nu;
    out.times.reserve(count_M + 2);
    out.times.push_back(0.0);
    for (std::size_t m = 1; m <= count_M + 1; ++m) {
        double t = std::ceil(std::pow(static_cast<double>(m), a));
        t = std::max(t, out.times.back() + 1.0);
        out.times.push_back(t);
    }

    std::vector<double> ratio;
    for (std::size_t m = 0; m <= count_M; ++m) {
        const double beta = inv_poly_block_sum(nu, offset, out.times[m], out.times[m + 1]);
        const double alpha = std::pow(out.times[m] + offset, -nu);
        out.betas.push_back(beta);
        out.alpha_at_anchor.push_back(alpha);
        ratio.push_back(alpha / (beta * beta));
        out.beta_sum += beta;
        out.beta_sq_sum += beta * beta;
    }
    const auto max_it = std::max_element(ratio.begin(), ratio.end());
    out.anchor_C = *max_it;
    out.anchor_C_witness = static_cast<std::size_t>(max_it - ratio.begin());

    const std::size_t half = ratio.size() / 2;
    const double first_half = *std::max_element(ratio.begin(), ratio.begin() + static_cast<long>(std::max<std::size_t>(half, 1)));
    const double second_half = *std::max_element(ratio.begin() + static_cast<long>(half), ratio.end());
    out.ratio_nonincreasing = second_half <= first_half * (1.0 + 1e-12);

    out.beta_exponent = 1.0 - a * (1.0 - nu);
    double tail = 0.0;
    for (std::size_t m = half; m < out.betas.size(); ++m) {
        tail += out.betas[m] * out.betas[m];
    }
    out.beta_sq_tail_share = out.beta_sq_sum > 0.0 ? tail / out.beta_sq_sum : 0.0;
    return out;
}

AnchorSequence unit_anchors(const StepSchedule& schedule, std::size_t count_M) {
    AnchorSequence out;
    out.exponent_a = 1.0;
    out.nu = schedule.family() == StepSchedule::Family::InvPoly ? schedule.nu() : 0.0;
    for (std::size_t m = 0; m <= count_M + 1; ++m) {
        out.times.push_back(static_cast<double>(m));
    }
    for (std::size_t m = 0; m <= count_M; ++m) {
        const double alpha = schedule(m);
        out.betas.push_back(alpha);
        out.alpha_at_anchor.push_back(alpha);
        out.beta_sum += alpha;
        out.beta_sq_sum += alpha * alpha;
        if (1.0 / alpha > out.anchor_C) {
            out.anchor_C = 1.0 / alpha;
            out.anchor_C_witness = m;
        }
    }
    out.beta_exponent = out.nu;
    return out;
}

void write_anchors_csv(std::ostream& out, const AnchorSequence& anchors) {
    out << "m,t_m,beta_m,alpha_at_anchor,beta_sq\n" << std::setprecision(17);
    for (std::size_t m = 0; m < anchors.betas.size(); ++m) {
        out << m << ',' << anchors.times[m] << ',' << anchors.betas[m] << ',' << anchors.alpha_at_anchor[m]
            << ',' << anchors.betas[m] * anchors.betas[m] << '\n';
    }
}

KernelPowers::KernelPowers(markov::StochasticMatrix kernel) : kernel_(std::move(kernel)) {}

const Matrix& KernelPowers::power(std::size_t k) const {
    std::lock_guard<std::mutex> lock(mutex_);
    if (const auto it = cache_.find(k); it != cache_.end()) {
        return it->second;
    }
    const auto n = idx(kernel_.size());
    Matrix result = Matrix::Identity(n, n);
    std::size_t bit = 1;
    while (bit <= k && bit != 0) {
        auto it = cache_.find(bit);
        if (it == cache_.end()) {
            if (bit == 1) {
                it = cache_.emplace(1, kernel_.rows()).first;
            } else {
                const Matrix& half = cache_.at(bit / 2);
                it = cache_.emplace(bit, half * half).first;
            }
        }
        if (k & bit) {
            result = result * it->second;
        }
        bit <<= 1U;
    }
    return cache_.emplace(k, std::move(result)).first->second;
}

Vector conditional_expectation_G(const KernelPowers& kernel, std::size_t y0, std::size_t lag,
                                 const SampleMap& G, const Vector& w) {
    if (lag == 0) {
        throw InvalidArgument("conditional expectation lag must be at least 1");
    }
    if (y0 >= kernel.size()) {
        throw InvalidArgument("anchor state out of range");
    }
    const Matrix& power = kernel.power(lag);
    Vector acc;
    for (std::size_t y = 0; y < kernel.size(); ++y) {
        const double weight = power(idx(y0), idx(y));
        if (weight == 0.0) {
            continue;
        }
        const Vector g = G(w, y);
        if (acc.size() == 0) {
            acc = Vector::Zero(g.size());
        }
        acc += weight * g;
    }
    return acc;
}

markov::StochasticMatrix iid_kernel(const markov::StochasticVec& law) {
    const auto n = idx(law.size());
    Matrix rows(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rows.row(i) = law.probs().transpose();
    }
    return markov::validate_stochastic(std::move(rows), 1e-9);
}

NoiseDecomposition decompose_noise(const std::vector<Vector>& trace, const trajectory::SamplePath& path,
                                   const AnchorSequence& anchors, std::size_t segments,
                                   const UpdateMaps& maps, const KernelPowers& kernel,
                                   const StepSchedule& schedule, long lag_offset) {
    if (segments > anchors.count()) {
        throw InvalidArgument("requested more segments than materialized anchors");
    }
    const std::size_t t_end = anchors.time(segments);
    if (trace.size() < t_end + 1 || path.horizon() < t_end) {
        throw TraceTooShort("decomposition over " + std::to_string(segments) + " anchors needs iterates up to t = " +
                            std::to_string(t_end) + ", have " + std::to_string(trace.size() - 1));
    }
    if (maps.num_samples != kernel.size()) {
        throw InvalidArgument("augmented kernel size does not match the sample space of F");
    }
    auto G = [&](const Vector& w, std::size_t y) -> Vector { return maps.F(w, y) - w; };

    NoiseDecomposition out;
    out.lag_offset = lag_offset;
    for (std::size_t m = 0; m <= segments; ++m) {
        out.anchor_times.push_back(anchors.time(m));
        out.skeleton.push_back(trace[anchors.time(m)]);
    }

    for (std::size_t m = 0; m < segments; ++m) {
        const std::size_t tm = out.anchor_times[m];
        const std::size_t tn = out.anchor_times[m + 1];
        const Vector& w = trace[tm];
        const std::size_t y0 = path.states[tm];
        const Matrix table = sample_table(G, w, maps.num_samples);
        const Vector g = maps.f(w) - w;

        Vector e1 = Vector::Zero(w.size());
        Vector e2 = Vector::Zero(w.size());
        Vector centering = Vector::Zero(w.size());
        double beta = 0.0;
        for (std::size_t t = tm; t < tn; ++t) {
            const double alpha = schedule(t);
            beta += alpha;
            const std::size_t y = path.states[t + 1];
            const long lag = static_cast<long>(t + 1 - tm) + lag_offset;
            if (lag < 1) {
                throw InvalidArgument("lag offset produces a non-positive lag");
            }
            const Vector ce = table * kernel.power(static_cast<std::size_t>(lag)).row(idx(y0)).transpose();
            const Vector g_anchor = table.col(idx(y));
            e1 += alpha * (g_anchor - ce);
            centering += alpha * ce;
            e2 += alpha * (ce - g + G(trace[t], y) - g_anchor);
        }
        const Vector rebuilt = w + beta * g + e1 + e2;
        out.reconstruction_residual =
            std::max(out.reconstruction_residual, (trace[tn] - rebuilt).lpNorm<Eigen::Infinity>());
        out.anchor_states.push_back(y0);
        out.betas.push_back(beta);
        out.e1.push_back(std::move(e1));
        out.e2.push_back(std::move(e2));
        out.centering.push_back(std::move(centering));
    }
    return out;
}

GrowthReport fit_noise_growth(const NoiseDecomposition& decomp) {
    GrowthReport report;
    std::vector<double> r1;
    std::vector<double> r2;
    for (std::size_t m = 0; m < decomp.segments(); ++m) {
        const double beta = decomp.betas[m];
        const double scale = 1.0 + decomp.skeleton[m].squaredNorm();
        const double n1 = decomp.e1[m].norm();
        const double n2 = decomp.e2[m].norm();
        const double a = n1 / (beta * scale);
        const double b = n2 / (beta * beta * scale);
        // Norms at roundoff level contribute a zero ratio.
        const double floor = 1e-10 * beta * scale;
        r1.push_back(n1 > floor ? n1 / beta : 0.0);
        r2.push_back(n2 > floor ? n2 / (beta * beta) : 0.0);
        if (a > report.C_e1) {
            report.C_e1 = a;
            report.witness_e1 = m;
        }
        if (b > report.C_e2) {
            report.C_e2 = b;
            report.witness_e2 = m;
        }
    }
    report.trend_e1 = ratio_trend(r1);
    report.trend_e2 = ratio_trend(r2);
    return report;
}

std::optional<std::string> growth_violation(const GrowthReport& report) {
    std::ostringstream msg;
    if (!(report.C_e1 <= kGrowthCap) || !(report.C_e2 <= kGrowthCap)) {
        msg << "growth constants exceed " << kGrowthCap << " (C_e1 = " << report.C_e1 << ", C_e2 = " << report.C_e2
            << ")";
        return msg.str();
    }
    if (report.trend_e1 > kGrowthTrendMax || report.trend_e2 > kGrowthTrendMax) {
        msg << "noise-to-step ratio keeps growing (trend e1 = " << report.trend_e1 << ", e2 = " << report.trend_e2
            << "); no finite constant dominates it";
        return msg.str();
    }
    return std::nullopt;
}

GrowthReport check_noise_growth(const NoiseDecomposition& decomp) {
    GrowthReport report = fit_noise_growth(decomp);
    if (const auto violation = growth_violation(report)) {
        throw GrowthViolated(*violation);
    }
    return report;
}

MdsReport check_mds(const NoiseDecomposition& decomp, const markov::StochasticMatrix& kernel,
                    const SampleMap& G, const StepSchedule& schedule, std::size_t mc_samples,
                    std::size_t mc_anchor_count, std::uint64_t seed) {
    const std::size_t num_y = kernel.size();
    const std::size_t segments = decomp.segments();
    MdsReport report;
    report.mc_samples = mc_samples;

    auto table_for = [&](std::size_t m) {
        const Vector& w = decomp.skeleton[m];
        return sample_table([&](const Vector& v, std::size_t y) -> Vector { return G(v, y); }, w, num_y);
    };

    for (std::size_t m = 0; m < segments; ++m) {
        const Matrix table = table_for(m);
        Eigen::RowVectorXd law = Eigen::RowVectorXd::Zero(idx(num_y));
        law(idx(decomp.anchor_states[m])) = 1.0;
        Vector expected = Vector::Zero(table.rows());
        for (std::size_t t = decomp.anchor_times[m]; t < decomp.anchor_times[m + 1]; ++t) {
            law = law * kernel.rows();
            expected += schedule(t) * (table * law.transpose());
        }
        report.analytic_violation = std::max(report.analytic_violation,
                                             (expected - decomp.centering[m]).lpNorm<Eigen::Infinity>());
    }

    if (mc_samples < 2 || mc_anchor_count == 0 || segments == 0) {
        return report;
    }
    const trajectory::CategoricalTable sampler(kernel);
    const std::size_t checks = std::min(mc_anchor_count, segments);
    for (std::size_t k = 0; k < checks; ++k) {
        const std::size_t m = k * segments / checks;
        const Matrix table = table_for(m);
        const auto dim = table.rows();
        auto rng = trajectory::rng_stream(seed, m);
        Vector sum = Vector::Zero(dim);
        Vector sum_sq = Vector::Zero(dim);
        for (std::size_t r = 0; r < mc_samples; ++r) {
            std::size_t y = decomp.anchor_states[m];
            Vector e = -decomp.centering[m];
            for (std::size_t t = decomp.anchor_times[m]; t < decomp.anchor_times[m + 1]; ++t) {
                y = sampler.sample(y, rng);
                e += schedule(t) * table.col(idx(y));
            }
            sum += e;
            sum_sq += e.cwiseProduct(e);
        }
        const auto n = static_cast<double>(mc_samples);
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double mean = sum(i) / n;
            const double var = std::max(0.0, (sum_sq(i) - n * mean * mean) / (n - 1.0));
            const double se = std::sqrt(var / n);
            double z = 0.0;
            if (se > 0.0) {
                z = std::abs(mean) / se;
            } else if (std::abs(mean) > 1e-12 * (1.0 + decomp.centering[m].lpNorm<Eigen::Infinity>())) {
                z = std::numeric_limits<double>::infinity();
            }
            report.mc_max_z = std::max(report.mc_max_z, z);
        }
        ++report.mc_anchors_checked;
    }
    return report;
}

Envelope robbins_siegmund_envelope(double z0, const StepSchedule& T, double C, std::size_t steps) {
    if (!(z0 >= 0.0) || !(C >= 0.0)) {
        throw InvalidArgument("envelope needs z0 >= 0 and C >= 0");
    }
    Envelope out;
    out.trace.reserve(steps + 1);
    out.trace.push_back(z0);
    double z = z0;
    for (std::size_t n = 0; n < steps; ++n) {
        const double tn = T(n);
        const double factor = tn >= 1.0 ? 0.0 : 1.0 - tn;
        z = factor * z + C * tn * tn;
        out.trace.push_back(z);
    }
    out.final_value = z;
    return out;
}

RecursionFit fundamental_recursion_check(const std::vector<double>& phi, const std::vector<double>& inner,
                                         const std::vector<double>& betas) {
    const std::size_t count = betas.size();
    if (phi.size() != count + 1 || inner.size() != count || count == 0) {
        throw InvalidArgument("recursion inputs are misaligned");
    }
    const double beta_max = *std::max_element(betas.begin(), betas.end());
    const double beta_min = *std::min_element(betas.begin(), betas.end());
    const double phi_max = *std::max_element(phi.begin(), phi.end());
    const double c1_max = 1.0 / beta_max;

    auto required_c2 = [&](double c1, std::size_t n0) {
        double need = 0.0;
        for (std::size_t m = n0; m < count; ++m) {
            const double slack = phi[m + 1] - (1.0 - c1 * betas[m]) * phi[m] - inner[m];
            need = std::max(need, slack / (betas[m] * betas[m]));
        }
        return need;
    };

    // Geometric grid of candidate C1 values, largest first.
    std::vector<double> grid;
    for (int k = 0; k <= 60; ++k) {
        grid.push_back(c1_max * std::pow(10.0, -k / 10.0));
    }

    for (std::size_t n0 = 0; n0 <= count / 2; ++n0) {
        const double c2_min = required_c2(0.0, n0);
        if (!(c2_min <= kRecursionC2Cap)) {
            continue;
        }
        const double allowance = 2.0 * c2_min + 1e-12 * (1.0 + phi_max) / (beta_min * beta_min);
        RecursionFit fit{grid.back(), required_c2(grid.back(), n0), n0};
        for (double c1 : grid) {
            const double c2 = required_c2(c1, n0);
            if (c2 <= allowance) {
                fit = RecursionFit{c1, c2, n0};
                break;
            }
        }
        if (fit.C2 <= kRecursionC2Cap) {
            return fit;
        }
    }
    throw RecursionInfeasible("no (C1, C2 <= " + std::to_string(kRecursionC2Cap) +
                              ") satisfies the one-step recursion from any n0 up to half the trace");
}

void write_report(std::ostream& out, const AssumptionReport& r) {
    out << std::setprecision(10);
    out << "problem = " << r.problem << '\n';
    out << "lipschitz_L = " << r.lipschitz_L << '\n';
    out << "lyapunov_p = " << r.lyapunov.p << '\n';
    out << "samples = " << r.lyapunov.samples << '\n';
    out << "smoothness_C = " << r.lyapunov.smoothness_C.value << '\n';
    out << "positive_definite = " << (r.lyapunov.positive_definite ? "true" : "false") << '\n';
    out << "homogeneity_error = " << r.lyapunov.homogeneity_error << '\n';
    out << "norm_equiv_dual_pairing_C = " << r.lyapunov.dual_pairing_C << '\n';
    out << "norm_equiv_upper_C = " << r.lyapunov.norm_upper_C << '\n';
    out << "norm_equiv_lower_C = " << r.lyapunov.norm_lower_C << '\n';
    out << "drift_eta = " << r.lyapunov.drift_eta.value << '\n';
    out << "analytic_eta = " << r.analytic_eta << '\n';
    if (r.gamma_prime > 0.0) {
        out << "gamma_prime = " << r.gamma_prime << '\n';
    }
    out << "growth_C1 = " << r.growth.C_e1 << '\n';
    out << "growth_C2 = " << r.growth.C_e2 << '\n';
    out << "growth_trend_e1 = " << r.growth.trend_e1 << '\n';
    out << "growth_trend_e2 = " << r.growth.trend_e2 << '\n';
    out << "growth_ok = " << (r.growth_ok ? "true" : "false") << '\n';
    out << "mds_analytic_violation = " << r.mds.analytic_violation << '\n';
    out << "mds_max_violation = " << r.mds.mc_max_z << '\n';
    out << "mds_mc_samples = " << r.mds.mc_samples << '\n';
    out << "recursion_C1 = " << r.recursion.C1 << '\n';
    out << "recursion_C2 = " << r.recursion.C2 << '\n';
    out << "recursion_n0 = " << r.recursion.n0 << '\n';
    out << "recursion_ok = " << (r.recursion_ok ? "true" : "false") << '\n';
    out << "verdict = " << (r.passed() ? "pass" : "fail") << '\n';
    for (const auto& failure : r.failures) {
        out << "failure = " << failure << '\n';
    }
}

}  // namespace almostsure::sa
