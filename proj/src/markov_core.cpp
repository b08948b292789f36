#include "almostsure/markov_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "almostsure/errors.hpp"

namespace almostsure::markov {

namespace {

using Graph = std::vector<std::vector<std::size_t>>;

Graph adjacency(const StochasticMatrix& p, bool reversed) {
    const std::size_t n = p.size();
    Graph g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (p(i, j) > kSupportThreshold) {
                if (reversed) {
                    g[j].push_back(i);
                } else {
                    g[i].push_back(j);
                }
            }
        }
    }
    return g;
}

// Iterative DFS post-order, used by Kosaraju.
void post_order(const Graph& g, std::size_t root, std::vector<bool>& seen,
                std::vector<std::size_t>& order) {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    seen[root] = true;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < g[node].size()) {
            const std::size_t child = g[node][next++];
            if (!seen[child]) {
                seen[child] = true;
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

std::size_t checked_size(const Matrix& m) {
    if (m.rows() == 0 || m.rows() != m.cols()) {
        throw InvalidArgument("stochastic matrix must be square and nonempty, got " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    return static_cast<std::size_t>(m.rows());
}

}  // namespace

StochasticVec StochasticVec::from(Vector probs, double tol) {
    if (probs.size() == 0) {
        throw InvalidArgument("stochastic vector must be nonempty");
    }
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(probs(i))) {
            throw InvalidArgument("stochastic vector entry " + std::to_string(i) + " is not finite");
        }
        if (probs(i) < -tol) {
            throw NegativeEntry("entry " + std::to_string(i) + " = " + std::to_string(probs(i)));
        }
        probs(i) = std::max(probs(i), 0.0);
    }
    const double sum = probs.sum();
    if (std::abs(sum - 1.0) > tol) {
        std::ostringstream msg;
        msg << std::setprecision(17) << "entries sum to " << sum;
        throw RowSumMismatch(msg.str());
    }
    probs /= sum;
    return StochasticVec(std::move(probs));
}

StochasticVec StochasticVec::uniform(std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("uniform distribution over an empty set");
    }
    return StochasticVec(Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

StochasticVec StochasticVec::point_mass(std::size_t n, std::size_t at) {
    if (at >= n) {
        throw InvalidArgument("point mass index out of range");
    }
    Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
    v(static_cast<Eigen::Index>(at)) = 1.0;
    return StochasticVec(std::move(v));
}

StochasticVec StochasticMatrix::row(std::size_t i) const {
    return StochasticVec::from(rows_.row(static_cast<Eigen::Index>(i)).transpose());
}

StochasticMatrix validate_stochastic(Matrix m, double tol) {
    const std::size_t n = checked_size(m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!std::isfinite(m(r, j))) {
                throw InvalidArgument("entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                      ") is not finite");
            }
            if (m(r, j) < -tol) {
                std::ostringstream msg;
                msg << "entry (" << i << ", " << j << ") = " << m(r, j);
                throw NegativeEntry(msg.str());
            }
            m(r, j) = std::max(m(r, j), 0.0);
        }
        const double sum = m.row(r).sum();
        if (std::abs(sum - 1.0) > tol) {
            std::ostringstream msg;
            msg << std::setprecision(17) << "row " << i << " sums to " << sum;
            throw RowSumMismatch(msg.str());
        }
        m.row(r) /= sum;
    }
    return StochasticMatrix(std::move(m));
}

std::vector<std::vector<bool>> support_pattern(const StochasticMatrix& p) {
    const std::size_t n = p.size();
    std::vector<std::vector<bool>> s(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s[i][j] = p(i, j) > kSupportThreshold;
        }
    }
    return s;
}

std::vector<std::size_t> strongly_connected_components(const StochasticMatrix& p) {
    const std::size_t n = p.size();
    const Graph forward = adjacency(p, false);
    const Graph backward = adjacency(p, true);

    std::vector<bool> seen(n, false);
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (!seen[s]) {
            post_order(forward, s, seen, order);
        }
    }

    constexpr auto kUnassigned = static_cast<std::size_t>(-1);
    std::vector<std::size_t> component(n, kUnassigned);
    std::size_t next_id = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (component[*it] != kUnassigned) {
            continue;
        }
        std::vector<std::size_t> stack{*it};
        component[*it] = next_id;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t pred : backward[node]) {
                if (component[pred] == kUnassigned) {
                    component[pred] = next_id;
                    stack.push_back(pred);
                }
            }
        }
        ++next_id;
    }
    return component;
}

bool is_irreducible(const StochasticMatrix& p) {
    const auto comp = strongly_connected_components(p);
    return std::all_of(comp.begin(), comp.end(), [&](std::size_t c) { return c == comp[0]; });
}

std::size_t period(const StochasticMatrix& p, std::size_t state) {
    const std::size_t n = p.size();
    if (state >= n) {
        throw InvalidArgument("state index out of range");
    }
    // BFS levels inside the component of `state`; the period is the gcd of
    // level[u] + 1 - level[v] over every edge u -> v of the component.
    const auto comp = strongly_connected_components(p);
    const Graph g = adjacency(p, false);
    constexpr auto kUnseen = static_cast<std::size_t>(-1);
    std::vector<std::size_t> level(n, kUnseen);
    std::vector<std::size_t> queue{state};
    level[state] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t u = queue[head];
        for (std::size_t v : g[u]) {
            if (comp[v] == comp[state] && level[v] == kUnseen) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    std::size_t d = 0;
    for (std::size_t u : queue) {
        for (std::size_t v : g[u]) {
            if (comp[v] != comp[state]) {
                continue;
            }
            const auto diff = static_cast<long long>(level[u]) + 1 - static_cast<long long>(level[v]);
            d = std::gcd(d, static_cast<std::size_t>(std::llabs(diff)));
        }
    }
    return d;
}

bool is_aperiodic(const StochasticMatrix& p) {
    for (std::size_t s = 0; s < p.size(); ++s) {
        if (period(p, s) != 1) {
            return false;
        }
    }
    return true;
}

bool is_ergodic(const StochasticMatrix& p) {
    return is_irreducible(p) && is_aperiodic(p);
}

std::optional<DoeblinCertificate> doeblin_certificate(const StochasticMatrix& p) {
    const std::size_t n = p.size();
    const std::size_t bound = (n - 1) * (n - 1) + 1;
    const auto support = support_pattern(p);

    // Search powers on the boolean support pattern alongside the numeric power.
    std::vector<std::vector<bool>> pattern = support;
    Matrix q = p.rows();
    for (std::size_t power = 1; power <= bound; ++power) {
        bool all_positive = true;
        for (std::size_t i = 0; i < n && all_positive; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (!pattern[i][j]) {
                    all_positive = false;
                    break;
                }
            }
        }
        if (all_positive) {
            const Vector column_min = q.colwise().minCoeff().transpose();
            if ((column_min.array() > 0.0).all()) {
                const double sum = column_min.sum();
                DoeblinCertificate cert;
                cert.power_N = power;
                cert.minorizing_measure = StochasticVec::from(column_min / sum, 1e-9);
                cert.epsilon = sum >= 1.0 ? 1.0 - 1e-12 : sum;
                return cert;
            }
        }
        if (power == bound) {
            break;
        }
        std::vector<std::vector<bool>> next(n, std::vector<bool>(n, false));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                if (!pattern[i][k]) {
                    continue;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    next[i][j] = next[i][j] || support[k][j];
                }
            }
        }
        pattern = std::move(next);
        q = q * p.rows();
    }
    return std::nullopt;
}

double contraction_factor(const DoeblinCertificate& cert) {
    return 1.0 - cert.epsilon;
}

Matrix matrix_power(const Matrix& m, std::size_t k) {
    Matrix result = Matrix::Identity(m.rows(), m.cols());
    Matrix base = m;
    while (k > 0) {
        if (k & 1U) {
            result = result * base;
        }
        k >>= 1U;
        if (k > 0) {
            base = base * base;
        }
    }
    return result;
}

StochasticMatrix restrict_to(const StochasticMatrix& p, const std::vector<std::size_t>& states) {
    const auto k = static_cast<Eigen::Index>(states.size());
    Matrix sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            sub(i, j) = p(states[static_cast<std::size_t>(i)], states[static_cast<std::size_t>(j)]);
        }
    }
    try {
        return validate_stochastic(std::move(sub), 1e-10);
    } catch (const RowSumMismatch& e) {
        throw InvalidArgument(std::string("restriction is not a closed set: ") + e.what());
    }
}

double l1_distance(const Vector& a, const Vector& b) {
    return (a - b).lpNorm<1>();
}

StochasticVec stationary_distribution(const StochasticMatrix& p, double tol) {
    return stationary_distribution_from(p, StochasticVec::uniform(p.size()), tol);
}

StochasticVec stationary_distribution_from(const StochasticMatrix& p, const StochasticVec& start,
                                           double tol) {
    if (start.size() != p.size()) {
        throw InvalidArgument("starting distribution has the wrong dimension");
    }
    if (!is_ergodic(p)) {
        throw NotErgodic("stationary distribution requires an irreducible aperiodic chain");
    }
    const auto cert = doeblin_certificate(p);
    if (!cert) {
        throw NotErgodic("no Doeblin minorization within the Wielandt bound");
    }
    const Matrix q = matrix_power(p.rows(), cert->power_N);
    const double k = contraction_factor(*cert);

    // Enough contractions to drive the l1 gap from 2 below tol, plus slack
    // for the rounding floor; at least a few hundred sweeps.
    const double needed = k > 0.0 ? std::log(tol / 2.0) / std::log(k) : 1.0;
    const auto budget = static_cast<std::size_t>(std::min(1e7, std::max(500.0, 4.0 * needed)));

    Eigen::RowVectorXd mu = start.probs().transpose();
    for (std::size_t iter = 0; iter < budget; ++iter) {
        const Eigen::RowVectorXd one_step = mu * p.rows();
        if ((one_step - mu).lpNorm<1>() <= tol) {
            return StochasticVec::from(mu.transpose(), 1e-9);
        }
        mu = mu * q;
        mu /= mu.sum();
    }
    std::ostringstream msg;
    msg << "fixed-point iteration did not reach residual " << tol << " in " << budget << " sweeps";
    throw NoConvergence(msg.str());
}

Vector stationary_by_linear_solve(const StochasticMatrix& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    // Stack (P - I)^T mu = 0 with the normalization row 1^T mu = 1.
    Matrix system(n + 1, n);
    system.topRows(n) = (p.rows() - Matrix::Identity(n, n)).transpose();
    system.row(n).setOnes();
    Vector rhs = Vector::Zero(n + 1);
    rhs(n) = 1.0;
    return system.colPivHouseholderQr().solve(rhs);
}

MixingCertificate mixing_certificate(const StochasticMatrix& p, std::size_t horizon) {
    if (!is_ergodic(p)) {
        throw NotErgodic("mixing certificate requires an irreducible aperiodic chain");
    }
    const auto cert = doeblin_certificate(p);
    if (!cert) {
        throw NotErgodic("no Doeblin minorization within the Wielandt bound");
    }
    const Vector mu = stationary_distribution(p).probs();
    const double k = contraction_factor(*cert);
    const double n_power = static_cast<double>(cert->power_N);

    MixingCertificate out;
    out.rate_rho = std::pow(k, 1.0 / n_power);
    out.prefactor_C = 2.0 / std::pow(out.rate_rho, n_power);
    out.horizon_checked = horizon;
    out.worst_margin = -std::numeric_limits<double>::infinity();

    // Absolute slack for the floating-point floor once the true distance is 0.
    constexpr double kSlack = 1e-12;
    const std::size_t n = p.size();
    Matrix dist = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t <= horizon; ++t) {
        const double envelope = out.prefactor_C * std::pow(out.rate_rho, static_cast<double>(t));
        for (std::size_t s = 0; s < n; ++s) {
            const double d = (dist.row(static_cast<Eigen::Index>(s)).transpose() - mu).lpNorm<1>();
            out.worst_margin = std::max(out.worst_margin, d - envelope);
            if (d > envelope + kSlack) {
                std::ostringstream msg;
                msg << "mixing envelope violated at t=" << t << " from state " << s << ": " << d
                    << " > " << envelope;
                throw EnvelopeViolated(msg.str());
            }
        }
        dist = dist * p.rows();
    }
    return out;
}

Matrix read_matrix(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                return true;
            }
        }
        return false;
    };
    if (!next_line()) {
        throw ParseError("line 1: missing dimension");
    }
    long long n = 0;
    {
        std::istringstream header(line);
        std::string extra;
        if (!(header >> n) || n <= 0 || (header >> extra)) {
            throw ParseError("line " + std::to_string(line_no) + ": expected a positive dimension");
        }
    }
    Matrix m(n, n);
    for (long long i = 0; i < n; ++i) {
        if (!next_line()) {
            throw ParseError("line " + std::to_string(line_no + 1) + ": expected row " +
                             std::to_string(i) + ", found end of file");
        }
        std::istringstream row(line);
        std::vector<double> values;
        std::string token;
        while (row >> token) {
            try {
                std::size_t used = 0;
                const double v = std::stod(token, &used);
                if (used != token.size()) {
                    throw std::invalid_argument(token);
                }
                values.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": '" + token +
                                 "' is not a decimal number");
            }
        }
        if (static_cast<long long>(values.size()) != n) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(n) +
                             " entries, found " + std::to_string(values.size()));
        }
        for (long long j = 0; j < n; ++j) {
            m(i, j) = values[static_cast<std::size_t>(j)];
        }
    }
    if (next_line()) {
        throw ParseError("line " + std::to_string(line_no) + ": unexpected trailing content");
    }
    return m;
}

Matrix read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open matrix file '" + path + "'");
    }
    return read_matrix(in);
}

void write_matrix(std::ostream& out, const Matrix& m) {
    out << m.rows() << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? " " : "") << m(i, j);
        }
        out << '\n';
    }
}

void write_certificate(std::ostream& out, const DoeblinCertificate& cert) {
    out << std::setprecision(17);
    out << "power_N = " << cert.power_N << '\n';
    out << "epsilon = " << cert.epsilon << '\n';
    out << "nu =";
    for (std::size_t j = 0; j < cert.minorizing_measure.size(); ++j) {
        out << ' ' << cert.minorizing_measure[j];
    }
    out << '\n';
    out << "checked_at_tolerance = " << cert.checked_at_tolerance << '\n';
}

}  // namespace almostsure::markov
