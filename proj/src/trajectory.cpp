#include "almostsure/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "almostsure/errors.hpp"

namespace almostsure::trajectory {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t SplitMix64::next() noexcept {
    state_ += kGolden;
    return mix64(state_);
}

Xoshiro256ss::Xoshiro256ss(std::uint64_t seed) noexcept {
    SplitMix64 sm(seed);
    for (auto& word : s_) {
        word = sm.next();
    }
}

std::uint64_t Xoshiro256ss::next() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Xoshiro256ss::normal() noexcept {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Xoshiro256ss rng_stream(std::uint64_t seed, std::uint64_t stream_index) {
    return Xoshiro256ss(mix64(seed ^ mix64(stream_index + kGolden)));
}

CategoricalTable::CategoricalTable(const Matrix& rows) {
    cumulative_.resize(static_cast<std::size_t>(rows.rows()));
    last_positive_.resize(cumulative_.size(), 0);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        auto& c = cumulative_[static_cast<std::size_t>(i)];
        c.resize(static_cast<std::size_t>(rows.cols()));
        double acc = 0.0;
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            acc += rows(i, j);
            c[static_cast<std::size_t>(j)] = acc;
            if (rows(i, j) > 0.0) {
                last_positive_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
            }
        }
    }
}

CategoricalTable::CategoricalTable(const markov::StochasticVec& v)
    : CategoricalTable(Matrix(v.probs().transpose())) {}

std::size_t CategoricalTable::sample(std::size_t row, Xoshiro256ss& rng) const {
    const auto& c = cumulative_[row];
    const double u = rng.uniform();
    const auto it = std::upper_bound(c.begin(), c.end(), u);
    if (it == c.end()) {
        // Row sum rounded below u; fall back to the last atom.
        return last_positive_[row];
    }
    return static_cast<std::size_t>(it - c.begin());
}

SamplePath sample_path(const PathSpec& spec) {
    if (spec.kernel.size() != spec.init.size()) {
        throw InvalidArgument("kernel and initial distribution dimensions differ");
    }
    const CategoricalTable kernel(spec.kernel);
    const CategoricalTable init(spec.init);
    auto rng = rng_stream(spec.seed, 0);

    SamplePath path;
    path.seed = spec.seed;
    path.states.resize(spec.horizon + 1);
    path.states[0] = init.sample(0, rng);
    for (std::size_t t = 0; t < spec.horizon; ++t) {
        path.states[t + 1] = kernel.sample(path.states[t], rng);
    }
    return path;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_iid_pairs(const markov::StochasticVec& d_pi,
                                                                   const markov::StochasticMatrix& p_pi,
                                                                   std::size_t count,
                                                                   std::uint64_t seed) {
    if (d_pi.size() != p_pi.size()) {
        throw InvalidArgument("stationary law and kernel dimensions differ");
    }
    const CategoricalTable first(d_pi);
    const CategoricalTable second(p_pi);
    auto rng = rng_stream(seed, 0);
    std::vector<std::pair<std::size_t, std::size_t>> out(count);
    for (auto& [s, s_next] : out) {
        s = first.sample(0, rng);
        s_next = second.sample(s, rng);
    }
    return out;
}

SamplePath sample_iid_path(const markov::StochasticVec& law, std::size_t horizon, std::uint64_t seed) {
    const CategoricalTable table(law);
    auto rng = rng_stream(seed, 0);
    SamplePath path;
    path.seed = seed;
    path.states.resize(horizon + 1);
    for (auto& s : path.states) {
        s = table.sample(0, rng);
    }
    return path;
}

void write_path_csv(std::ostream& out, const SamplePath& path) {
    out << "t,state\n";
    for (std::size_t t = 0; t < path.states.size(); ++t) {
        out << t << ',' << path.states[t] << '\n';
    }
}

std::uint64_t parse_seed(const std::string& text) {
    if (text.empty()) {
        throw ParseError("empty seed");
    }
    const bool hex = text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X');
    const std::string digits = hex ? text.substr(2) : text;
    const int base = hex ? 16 : 10;
    if (digits.empty() || digits.find_first_of("+- ") != std::string::npos) {
        throw ParseError("invalid seed '" + text + "'");
    }
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(digits, &used, base);
        if (used != digits.size()) {
            throw ParseError("invalid seed '" + text + "'");
        }
        return static_cast<std::uint64_t>(v);
    } catch (const std::logic_error&) {
        throw ParseError("invalid seed '" + text + "'");
    }
}

}  // namespace almostsure::trajectory
