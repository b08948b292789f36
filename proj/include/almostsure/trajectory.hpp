#pragma once

// Seeded sample paths from finite Markov kernels.
//
// Generator: xoshiro256** (Blackman & Vigna), state seeded from SplitMix64.
// Stream derivation for (seed, index):
//   key   = mix64(seed ^ mix64(index + 0x9E3779B97F4A7C15))
//   state = four successive SplitMix64 outputs starting from `key`
// Uniform doubles are (next() >> 11) * 2^-53, i.e. in [0, 1).
// Categorical draws use inverse-CDF over left-to-right cumulative sums and
// pick the first index i with u < c_i, so a draw equal to a boundary goes
// to the higher index.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "almostsure/markov_core.hpp"

namespace almostsure::trajectory {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}
    std::uint64_t next() noexcept;

private:
    std::uint64_t state_;
};

class Xoshiro256ss {
public:
    using result_type = std::uint64_t;

    /// Seeds the four state words from SplitMix64(seed).
    explicit Xoshiro256ss(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }
    result_type next() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (no cached second value).
    double normal() noexcept;

private:
    std::uint64_t s_[4];
};

/// Independent, reproducible generator for (seed, stream_index).
Xoshiro256ss rng_stream(std::uint64_t seed, std::uint64_t stream_index);

/// Inverse-CDF sampler for the rows of a stochastic matrix.
class CategoricalTable {
public:
    explicit CategoricalTable(const Matrix& rows);
    explicit CategoricalTable(const markov::StochasticMatrix& p) : CategoricalTable(p.rows()) {}
    explicit CategoricalTable(const markov::StochasticVec& v);

    std::size_t sample(std::size_t row, Xoshiro256ss& rng) const;
    std::size_t rows() const noexcept { return cumulative_.size(); }

private:
    std::vector<std::vector<double>> cumulative_;
    std::vector<std::size_t> last_positive_;
};

struct PathSpec {
    markov::StochasticMatrix kernel;
    markov::StochasticVec init;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
};

/// Finite prefix X_0 .. X_horizon of the chain.
struct SamplePath {
    std::vector<std::size_t> states;
    std::uint64_t seed = 0;

    std::size_t horizon() const noexcept { return states.empty() ? 0 : states.size() - 1; }
};

/// X_0 ~ init, X_{t+1} ~ kernel[X_t]; bit-identical for identical specs.
SamplePath sample_path(const PathSpec& spec);

/// Independent (S, S') with S ~ d_pi and S' ~ P_pi[S].
std::vector<std::pair<std::size_t, std::size_t>> sample_iid_pairs(const markov::StochasticVec& d_pi,
                                                                   const markov::StochasticMatrix& p_pi,
                                                                   std::size_t count,
                                                                   std::uint64_t seed);

/// Independent draws from a fixed law, laid out as a path of length count + 1.
SamplePath sample_iid_path(const markov::StochasticVec& law, std::size_t horizon, std::uint64_t seed);

void write_path_csv(std::ostream& out, const SamplePath& path);

/// Accepts decimal ("12345") or hexadecimal ("0x3039") text.
std::uint64_t parse_seed(const std::string& text);

}  // namespace almostsure::trajectory
