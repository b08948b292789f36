#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "almostsure/errors.hpp"
#include "almostsure/harness.hpp"
#include "almostsure/markov_core.hpp"
#include "almostsure/trajectory.hpp"

using namespace almostsure;
using namespace almostsure::markov;

namespace {

StochasticMatrix chain(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) {
            m(i, j++) = v;
        }
        ++i;
    }
    return validate_stochastic(m);
}

Vector random_simplex(std::size_t n, trajectory::Xoshiro256ss& rng) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = -std::log(1.0 - rng.uniform());
    }
    return v / v.sum();
}

}  // namespace

TEST(ValidateStochastic, AcceptsIdentityAndSimpleChain) {
    EXPECT_NO_THROW(validate_stochastic(Matrix::Identity(2, 2)));
    EXPECT_NO_THROW(chain({{0.9, 0.1}, {0.5, 0.5}}));
}

TEST(ValidateStochastic, RejectsBadRows) {
    Matrix m(2, 2);
    m << 0.9, 0.2, 0.5, 0.5;
    EXPECT_THROW(validate_stochastic(m, 1e-9), RowSumMismatch);
    m << 1.1, -0.1, 0.5, 0.5;
    EXPECT_THROW(validate_stochastic(m, 1e-9), NegativeEntry);
    EXPECT_THROW(validate_stochastic(Matrix(2, 3)), InvalidArgument);
}

TEST(ValidateStochastic, RenormalizesWithinTolerance) {
    Matrix m(2, 2);
    m << 0.5 + 1e-11, 0.5, 0.25, 0.75;
    const auto p = validate_stochastic(m, 1e-9);
    EXPECT_NEAR(p.rows().row(0).sum(), 1.0, 1e-15);
}

TEST(Structure, IrreducibilityExamples) {
    EXPECT_FALSE(is_irreducible(validate_stochastic(Matrix::Identity(2, 2))));
    EXPECT_TRUE(is_irreducible(chain({{0, 1}, {1, 0}})));
    EXPECT_TRUE(is_irreducible(chain({{0.5, 0.5}, {0.5, 0.5}})));
}

TEST(Structure, AperiodicityExamples) {
    EXPECT_FALSE(is_aperiodic(chain({{0, 1}, {1, 0}})));
    EXPECT_EQ(period(chain({{0, 1}, {1, 0}}), 0), 2U);
    EXPECT_TRUE(is_aperiodic(chain({{0.5, 0.5}, {0.5, 0.5}})));
    EXPECT_TRUE(is_aperiodic(chain({{1.0}})));
    EXPECT_EQ(period(chain({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}), 1), 3U);
}

TEST(Structure, VerdictsDependOnlyOnSupport) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto p = harness::random_ergodic_matrix(6, seed, 0.6);
        auto rng = trajectory::rng_stream(seed, 5);
        Matrix scaled = p.rows();
        for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
            scaled.row(i) *= 0.5 + rng.uniform();
            for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
                scaled(i, j) *= 0.2 + rng.uniform();
            }
            scaled.row(i) /= scaled.row(i).sum();
        }
        const auto q = validate_stochastic(scaled);
        EXPECT_EQ(is_irreducible(p), is_irreducible(q));
        EXPECT_EQ(is_aperiodic(p), is_aperiodic(q));
    }
}

TEST(Doeblin, UniformRowsGiveOneStepCertificate) {
    const auto cert = doeblin_certificate(chain({{0.5, 0.5}, {0.5, 0.5}}));
    ASSERT_TRUE(cert.has_value());
    EXPECT_EQ(cert->power_N, 1U);
    EXPECT_NEAR(cert->epsilon, 1.0, 1e-11);
    EXPECT_LT(cert->epsilon, 1.0);
    EXPECT_NEAR(cert->minorizing_measure[0], 0.5, 1e-15);
}

TEST(Doeblin, PeriodicChainIsAbsent) {
    EXPECT_FALSE(doeblin_certificate(chain({{0, 1}, {1, 0}})).has_value());
    EXPECT_FALSE(doeblin_certificate(validate_stochastic(Matrix::Identity(3, 3))).has_value());
}

TEST(Doeblin, TwoStateChain) {
    const auto cert = doeblin_certificate(chain({{0.9, 0.1}, {0.5, 0.5}}));
    ASSERT_TRUE(cert.has_value());
    EXPECT_EQ(cert->power_N, 1U);
    EXPECT_NEAR(cert->epsilon, 0.6, 1e-15);
    EXPECT_NEAR(cert->minorizing_measure[0], 5.0 / 6.0, 1e-15);
    EXPECT_NEAR(cert->minorizing_measure[1], 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(contraction_factor(*cert), 0.4, 1e-15);
}

TEST(Doeblin, NeedsHigherPowerForSparseChain) {
    const auto p = chain({{0.5, 0.5, 0}, {0, 0, 1}, {1, 0, 0}});
    const auto cert = doeblin_certificate(p);
    ASSERT_TRUE(cert.has_value());
    EXPECT_GT(cert->power_N, 1U);
    EXPECT_LE(cert->power_N, 5U);
    const Matrix q = matrix_power(p.rows(), cert->power_N);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            EXPECT_GE(q(i, j) + 1e-12, cert->epsilon * cert->minorizing_measure[static_cast<std::size_t>(j)]);
        }
    }
}

TEST(Doeblin, ContractionOnTwoStateChain) {
    const auto p = chain({{0.9, 0.1}, {0.5, 0.5}});
    auto rng = trajectory::rng_stream(7, 0);
    for (int k = 0; k < 1000; ++k) {
        const Vector mu = random_simplex(2, rng);
        const Vector nu = random_simplex(2, rng);
        const Vector d = mu - nu;
        const Vector moved = (d.transpose() * p.rows()).transpose();
        EXPECT_LE(moved.lpNorm<1>(), 0.4 * d.lpNorm<1>() + 1e-15);
    }
}

TEST(Stationary, Examples) {
    const auto u = stationary_distribution(chain({{0.5, 0.5}, {0.5, 0.5}}));
    EXPECT_NEAR(u[0], 0.5, 1e-13);
    const auto mu = stationary_distribution(chain({{0.9, 0.1}, {0.5, 0.5}}));
    EXPECT_NEAR(mu[0], 5.0 / 6.0, 1e-12);
    EXPECT_NEAR(mu[1], 1.0 / 6.0, 1e-12);
    const auto same_rows = stationary_distribution(chain({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}}));
    EXPECT_NEAR(same_rows[2], 0.5, 1e-13);
}

TEST(Stationary, RejectsNonErgodic) {
    EXPECT_THROW(stationary_distribution(chain({{0, 1}, {1, 0}})), NotErgodic);
    EXPECT_THROW(stationary_distribution(validate_stochastic(Matrix::Identity(2, 2))), NotErgodic);
}

TEST(Stationary, UniqueFromRandomStarts) {
    const auto p = harness::random_ergodic_matrix(7, 3);
    auto rng = trajectory::rng_stream(3, 9);
    const Vector first = stationary_distribution_from(p, StochasticVec::from(random_simplex(7, rng)), 1e-13).probs();
    for (int k = 0; k < 9; ++k) {
        const Vector other =
            stationary_distribution_from(p, StochasticVec::from(random_simplex(7, rng)), 1e-13).probs();
        EXPECT_LE(l1_distance(first, other), 1e-8);
    }
}

TEST(Stationary, MatchesLinearSolveOnRandomChains) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 1 + seed % 10;
        const auto p = harness::random_ergodic_matrix(n, seed);
        const Vector mu = stationary_distribution(p).probs();
        EXPECT_LE(l1_distance(mu, stationary_by_linear_solve(p)), 1e-8) << "seed " << seed;
    }
}

TEST(Mixing, TwoStateRate) {
    const auto mix = mixing_certificate(chain({{0.9, 0.1}, {0.5, 0.5}}), 100);
    EXPECT_NEAR(mix.rate_rho, 0.4, 1e-12);
    EXPECT_EQ(mix.horizon_checked, 100U);
    EXPECT_LE(mix.worst_margin, 1e-12);
}

TEST(Mixing, OneStepMixing) {
    const auto mix = mixing_certificate(chain({{0.5, 0.5}, {0.5, 0.5}}), 10);
    EXPECT_LT(mix.rate_rho, 1e-3);
    EXPECT_LE(mix.worst_margin, 1e-12);
}

TEST(Mixing, PeriodicChainFailsUpstream) {
    EXPECT_THROW(mixing_certificate(chain({{0, 1}, {1, 0}}), 10), NotErgodic);
}

TEST(MatrixIo, RoundTrip) {
    const auto p = chain({{0.9, 0.1}, {0.5, 0.5}});
    std::stringstream buf;
    write_matrix(buf, p.rows());
    const Matrix back = read_matrix(buf);
    EXPECT_EQ(back, p.rows());
}

TEST(MatrixIo, MalformedRowNamesLine) {
    std::istringstream in("2\n0.5 0.5\n0.5\n");
    try {
        read_matrix(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(MatrixIo, CertificateKeys) {
    const auto cert = doeblin_certificate(chain({{0.9, 0.1}, {0.5, 0.5}}));
    std::ostringstream out;
    write_certificate(out, *cert);
    for (const char* key : {"power_N", "epsilon", "nu", "checked_at_tolerance"}) {
        EXPECT_NE(out.str().find(key), std::string::npos) << key;
    }
}
