#include <gtest/gtest.h>

#include <map>

#include "polent/random.hpp"

using namespace polent;

namespace {

TEST(Rng, EngineIsTheStandardMersenneTwister) {
  // 10000th output of a default-constructed mt19937_64, fixed by the standard.
  std::mt19937_64 e;
  e.discard(9999);
  EXPECT_EQ(e(), 9981545732273789042ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double m = 0.01 * i;
    const auto x = a.poisson(m);
    EXPECT_EQ(x, b.poisson(m));
    differs |= x != c.poisson(m);
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::map<std::uint64_t, int> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t i = 0; i < 200; ++i) ++seen[derive_seed(s, i)];
  EXPECT_EQ(seen.size(), 4000u);
}

TEST(Poisson, ZeroMeanIsZero) {
  Rng r(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r.poisson(0.0), 0u);
}

TEST(Poisson, RejectsBadMean) {
  Rng r(1);
  EXPECT_THROW(r.poisson(-1.0), DomainError);
  EXPECT_THROW(r.poisson(std::nan("")), DomainError);
}

class PoissonMoments : public ::testing::TestWithParam<double> {};

TEST_P(PoissonMoments, MeanAndVarianceWithinFourSigma) {
  const double mu = GetParam();
  Rng r(static_cast<std::uint64_t>(mu * 1000) + 17);
  const int n = 40000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(r.poisson(mu));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  EXPECT_NEAR(mean, mu, 4.0 * std::sqrt(mu / n));
  // Var of the sample variance ~ (mu + 2 mu^2) / n for Poisson.
  EXPECT_NEAR(var, mu, 4.0 * std::sqrt((mu + 2.0 * mu * mu) / n));
}

INSTANTIATE_TEST_SUITE_P(Means, PoissonMoments,
                         ::testing::Values(0.05, 0.7, 3.0, 9.99, 10.0, 37.5, 1524.0, 2.5e6));

class PoissonShape : public ::testing::TestWithParam<double> {};

// Chi-square goodness of fit against the exact pmf, bins with expectation < 5 merged.
TEST_P(PoissonShape, ChiSquare) {
  const double mu = GetParam();
  const int n = 50000;
  Rng r(99);
  std::map<std::uint64_t, int> hist;
  for (int i = 0; i < n; ++i) ++hist[r.poisson(mu)];

  const int kmax = static_cast<int>(mu + 12.0 * std::sqrt(mu) + 12);
  std::vector<double> expected(static_cast<std::size_t>(kmax + 1));
  std::vector<double> observed(expected.size());
  for (int k = 0; k <= kmax; ++k) {
    expected[static_cast<std::size_t>(k)] =
        n * std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0));
    observed[static_cast<std::size_t>(k)] = hist.count(static_cast<std::uint64_t>(k)) ? hist[static_cast<std::uint64_t>(k)] : 0;
  }
  double chi2 = 0.0, e_acc = 0.0, o_acc = 0.0;
  int dof = -1;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    e_acc += expected[k];
    o_acc += observed[k];
    if (e_acc >= 5.0) {
      chi2 += (o_acc - e_acc) * (o_acc - e_acc) / e_acc;
      ++dof;
      e_acc = o_acc = 0.0;
    }
  }
  // Loose bound: mean dof, sd sqrt(2 dof); 5 sd keeps false alarms negligible.
  EXPECT_LT(chi2, dof + 5.0 * std::sqrt(2.0 * dof)) << "dof " << dof;
}

INSTANTIATE_TEST_SUITE_P(Means, PoissonShape, ::testing::Values(0.5, 4.0, 12.0, 60.0, 400.0));

}  // namespace
