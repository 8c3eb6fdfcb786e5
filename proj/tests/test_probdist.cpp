#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"

namespace {

using namespace vcgan;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TEST(DiagonalGaussian, LogVarianceIsClamped) {
  DiagonalGaussian<double> d({0.0, 0.0}, {-50.0, 50.0});
  EXPECT_EQ(d.log_variance()[0], -10.0);
  EXPECT_EQ(d.log_variance()[1], 10.0);
  EXPECT_THROW(DiagonalGaussian<double>({0.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST(Reparameterize, KnownValue) {
  DiagonalGaussian<double> d({1.0, -2.0}, {std::log(4.0), 0.0});
  const std::vector<double> eps{0.5, -1.0};
  const auto z = reparameterize(d, std::span<const double>(eps));
  EXPECT_NEAR(z[0], 2.0, 1e-15);
  EXPECT_NEAR(z[1], -3.0, 1e-15);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(reparameterize(d, std::span<const double>(bad)), std::invalid_argument);
}

TEST(Reparameterize, SampleMomentsMatch) {
  const double mu = 0.7, sigma = 1.8;
  DiagonalGaussian<double> d({mu}, {2.0 * std::log(sigma)});
  Rng rng(31);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double e = rng.normal();
    const double z = reparameterize(d, std::span<const double>(&e, 1))[0];
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, mu, 4.0 * sigma / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(var), sigma, 0.01 * sigma);
}

TEST(KlDivergence, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(DiagonalGaussian<double>::standard(5)), 0.0);
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(DiagonalGaussian<double>({1.0}, {0.0})), 0.5);
}

TEST(KlDivergence, MonteCarloEstimateAgrees) {
  // mean 0, sigma 2: E_q[log q(z) - log p(z)] estimated from 1e6 draws.
  const double sigma = 2.0;
  const double closed = kl_to_standard_normal(DiagonalGaussian<double>({0.0}, {2.0 * std::log(sigma)}));
  EXPECT_NEAR(closed, 0.5 * (sigma * sigma - 1.0) - std::log(sigma), 1e-15);
  Rng rng(32);
  const int n = 1000000;
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const double e = rng.normal();
    const double z = sigma * e;
    acc += (-0.5 * e * e - std::log(sigma)) - (-0.5 * z * z);
  }
  EXPECT_NEAR(acc / n, closed, 0.01 * closed);
}

TEST(KlDivergence, TapeVersionMatchesValueVersion) {
  Tape<double> t;
  const Tensor<double> m(Shape{2, 2}, std::vector<double>{0.3, -1.0, 0.0, 2.0});
  const Tensor<double> lv(Shape{2, 2}, std::vector<double>{0.5, -0.2, 0.0, 1.0});
  auto kl = kl_to_standard_normal(t.constant(m), t.constant(lv));
  ASSERT_EQ(kl.shape(), (Shape{2}));
  for (std::size_t r = 0; r < 2; ++r) {
    DiagonalGaussian<double> d({m.at(r, 0), m.at(r, 1)}, {lv.at(r, 0), lv.at(r, 1)});
    EXPECT_NEAR(kl.value()[r], kl_to_standard_normal(d), 1e-14);
  }
}

TEST(Truncation, ParseAndPrint) {
  EXPECT_FALSE(TruncationRange::parse("none").truncated());
  EXPECT_FALSE(TruncationRange::parse("normal").truncated());
  EXPECT_EQ(TruncationRange::parse("1.5").multiplier(), 1.5);
  EXPECT_EQ(TruncationRange::parse("2sigma").multiplier(), 2.0);
  EXPECT_EQ(TruncationRange::sigma(0.5).to_string(), "0.5");
  EXPECT_THROW(TruncationRange::parse("-1"), std::invalid_argument);
  EXPECT_THROW(TruncationRange::parse("abc"), std::invalid_argument);
  EXPECT_THROW(TruncationRange::sigma(0.0), std::invalid_argument);
  EXPECT_EQ(TruncationRange::standard_sweep().size(), 5u);
}

TEST(Truncation, SamplesStayInsideTheBand) {
  DiagonalGaussian<double> d({0.5, -1.0, 2.0}, {0.0, std::log(0.25), std::log(9.0)});
  Rng rng(33);
  for (double m : {2.0, 1.5, 1.0, 0.5}) {
    const auto r = TruncationRange::sigma(m);
    for (int i = 0; i < 10000; ++i) {
      const auto z = sample_truncated(d, r, rng);
      for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(std::abs(z[j] - d.mean()[j]), m * d.stddev(j) + 1e-12);
    }
  }
}

// Replays the same stream to count raw draws per accepted draw.
double acceptance_rate(double m, int n) {
  Rng sampler(34), replay(34);
  const auto r = TruncationRange::sigma(m);
  long raw = 0;
  for (int i = 0; i < n; ++i) {
    const double x = truncated_standard_normal(r, sampler);
    double y;
    do {
      y = replay.normal();
      ++raw;
    } while (std::abs(y) > m);
    EXPECT_EQ(x, y);
  }
  return static_cast<double>(n) / static_cast<double>(raw);
}

TEST(Truncation, AcceptanceRatesMatchNormalMass) {
  for (double m : {2.0, 0.5}) {
    const double expected = std::erf(m / std::sqrt(2.0));
    EXPECT_NEAR(acceptance_rate(m, 100000), expected, 0.01 * expected) << m;
  }
  EXPECT_NEAR(std::erf(2.0 / std::sqrt(2.0)), 0.9545, 1e-4);
  EXPECT_NEAR(std::erf(0.5 / std::sqrt(2.0)), 0.3829, 1e-4);
}

TEST(Truncation, NoneIsPlainNormal) {
  Rng a(35), b(35);
  DiagonalGaussian<double> d({0.1, 0.2}, {0.3, -0.4});
  for (int i = 0; i < 100; ++i) {
    const auto z = sample_truncated(d, TruncationRange::none(), a);
    const std::vector<double> eps{b.normal(), b.normal()};
    EXPECT_EQ(z, reparameterize(d, std::span<const double>(eps)));
  }
}

TEST(Truncation, NoneHasGaussianDistribution) {
  Rng rng(36);
  const int n = 20000;
  std::vector<double> x(n);
  for (auto& v : x) v = truncated_standard_normal(TruncationRange::none(), rng);
  std::sort(x.begin(), x.end());
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    const double f = normal_cdf(x[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(n));  // 1% critical value
}

TEST(FitGaussian, KnownMeanAndUnbiasedCovariance) {
  const std::vector<double> s{1, 2, 3, 4, 5, 9};
  const auto g = fit_gaussian(s, 2);
  EXPECT_EQ(g.sample_count, 3u);
  EXPECT_NEAR(g.mean(0), 3.0, 1e-15);
  EXPECT_NEAR(g.mean(1), 5.0, 1e-15);
  EXPECT_NEAR(g.covariance(0, 0), 4.0, 1e-14);
  EXPECT_NEAR(g.covariance(1, 1), 13.0, 1e-14);
  EXPECT_NEAR(g.covariance(0, 1), 7.0, 1e-14);
  EXPECT_EQ(g.covariance(0, 1), g.covariance(1, 0));
}

TEST(FitGaussian, RejectsBadInput) {
  const std::vector<double> one{1, 2};
  EXPECT_THROW(fit_gaussian(one, 2), std::invalid_argument);
  const std::vector<double> ragged{1, 2, 3};
  EXPECT_THROW(fit_gaussian(ragged, 2), std::invalid_argument);
  EXPECT_THROW(fit_gaussian(ragged, 0), std::invalid_argument);
}

}  // namespace
