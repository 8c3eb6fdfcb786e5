#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "vcgan/metrics.hpp"
#include "vcgan/rng.hpp"

namespace {

using namespace vcgan;

// --------------------------------------------------------- inception score

TEST(InceptionScore, UniformPredictionsScoreOne) {
  const std::vector<double> p(1000 * 10, 0.1);
  const auto s = inception_score(p, 10, 10);
  EXPECT_NEAR(s.mean, 1.0, 1e-12);
  EXPECT_NEAR(s.std, 0.0, 1e-12);
}

TEST(InceptionScore, ConfidentBalancedPredictionsScoreK) {
  std::vector<double> p(1000 * 10, 0.0);
  for (std::size_t i = 0; i < 1000; ++i) p[i * 10 + i % 10] = 1.0;
  const auto s = inception_score(p, 10, 10);
  EXPECT_NEAR(s.mean, 10.0, 1e-9);
}

TEST(InceptionScore, MatchesLongDoubleOracle) {
  Rng rng(41);
  const std::size_t n = 600, k = 7, groups = 3;
  std::vector<double> p(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) z += p[i * k + c] = std::exp(2.0 * rng.normal());
    for (std::size_t c = 0; c < k; ++c) p[i * k + c] /= z;
  }
  long double mean = 0, sq = 0;
  std::vector<long double> scores;
  const std::size_t per = n / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<long double> marg(k, 0.0L);
    for (std::size_t i = g * per; i < (g + 1) * per; ++i)
      for (std::size_t c = 0; c < k; ++c) marg[c] += p[i * k + c];
    for (auto& m : marg) m /= per;
    long double acc = 0;
    for (std::size_t i = g * per; i < (g + 1) * per; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        const long double q = p[i * k + c];
        acc += q * (std::log(q) - std::log(marg[c]));
      }
    scores.push_back(std::exp(acc / per));
    mean += scores.back();
  }
  mean /= groups;
  for (auto s : scores) sq += (s - mean) * (s - mean);
  const auto s = inception_score(p, k, groups);
  EXPECT_NEAR(s.mean, static_cast<double>(mean), 1e-9);
  EXPECT_NEAR(s.std, static_cast<double>(std::sqrt(sq / groups)), 1e-9);
}

TEST(InceptionScore, RejectsBadTables) {
  const std::vector<double> p(10, 0.1);
  EXPECT_THROW(inception_score(p, 3, 1), std::invalid_argument);
  EXPECT_THROW(inception_score(p, 10, 0), std::invalid_argument);
  EXPECT_THROW(inception_score(p, 10, 2), std::invalid_argument);
}

// ------------------------------------------------------ matrix square root

Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::MatrixXd s = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  return (s + s.transpose()) / 2.0;
}

TEST(MatrixSqrt, DiagonalAndIdentity) {
  Eigen::MatrixXd d = Eigen::Vector3d(4.0, 9.0, 0.25).asDiagonal();
  const Eigen::MatrixXd r = matrix_sqrt_psd(d);
  EXPECT_NEAR((r - Eigen::MatrixXd(Eigen::Vector3d(2.0, 3.0, 0.5).asDiagonal())).norm(), 0.0, 1e-12);
  EXPECT_NEAR((matrix_sqrt_psd(Eigen::MatrixXd::Identity(5, 5)) - Eigen::MatrixXd::Identity(5, 5)).norm(), 0.0, 1e-14);
}

TEST(MatrixSqrt, SquaresBackAndMatchesEigenSolver) {
  Rng rng(42);
  for (Eigen::Index n : {2, 5, 16}) {
    const Eigen::MatrixXd a = random_spd(n, rng);
    const Eigen::MatrixXd r = matrix_sqrt_psd(a);
    EXPECT_LT((r * r - a).norm(), 1e-8 * a.norm()) << n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    EXPECT_LT((r - es.operatorSqrt()).norm(), 1e-8 * std::max(1.0, r.norm())) << n;
  }
}

TEST(MatrixSqrt, NegativeEigenvaluesClamp) {
  const Eigen::MatrixXd a = Eigen::Vector2d(4.0, -1e-9).asDiagonal();
  const Eigen::MatrixXd r = matrix_sqrt_psd(a);
  EXPECT_NEAR(r(0, 0), 2.0, 1e-12);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(MatrixSqrt, RejectsAsymmetricInput) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 0, 1;
  EXPECT_THROW(matrix_sqrt_psd(a), std::invalid_argument);
  EXPECT_THROW(matrix_sqrt_psd(Eigen::MatrixXd::Ones(2, 3)), std::invalid_argument);
}

TEST(JacobiEigen, EigenvaluesMatchOracle) {
  Rng rng(43);
  const Eigen::MatrixXd a = random_spd(12, rng);
  auto e = jacobi_eigen(a);
  Eigen::VectorXd mine = e.values;
  std::sort(mine.data(), mine.data() + mine.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  EXPECT_LT((mine - es.eigenvalues()).norm(), 1e-9 * es.eigenvalues().norm());
  EXPECT_LT((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(12, 12)).norm(), 1e-10);
}

// --------------------------------------------------------- frechet distance

EmpiricalGaussian gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  EmpiricalGaussian g;
  g.mean = std::move(mean);
  g.covariance = std::move(cov);
  g.sample_count = 100;
  return g;
}

TEST(Frechet, IdenticalGaussiansAreZero) {
  Rng rng(44);
  const auto a = gaussian(Eigen::VectorXd::Random(6), random_spd(6, rng));
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-8);
}

TEST(Frechet, OneDimensionalUnitShift) {
  Eigen::VectorXd m0(1), m1(1);
  m0 << 0;
  m1 << 1;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_NEAR(frechet_distance(gaussian(m0, one), gaussian(m1, one)), 1.0, 1e-12);
}

TEST(Frechet, DiagonalClosedForm) {
  // Commuting covariances: sum (sqrt(a) - sqrt(b))^2 plus the mean term.
  const Eigen::Vector3d va(1.0, 4.0, 9.0), vb(4.0, 1.0, 2.0);
  Eigen::VectorXd ma(3), mb(3);
  ma << 0.0, 1.0, -1.0;
  mb << 0.5, 1.0, 1.0;
  double expected = (ma - mb).squaredNorm();
  for (int i = 0; i < 3; ++i) expected += std::pow(std::sqrt(va(i)) - std::sqrt(vb(i)), 2);
  const double d = frechet_distance(gaussian(ma, va.asDiagonal()), gaussian(mb, vb.asDiagonal()));
  EXPECT_NEAR(d, expected, 1e-10);
}

TEST(Frechet, SymmetricAndNonNegative) {
  Rng rng(45);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = gaussian(Eigen::VectorXd::Random(8), random_spd(8, rng));
    const auto b = gaussian(Eigen::VectorXd::Random(8), random_spd(8, rng));
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-8 * std::max(1.0, ab));
  }
}

TEST(Frechet, DimensionMismatchRejected) {
  const auto a = gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const auto b = gaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_THROW(frechet_distance(a, b), std::invalid_argument);
}

// ------------------------------------------------------------ mode coverage

TEST(ModeCoverage, CountsCoveredAndMissingClasses) {
  const std::vector<std::vector<std::size_t>> pred{{0, 0, 1, 0}, {0, 0, 0, 1}, {}, {3, 3}};
  const auto r = mode_coverage(pred, 0.5);
  EXPECT_EQ(r.covered_count(), 2u);
  EXPECT_FALSE(r.classes[2].fraction.has_value());
  EXPECT_FALSE(r.classes[2].covered);
  EXPECT_NEAR(r.class_match(), 6.0 / 10.0, 1e-15);
}

TEST(ModeCoverage, SingleModeCoversAtMostOneClass) {
  // Every sample lands in class 2: only class 2 can reach the threshold.
  std::vector<std::vector<std::size_t>> pred(8, std::vector<std::size_t>(50, 2));
  const auto r = mode_coverage(pred, 0.5);
  EXPECT_EQ(r.covered_count(), 1u);
  EXPECT_NEAR(r.class_match(), 1.0 / 8.0, 1e-15);
}

// ------------------------------------------------------------- classifier

TEST(Classifier, SeparatesWellSeparatedClusters) {
  Rng rng(46);
  const std::size_t n = 2000, k = 4;
  Tensor<float> x(Shape{n, 2});
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % k;
    x.at(i, 0) = static_cast<float>((y[i] % 2 ? 1.0 : -1.0) + 0.1 * rng.normal());
    x.at(i, 1) = static_cast<float>((y[i] / 2 ? 1.0 : -1.0) + 0.1 * rng.normal());
  }
  Classifier clf = train_eval_classifier(x, y, k);
  EXPECT_GE(clf.holdout_accuracy(), 0.99);
  EXPECT_GE(clf.accuracy(x, y), 0.99);
  const auto p = clf.predict_proba(x);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += p.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(Classifier, UnlearnableLabelsAreRejected) {
  Rng rng(47);
  const std::size_t n = 500;
  Tensor<float> x(Shape{n, 2});
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = static_cast<float>(rng.normal());
    x.at(i, 1) = static_cast<float>(rng.normal());
    y[i] = rng.uniform_int(4);
  }
  ClassifierConfig cfg;
  cfg.steps = 200;
  EXPECT_THROW(train_eval_classifier(x, y, 4, cfg), ClassifierAccuracyError);
}

TEST(ScoreReport, CsvLayout) {
  ScoreReport r;
  r.inception_score_mean = 7.5;
  r.group_count = 10;
  r.fid = 0.25;
  r.feature_space = "raw";
  r.real_count = r.fake_count = 100;
  r.coverage = mode_coverage({{0, 0}, {}}, 0.5);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.rfind("metric,value,detail\nis_mean,7.5,groups=10\n", 0), 0u);
  EXPECT_NE(csv.find("fid,0.25,features=raw real=100 fake=100\n"), std::string::npos);
  EXPECT_NE(csv.find("coverage_class_0,1,hits=2/2 covered\n"), std::string::npos);
  EXPECT_NE(csv.find("coverage_class_1,missing,no samples\n"), std::string::npos);
}

}  // namespace
