#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vcgan/diffcore.hpp"
#include "vcgan/layers.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

// ------------------------------------------------------------ classifier

struct ClassifierConfig {
  std::vector<std::size_t> hidden{64, 32};
  std::size_t steps = 2000;
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.2;
  double min_accuracy = 0.8;
  std::uint64_t seed = 7;
};

class ClassifierAccuracyError : public std::runtime_error {
 public:
  ClassifierAccuracyError(double accuracy, double required)
      : std::runtime_error("evaluation classifier reached only " + std::to_string(accuracy) +
                           " held-out accuracy (need " + std::to_string(required) + ")"),
        accuracy_(accuracy) {}
  double accuracy() const noexcept { return accuracy_; }

 private:
  double accuracy_;
};

/// ReLU MLP on flattened samples. The last hidden layer is the feature layer.
class Classifier {
 public:
  Classifier(std::size_t input_dim, std::size_t num_classes, const std::vector<std::size_t>& hidden,
             std::uint64_t seed)
      : input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim == 0 || num_classes < 2 || hidden.empty()) {
      throw std::invalid_argument("Classifier: need input_dim > 0, >= 2 classes and a hidden layer");
    }
    Rng rng(seed);
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(in));
      layers_.push_back(LinearLayer<float>::create(store_, "cls.fc" + std::to_string(i), in, hidden[i], rng,
                                                   stddev, false));
      in = hidden[i];
    }
    layers_.push_back(LinearLayer<float>::create(store_, "cls.out", in, num_classes, rng,
                                                 std::sqrt(1.0 / static_cast<double>(in)), false));
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const { return store_[layers_.back().weight].value.dim(1); }
  double holdout_accuracy() const noexcept { return holdout_accuracy_; }
  void set_holdout_accuracy(double a) noexcept { holdout_accuracy_ = a; }
  ParameterStore<float>& params() noexcept { return store_; }

  /// Returns (features, logits) on the tape.
  std::pair<Var<float>, Var<float>> forward(Tape<float>& tape, const Tensor<float>& samples) {
    Var<float> h = tape.constant(flatten(samples));
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = relu(layers_[i](tape, store_, h));
    return {h, layers_.back()(tape, store_, h)};
  }

  /// Class probabilities, (n x K); rows sum to 1.
  Tensor<float> predict_proba(const Tensor<float>& samples) {
    Tape<float> tape;
    return softmax(forward(tape, samples).second).value();
  }

  Tensor<float> features(const Tensor<float>& samples) {
    Tape<float> tape;
    return forward(tape, samples).first.value();
  }

  std::vector<std::size_t> predict(const Tensor<float>& samples) {
    const Tensor<float> p = predict_proba(samples);
    std::vector<std::size_t> out(p.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < num_classes_; ++k)
        if (p.at(i, k) > p.at(i, best)) best = k;
      out[i] = best;
    }
    return out;
  }

  double accuracy(const Tensor<float>& samples, std::span<const std::size_t> labels) {
    const auto pred = predict(samples);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
    return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
  }

 private:
  Tensor<float> flatten(const Tensor<float>& samples) const {
    const std::size_t n = samples.dim(0);
    if (samples.size() != n * input_dim_) {
      throw std::invalid_argument("Classifier: sample shape " + shape_string(samples.shape()) +
                                  " does not flatten to width " + std::to_string(input_dim_));
    }
    return samples.reshaped(Shape{n, input_dim_});
  }

  std::size_t input_dim_;
  std::size_t num_classes_;
  ParameterStore<float> store_;
  std::vector<LinearLayer<float>> layers_;
  double holdout_accuracy_ = 0.0;
};

namespace detail {

inline Tensor<float> gather_rows(const Tensor<float>& samples, std::span<const std::size_t> rows) {
  Shape s = samples.shape();
  const std::size_t width = samples.size() / s[0];
  s[0] = rows.size();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(samples.data().begin() + rows[i] * width, width, out.data().begin() + i * width);
  return out;
}

}  // namespace detail

/// Trains the evaluation classifier on a labelled set with a shuffled
/// held-out split; throws ClassifierAccuracyError below the minimum.
inline Classifier train_eval_classifier(const Tensor<float>& samples, std::span<const std::size_t> labels,
                                        std::size_t num_classes, const ClassifierConfig& cfg = {}) {
  const std::size_t n = samples.dim(0);
  if (labels.size() != n) throw std::invalid_argument("train_eval_classifier: label count mismatch");
  for (auto l : labels)
    if (l >= num_classes) throw std::out_of_range("train_eval_classifier: label out of range");
  const auto holdout = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(n));
  if (holdout == 0 || holdout >= n) throw std::invalid_argument("train_eval_classifier: dataset too small");

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  const std::span<const std::size_t> test_idx(order.data(), holdout);
  const std::span<const std::size_t> train_idx(order.data() + holdout, n - holdout);

  Classifier clf(samples.size() / n, num_classes, cfg.hidden, rng.next_u64());
  auto& store = clf.params();
  std::vector<std::size_t> all(store.size());
  std::iota(all.begin(), all.end(), 0);
  Adam<float> opt(store, all, OptimizerConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

  const std::size_t bs = std::min(cfg.batch_size, train_idx.size());
  std::vector<std::size_t> rows(bs), y(bs);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < bs; ++i) {
      rows[i] = train_idx[rng.uniform_int(train_idx.size())];
      y[i] = labels[rows[i]];
    }
    Tape<float> tape;
    auto logits = clf.forward(tape, detail::gather_rows(samples, rows)).second;
    Var<float> loss = scale(mean(pick(log_softmax(logits), std::span<const std::size_t>(y))), -1.0f);
    opt.zero_grad(store);
    tape.backward(loss);
    opt.step(store);
  }

  std::vector<std::size_t> test_labels(holdout);
  for (std::size_t i = 0; i < holdout; ++i) test_labels[i] = labels[test_idx[i]];
  const double acc = clf.accuracy(detail::gather_rows(samples, test_idx), test_labels);
  clf.set_holdout_accuracy(acc);
  if (acc < cfg.min_accuracy) throw ClassifierAccuracyError(acc, cfg.min_accuracy);
  return clf;
}

// ------------------------------------------------------- inception score

struct InceptionScore {
  double mean = 0.0;
  double std = 0.0;
  std::size_t groups = 0;
};

/// `probs` is an (n x K) row-major table of p(y|x). Samples beyond a whole
/// number of groups are dropped. The spread is the population standard
/// deviation over groups.
inline InceptionScore inception_score(std::span<const double> probs, std::size_t num_classes,
                                      std::size_t groups = 10) {
  if (groups == 0) throw std::invalid_argument("inception_score: groups must be >= 1");
  if (num_classes == 0 || probs.size() % num_classes != 0) {
    throw std::invalid_argument("inception_score: table is not a multiple of the class count");
  }
  const std::size_t n = probs.size() / num_classes;
  const std::size_t per = n / groups;
  if (per == 0) throw std::invalid_argument("inception_score: empty group");

  std::vector<double> scores(groups);
  std::vector<double> marginal(num_classes);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* base = probs.data() + g * per * num_classes;
    std::fill(marginal.begin(), marginal.end(), 0.0);
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t k = 0; k < num_classes; ++k) marginal[k] += base[i * num_classes + k];
    for (auto& m : marginal) m /= static_cast<double>(per);
    double kl_sum = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t k = 0; k < num_classes; ++k) {
        const double p = base[i * num_classes + k];
        if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal[k]));
      }
    }
    scores[g] = std::exp(kl_sum / static_cast<double>(per));
  }
  InceptionScore out;
  out.groups = groups;
  out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(groups);
  double var = 0.0;
  for (double s : scores) var += (s - out.mean) * (s - out.mean);
  out.std = std::sqrt(var / static_cast<double>(groups));
  return out;
}

inline InceptionScore inception_score(Classifier& clf, const Tensor<float>& samples, std::size_t groups = 10) {
  const Tensor<float> p = clf.predict_proba(samples);
  std::vector<double> table(p.data().begin(), p.data().end());
  return inception_score(table, clf.num_classes(), groups);
}

// --------------------------------------------------- frechet distance

inline constexpr double kJacobiTolerance = 1e-10;
inline constexpr int kJacobiMaxSweeps = 100;

struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  ///< columns
  int sweeps = 0;
};

inline void require_symmetric(const Eigen::MatrixXd& a, const char* who) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(who) + ": matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw std::invalid_argument(std::string(who) + ": matrix is not symmetric");
  }
}

/// Cyclic Jacobi eigendecomposition; stops once the off-diagonal Frobenius
/// norm drops below kJacobiTolerance * max(1, |A|_F).
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input) {
  require_symmetric(input, "jacobi_eigen");
  const Eigen::Index n = input.rows();
  Eigen::MatrixXd a = (input + input.transpose()) / 2.0;
  SymmetricEigen out;
  out.vectors = Eigen::MatrixXd::Identity(n, n);
  const double target = kJacobiTolerance * std::max(1.0, a.norm());
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  while (off_norm() >= target && out.sweeps < kJacobiMaxSweeps) {
    ++out.sweeps;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = out.vectors(k, p), vkq = out.vectors(k, q);
          out.vectors(k, p) = c * vkp - s * vkq;
          out.vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  out.values = a.diagonal();
  return out;
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped to 0.
inline Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& a) {
  require_symmetric(a, "matrix_sqrt_psd");
  const SymmetricEigen e = jacobi_eigen(a);
  const Eigen::VectorXd root = e.values.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd r = e.vectors * root.asDiagonal() * e.vectors.transpose();
  return (r + r.transpose()) / 2.0;
}

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 sqrt(sqrt(S1) S2 sqrt(S1))), floored at 0.
inline double frechet_distance(const EmpiricalGaussian& g1, const EmpiricalGaussian& g2) {
  if (g1.dim() != g2.dim()) {
    throw std::invalid_argument("frechet_distance: dimension " + std::to_string(g1.dim()) + " vs " +
                                std::to_string(g2.dim()));
  }
  const Eigen::MatrixXd s1 = matrix_sqrt_psd(g1.covariance);
  Eigen::MatrixXd m = s1 * g2.covariance * s1;
  m = (m + m.transpose()) / 2.0;
  const double cross = matrix_sqrt_psd(m).trace();
  const double d = (g1.mean - g2.mean).squaredNorm() + g1.covariance.trace() + g2.covariance.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

// --------------------------------------------------------- mode coverage

struct ClassCoverage {
  std::size_t requested_class = 0;
  std::size_t samples = 0;
  std::size_t hits = 0;
  std::optional<double> fraction;  ///< empty when no samples were generated
  bool covered = false;
};

struct CoverageReport {
  std::vector<ClassCoverage> classes;
  double threshold = 0.5;

  std::size_t covered_count() const {
    return static_cast<std::size_t>(std::count_if(classes.begin(), classes.end(),
                                                  [](const ClassCoverage& c) { return c.covered; }));
  }
  /// Pooled fraction of samples assigned to their requested class.
  double class_match() const {
    std::size_t n = 0, h = 0;
    for (const auto& c : classes) {
      n += c.samples;
      h += c.hits;
    }
    return n == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(n);
  }
};

/// `predicted[k]` holds the classifier's labels for the samples requested as class k.
inline CoverageReport mode_coverage(const std::vector<std::vector<std::size_t>>& predicted, double threshold = 0.5) {
  CoverageReport r;
  r.threshold = threshold;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    ClassCoverage c;
    c.requested_class = k;
    c.samples = predicted[k].size();
    c.hits = static_cast<std::size_t>(std::count(predicted[k].begin(), predicted[k].end(), k));
    if (c.samples > 0) {
      c.fraction = static_cast<double>(c.hits) / static_cast<double>(c.samples);
      c.covered = *c.fraction >= threshold;
    }
    r.classes.push_back(c);
  }
  return r;
}

/// `samples_per_class[k]` are samples generated for class k (may be empty).
inline CoverageReport mode_coverage(Classifier& clf, const std::vector<std::optional<Tensor<float>>>& samples_per_class,
                                    double threshold = 0.5) {
  std::vector<std::vector<std::size_t>> predicted(samples_per_class.size());
  for (std::size_t k = 0; k < samples_per_class.size(); ++k)
    if (samples_per_class[k]) predicted[k] = clf.predict(*samples_per_class[k]);
  return mode_coverage(predicted, threshold);
}

// ------------------------------------------------------------ score report

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct ScoreReport {
  double inception_score_mean = 0.0;
  double inception_score_std = 0.0;
  std::size_t group_count = 0;
  double fid = 0.0;
  std::size_t real_count = 0;
  std::size_t fake_count = 0;
  std::string feature_space;  ///< e.g. "raw" or "classifier-penultimate"
  CoverageReport coverage;

  std::string to_csv() const {
    std::ostringstream os;
    os << "metric,value,detail\n";
    os << "is_mean," << format_number(inception_score_mean) << ",groups=" << group_count << '\n';
    os << "is_std," << format_number(inception_score_std) << ",groups=" << group_count << '\n';
    os << "fid," << format_number(fid) << ",features=" << feature_space << " real=" << real_count
       << " fake=" << fake_count << '\n';
    for (const auto& c : coverage.classes) {
      os << "coverage_class_" << c.requested_class << ',';
      if (c.fraction) {
        os << format_number(*c.fraction) << ",hits=" << c.hits << '/' << c.samples
           << (c.covered ? " covered" : " collapsed");
      } else {
        os << "missing,no samples";
      }
      os << '\n';
    }
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write score report '" + path + "'");
    f << to_csv();
  }
};

}  // namespace vcgan
