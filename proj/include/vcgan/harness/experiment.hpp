#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vcgan/checkpoint.hpp"
#include "vcgan/harness/config.hpp"
#include "vcgan/harness/datasets.hpp"
#include "vcgan/harness/emit.hpp"
#include "vcgan/metrics.hpp"
#include "vcgan/training.hpp"

namespace vcgan::harness {

inline constexpr const char* kTrainLogHeader = "step,loss_d,loss_g,kl,source_term,class_term,elapsed_s\n";

inline std::string train_log_row(const LossReport& r, double elapsed_s) {
  return std::to_string(r.step) + "," + format_number(r.loss_d) + "," + format_number(r.loss_g) + "," +
         format_number(r.kl) + "," + format_number(r.source_term) + "," + format_number(r.class_term) + "," +
         format_number(elapsed_s) + "\n";
}

/// Independent seeds for each consumer of randomness in a run.
struct RunSeeds {
  std::uint64_t init;
  std::uint64_t trainer;
  std::uint64_t data;
  std::uint64_t classifier;
  std::uint64_t reference;
  std::uint64_t generation;

  static RunSeeds derive(std::uint64_t seed) {
    Rng m(seed);
    RunSeeds s{};
    s.init = m.next_u64();
    s.trainer = m.next_u64();
    s.data = m.next_u64();
    s.classifier = m.next_u64();
    s.reference = m.next_u64();
    s.generation = m.next_u64();
    return s;
  }
};

/// Held-out reference data plus the evaluation classifier.
class Evaluator {
 public:
  Evaluator(const ExperimentConfig& cfg, const DataSource& data, const RunSeeds& seeds)
      : cfg_(cfg), seeds_(seeds) {
    Rng rng(seeds.reference);
    const std::size_t n_train = std::max<std::size_t>(500 * cfg.num_classes, 2000);
    LabeledSet train = data.balanced(n_train, rng);
    ClassifierConfig cc;
    cc.steps = cfg.classifier_steps;
    cc.seed = seeds.classifier;
    classifier_ = std::make_unique<Classifier>(
        train_eval_classifier(train.tensor(), train.labels, cfg.num_classes, cc));
    reference_ = data.balanced(cfg.eval_samples, rng);
    real_ = fit_gaussian(features(reference_.tensor()));
  }

  Classifier& classifier() { return *classifier_; }
  const LabeledSet& reference() const { return reference_; }
  std::string feature_space() const { return cfg_.is_image() ? "classifier-penultimate" : "raw"; }

  Tensor<double> features(const Tensor<float>& samples) {
    if (cfg_.is_image()) return classifier_->features(samples).cast<double>();
    return samples.cast<double>();
  }

  /// Class-balanced generation (class i mod K for sample i) in inference mode.
  Tensor<float> generate(ModelBundle<float>& bundle, const TruncationRange& range, std::size_t n,
                         std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = i % cfg_.num_classes;
    constexpr std::size_t kChunk = 1000;
    std::vector<float> all;
    Shape shape{n};
    shape.insert(shape.end(), bundle.dims().sample_shape.begin(), bundle.dims().sample_shape.end());
    for (std::size_t b = 0; b < n; b += kChunk) {
      const std::size_t e = std::min(n, b + kChunk);
      Tensor<float> part =
          bundle.generate_batch(std::span<const std::size_t>(classes.data() + b, e - b), range, rng);
      all.insert(all.end(), part.data().begin(), part.data().end());
    }
    return Tensor<float>(shape, std::move(all));
  }

  ScoreReport evaluate(ModelBundle<float>& bundle, const TruncationRange& range) {
    const std::size_t n = cfg_.eval_samples;
    Tensor<float> fake = generate(bundle, range, n, seeds_.generation);
    ScoreReport r;
    const auto is = inception_score(*classifier_, fake, cfg_.is_groups);
    r.inception_score_mean = is.mean;
    r.inception_score_std = is.std;
    r.group_count = is.groups;
    r.fid = frechet_distance(real_, fit_gaussian(features(fake)));
    r.real_count = reference_.size();
    r.fake_count = n;
    r.feature_space = feature_space();
    const auto pred = classifier_->predict(fake);
    std::vector<std::vector<std::size_t>> per_class(cfg_.num_classes);
    for (std::size_t i = 0; i < n; ++i) per_class[i % cfg_.num_classes].push_back(pred[i]);
    r.coverage = mode_coverage(per_class, cfg_.coverage_threshold);
    return r;
  }

 private:
  ExperimentConfig cfg_;
  RunSeeds seeds_;
  std::unique_ptr<Classifier> classifier_;
  LabeledSet reference_;
  EmpiricalGaussian real_;
};

/// One training run: data, model, trainer and the RNG streams that drive it.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        seeds_(RunSeeds::derive(cfg_.seed)),
        data_(cfg_),
        trainer_(ModelBundle<float>(cfg_.variant, cfg_.model_dims(data_.sample_shape()), seeds_.init),
                 cfg_.trainer_config(), seeds_.trainer),
        data_rng_(seeds_.data) {}

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const RunSeeds& seeds() const noexcept { return seeds_; }
  const DataSource& data() const noexcept { return data_; }
  Trainer<float>& trainer() noexcept { return trainer_; }
  ModelBundle<float>& bundle() noexcept { return trainer_.bundle(); }
  Rng& data_rng() noexcept { return data_rng_; }
  std::uint64_t step() const noexcept { return trainer_.step(); }

  LossReport step_once() {
    const std::size_t batches = bundle().variant() == Variant::kCVAE ? 1 : cfg_.disc_steps;
    std::vector<Batch<float>> real;
    for (std::size_t i = 0; i < batches; ++i) real.push_back(data_.batch(cfg_.batch_size, data_rng_));
    return trainer_.train_step(real);
  }

  Checkpoint checkpoint() const {
    // Where a run writes or resumes from is not part of its state.
    ExperimentConfig echo = cfg_;
    echo.output_dir = ExperimentConfig{}.output_dir;
    echo.resume_from.clear();
    Checkpoint ck = snapshot(trainer_, config_echo(echo));
    ck.rngs.emplace_back("data", data_rng_.state());
    return ck;
  }

  std::uint64_t checkpoint_hash() const { return fnv1a64(serialize_checkpoint(checkpoint())); }

  void restore_from(const Checkpoint& ck) {
    restore(trainer_, ck);
    for (const auto& [name, st] : ck.rngs)
      if (name == "data") data_rng_.set_state(st);
  }

  Evaluator& evaluator() {
    if (!evaluator_) evaluator_ = std::make_unique<Evaluator>(cfg_, data_, seeds_);
    return *evaluator_;
  }

  /// Sample artifact: a K x 8 grid image for image data, a scatter CSV of
  /// 100 generated points per class for point data. Returns the path written.
  std::string emit_samples(const std::filesystem::path& stem) {
    Evaluator& ev = evaluator();
    if (cfg_.is_image()) {
      const std::size_t cols = 8, n = cfg_.num_classes * cols;
      Tensor<float> s = ev.generate(bundle(), cfg_.truncation, n, seeds_.generation);
      // generate() interleaves classes; reorder so that row r holds class r
      Tensor<float> grid(s.shape());
      const std::size_t px = s.size() / n;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % cfg_.num_classes, j = i / cfg_.num_classes;
        std::copy_n(s.data().begin() + i * px, px, grid.data().begin() + (k * cols + j) * px);
      }
      const std::string path = stem.string() + ".pgm";
      emit_sample_grid(grid, cfg_.num_classes, cols, path);
      return path;
    }
    const std::size_t n = 100 * cfg_.num_classes;
    Tensor<float> s = ev.generate(bundle(), cfg_.truncation, n, seeds_.generation);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % cfg_.num_classes;
    const std::string path = stem.string() + ".csv";
    emit_scatter(s, labels, path);
    return path;
  }

 private:
  ExperimentConfig cfg_;
  RunSeeds seeds_;
  DataSource data_;
  Trainer<float> trainer_;
  Rng data_rng_;
  std::unique_ptr<Evaluator> evaluator_;
};

/// Rebuilds an experiment from a checkpoint using the configuration echoed
/// inside it. `overrides` are applied on top of the echo (e.g. truncation).
inline std::unique_ptr<Experiment> load_experiment(const std::string& checkpoint_path,
                                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = parse_config(ck.config_echo);
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.resume_from.clear();
  auto ex = std::make_unique<Experiment>(cfg);
  ex->restore_from(ck);
  return ex;
}

/// Rows of condition interpolations from class `from` to class `to`. Each row
/// holds one fixed noise draw; returns (rows * steps) samples, row-major.
inline Tensor<float> interpolation_grid(ModelBundle<float>& bundle, std::size_t from, std::size_t to,
                                        std::size_t steps, std::size_t rows, const TruncationRange& range,
                                        Rng& rng) {
  const std::size_t k = bundle.dims().num_classes;
  const ConditionVector a = ConditionVector::one_hot(from, k), b = ConditionVector::one_hot(to, k);
  std::vector<float> all;
  for (std::size_t r = 0; r < rows; ++r) {
    const GenerationNoise<float> noise = bundle.draw_noise(1, range, rng);
    for (const auto& x : bundle.interpolate_conditions(a, b, steps, noise)) {
      all.insert(all.end(), x.data().begin(), x.data().end());
    }
  }
  Shape shape{rows * steps};
  shape.insert(shape.end(), bundle.dims().sample_shape.begin(), bundle.dims().sample_shape.end());
  return Tensor<float>(shape, std::move(all));
}

/// Writes an interpolation grid: a PGM/PPM for images, or a scatter CSV for
/// points with the step index in the class column. Returns the path written.
inline std::string emit_interpolation(const Tensor<float>& grid, std::size_t steps, bool image,
                                      const std::filesystem::path& stem) {
  const std::size_t n = grid.dim(0);
  if (image) {
    const std::string path = stem.string() + ".pgm";
    emit_sample_grid(grid, n / steps, steps, path);
    return path;
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % steps;
  const std::string path = stem.string() + ".csv";
  emit_scatter(grid, labels, path);
  return path;
}

struct ExperimentResult {
  std::uint64_t steps_done = 0;
  std::optional<LossReport> last_report;
  std::optional<ScoreReport> final_scores;
  std::filesystem::path output_dir;
  std::uint64_t checkpoint_hash = 0;
};

/// Trains for the configured number of steps, writing into output_dir:
///   config.txt        resolved configuration
///   train_log.csv     one row per log interval
///   checkpoint.bin    every checkpoint interval and at the end
///   scores.csv        final ScoreReport (scores_<step>.csv at eval intervals)
///   samples.{pgm,csv} final sample grid or scatter (samples_<step>.* likewise)
/// A non-finite loss aborts with TrainingDiverged; the last periodic
/// checkpoint on disk is left in place.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  Experiment ex(cfg);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_file((dir / "config.txt").string(), config_echo(cfg));

  if (!cfg.resume_from.empty()) ex.restore_from(load_checkpoint(cfg.resume_from));
  const bool append = !cfg.resume_from.empty() && fs::exists(dir / "train_log.csv");
  std::ofstream log(dir / "train_log.csv", append ? std::ios::app : std::ios::trunc);
  if (!log) throw EmitError("cannot write train_log.csv in '" + dir.string() + "'");
  if (!append) log << kTrainLogHeader << std::flush;

  const auto ckpt_path = (dir / "checkpoint.bin").string();
  ExperimentResult res;
  res.output_dir = dir;
  if (ex.step() >= cfg.steps) {
    save_checkpoint(ckpt_path, ex.checkpoint());
    res.checkpoint_hash = ex.checkpoint_hash();
    res.steps_done = ex.step();
    return res;
  }

  const auto t0 = std::chrono::steady_clock::now();
  while (ex.step() < cfg.steps) {
    const LossReport rep = ex.step_once();
    res.last_report = rep;
    if (rep.step % cfg.log_interval == 0 || rep.step == cfg.steps) {
      const double elapsed =
          cfg.record_elapsed ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
      log << train_log_row(rep, elapsed) << std::flush;
    }
    if (rep.step % cfg.checkpoint_interval == 0 && rep.step != cfg.steps) {
      save_checkpoint(ckpt_path, ex.checkpoint());
    }
    if (cfg.eval_interval > 0 && rep.step % cfg.eval_interval == 0 && rep.step != cfg.steps) {
      const std::string tag = "_" + std::to_string(rep.step);
      ex.evaluator().evaluate(ex.bundle(), cfg.truncation).write((dir / ("scores" + tag + ".csv")).string());
      ex.emit_samples(dir / ("samples" + tag));
    }
  }
  save_checkpoint(ckpt_path, ex.checkpoint());
  res.checkpoint_hash = ex.checkpoint_hash();
  res.final_scores = ex.evaluator().evaluate(ex.bundle(), cfg.truncation);
  res.final_scores->write((dir / "scores.csv").string());
  ex.emit_samples(dir / "samples");
  res.steps_done = ex.step();
  return res;
}

// ---------------------------------------------------------------- ablation

struct AblationRow {
  Variant variant;
  TruncationRange range;
  std::uint64_t seed = 0;
  std::optional<InceptionScore> is;
  std::optional<double> fid;
  std::string error;
  std::uint64_t checkpoint_hash = 0;
};

inline constexpr const char* kAblationHeader = "variant,range,seed,is_mean,is_std,fid\n";

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = kAblationHeader;
  for (const auto& r : rows) {
    out += to_string(r.variant) + "," + r.range.to_string() + "," + std::to_string(r.seed) + ",";
    if (r.is && r.fid) {
      out += format_number(r.is->mean) + "," + format_number(r.is->std) + "," + format_number(*r.fid);
    } else {
      out += "error,error,error";
    }
    out += "\n";
  }
  return out;
}

/// Trains each variant once per seed and evaluates it at every truncation
/// range without retraining; the checkpoint hash is checked to be unchanged
/// across ranges. Failures are recorded per row and the sweep continues.
/// Writes <output_dir>/ablation.csv and ablation_errors.txt when needed.
inline std::vector<AblationRow> ablation_run(const ExperimentConfig& base, const std::vector<Variant>& variants,
                                             const std::vector<TruncationRange>& ranges,
                                             const std::vector<std::uint64_t>& seeds) {
  namespace fs = std::filesystem;
  const fs::path root(base.output_dir);
  fs::create_directories(root);
  std::vector<AblationRow> rows;
  std::string errors;
  for (const Variant v : variants) {
    for (const std::uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.variant = v;
      cfg.seed = seed;
      cfg.output_dir = (root / (to_string(v) + "_seed" + std::to_string(seed))).string();
      std::optional<Experiment> ex;
      std::string train_error;
      std::uint64_t trained_hash = 0;
      try {
        run_experiment(cfg);
        ExperimentConfig reload = cfg;
        reload.steps = 0;
        ex.emplace(reload);
        ex->restore_from(load_checkpoint((fs::path(cfg.output_dir) / "checkpoint.bin").string()));
        trained_hash = fnv1a64(serialize_checkpoint(ex->checkpoint()));
      } catch (const std::exception& e) {
        train_error = std::string("training failed: ") + e.what();
      }
      for (const auto& range : ranges) {
        AblationRow row{v, range, seed, std::nullopt, std::nullopt, train_error, trained_hash};
        if (train_error.empty()) {
          try {
            ScoreReport s = ex->evaluator().evaluate(ex->bundle(), range);
            row.checkpoint_hash = ex->checkpoint_hash();
            if (row.checkpoint_hash != trained_hash) {
              throw std::logic_error("model state changed during evaluation");
            }
            row.is = InceptionScore{s.inception_score_mean, s.inception_score_std, s.group_count};
            row.fid = s.fid;
          } catch (const std::exception& e) {
            row.error = e.what();
          }
        }
        if (!row.error.empty()) {
          errors += to_string(v) + "," + range.to_string() + "," + std::to_string(seed) + ": " + row.error + "\n";
        }
        rows.push_back(row);
      }
    }
  }
  write_file((root / "ablation.csv").string(), ablation_csv(rows));
  if (!errors.empty()) write_file((root / "ablation_errors.txt").string(), errors);
  return rows;
}

}  // namespace vcgan::harness
