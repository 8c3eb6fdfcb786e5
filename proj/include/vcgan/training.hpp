#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore.hpp"
#include "vcgan/models.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

/// Which target fake samples get in the discriminator's class term.
enum class AcLoss {
  kModified,  ///< fakes are labelled "Others" (class index K)
  kOriginal,  ///< fakes are labelled with the class they were generated for
};

inline std::string to_string(AcLoss a) { return a == AcLoss::kModified ? "modified" : "original"; }

inline AcLoss parse_ac_loss(const std::string& s) {
  if (s == "modified") return AcLoss::kModified;
  if (s == "original") return AcLoss::kOriginal;
  throw std::invalid_argument("unknown ac_loss '" + s + "'");
}

template <typename T>
struct Batch {
  Tensor<T> samples;  ///< (B x sample shape)
  std::vector<std::size_t> class_indices;
  Tensor<T> conditions;  ///< (B x N_c)

  std::size_t size() const noexcept { return class_indices.size(); }
};

template <typename T>
Batch<T> make_batch(Tensor<T> samples, std::vector<std::size_t> classes, std::size_t num_classes) {
  Batch<T> b;
  b.conditions = one_hot_batch<T>(classes, num_classes);
  b.samples = std::move(samples);
  b.class_indices = std::move(classes);
  return b;
}

struct LossReport {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double kl = 0.0;
  double source_term = 0.0;  ///< discriminator source term
  double class_term = 0.0;   ///< discriminator class term
  std::uint64_t step = 0;
  double real_class_term = 0.0;
  double fake_class_term = 0.0;

  bool operator==(const LossReport&) const = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::uint64_t step, const std::string& term)
      : std::runtime_error("non-finite loss at step " + std::to_string(step) + " in term '" + term + "'"),
        step_(step),
        term_(term) {}
  std::uint64_t step() const noexcept { return step_; }
  const std::string& term() const noexcept { return term_; }

 private:
  std::uint64_t step_;
  std::string term_;
};

template <typename T>
struct DiscriminatorLoss {
  Var<T> total;
  Var<T> source_term;
  Var<T> class_term;
  Var<T> real_class_term;
  Var<T> fake_class_term;
};

namespace detail {

template <typename T>
Var<T> class_log_probs(const Var<T>& logits, std::size_t num_classes) {
  return log_softmax(slice_cols(logits, 1, num_classes + 2));
}

template <typename T>
Var<T> source_logit(const Var<T>& logits) {
  return slice_cols(logits, 0, 1);
}

}  // namespace detail

/// Discriminator loss on a real batch and a (detached) fake batch:
///   source: -(E log D0(real) + E log(1 - D0(fake)))
///   class:  -(E log p(c_x | real) + E log p(target | fake))
/// with target = "Others" under the modified loss and the fed class under
/// the original one. Log-probabilities go through log-sigmoid/log-softmax.
/// Real and fake rows share one forward pass, so batch statistics in the
/// discriminator are computed over both.
template <typename T>
DiscriminatorLoss<T> discriminator_loss(Tape<T>& tape, ModelBundle<T>& bundle, const Batch<T>& real,
                                        const Tensor<T>& fake_samples,
                                        std::span<const std::size_t> fake_classes, AcLoss ac,
                                        NormMode mode = NormMode::kTrain, bool update_spectral = true) {
  const std::size_t k = bundle.dims().num_classes;
  const std::size_t nr = real.size(), nf = fake_samples.dim(0);
  if (fake_classes.size() != nf) {
    throw std::invalid_argument("discriminator_loss: need one fed class per fake sample");
  }
  if (real.samples.dim(0) != nr || real.samples.size() / nr != fake_samples.size() / nf) {
    throw std::invalid_argument("discriminator_loss: real and fake sample shapes differ");
  }
  Shape joint_shape = real.samples.shape();
  joint_shape[0] = nr + nf;
  std::vector<T> joint(real.samples.data().begin(), real.samples.data().end());
  joint.insert(joint.end(), fake_samples.data().begin(), fake_samples.data().end());
  Var<T> logits = bundle.discriminate(tape, tape.constant(Tensor<T>(joint_shape, std::move(joint))), mode,
                                      update_spectral);
  Var<T> real_logits = slice_rows(logits, 0, nr);
  Var<T> fake_logits = slice_rows(logits, nr, nr + nf);

  Var<T> src_real = mean(log_sigmoid(detail::source_logit(real_logits)));
  Var<T> src_fake = mean(log_sigmoid(scale(detail::source_logit(fake_logits), T{-1})));
  Var<T> source = scale(add(src_real, src_fake), T{-1});

  std::vector<std::size_t> fake_target(fake_classes.begin(), fake_classes.end());
  if (ac == AcLoss::kModified) std::fill(fake_target.begin(), fake_target.end(), k);
  Var<T> cls_real = scale(mean(pick(detail::class_log_probs(real_logits, k),
                                    std::span<const std::size_t>(real.class_indices))), T{-1});
  Var<T> cls_fake = scale(mean(pick(detail::class_log_probs(fake_logits, k),
                                    std::span<const std::size_t>(fake_target))), T{-1});
  Var<T> cls = add(cls_real, cls_fake);
  return {add(source, cls), source, cls, cls_real, cls_fake};
}

/// Class term of the original auxiliary-classifier loss (fakes scored against
/// their fed class), for comparison against the modified version.
template <typename T>
double original_ac_class_term(ModelBundle<T>& bundle, const Batch<T>& real, const Tensor<T>& fake_samples,
                              std::span<const std::size_t> fake_classes,
                              NormMode mode = NormMode::kTrainFrozen) {
  Tape<T> tape;
  auto l = discriminator_loss(tape, bundle, real, fake_samples, fake_classes, AcLoss::kOriginal, mode, false);
  return static_cast<double>(l.class_term.value()[0]);
}

template <typename T>
struct GeneratorLoss {
  Var<T> total;
  Var<T> source_term;
  Var<T> class_term;
  Var<T> kl;  ///< batch-mean KL; invalid for variants without a posterior
  Var<T> samples;
};

/// Generator loss: -E log D0(fake) - E log p(c_fed | fake) + kl_weight * KL,
/// the KL present only for VCGAN. The discriminator is held fixed: running
/// statistics for normalization and no power-iteration update.
template <typename T>
GeneratorLoss<T> generator_loss(Tape<T>& tape, ModelBundle<T>& bundle, const Tensor<T>& conditions,
                                std::span<const std::size_t> classes, const GenerationNoise<T>& noise,
                                double kl_weight = 1.0, NormMode gen_mode = NormMode::kTrain,
                                NormMode disc_mode = NormMode::kInference) {
  if (bundle.variant() == Variant::kCVAE) {
    throw std::logic_error("generator_loss: CVAE trains with cvae_loss");
  }
  const std::size_t k = bundle.dims().num_classes;
  auto tr = bundle.generator_forward(tape, conditions, classes, noise, gen_mode);
  Var<T> logits = bundle.discriminate(tape, tr.sample, disc_mode, false);
  Var<T> source = scale(mean(log_sigmoid(detail::source_logit(logits))), T{-1});
  Var<T> cls = scale(mean(pick(detail::class_log_probs(logits, k), classes)), T{-1});
  GeneratorLoss<T> out{add(source, cls), source, cls, Var<T>(), tr.sample};
  if (tr.posterior) {
    out.kl = mean(kl_to_standard_normal(tr.posterior->mean, tr.posterior->log_variance));
    out.total = add(out.total, scale(out.kl, static_cast<T>(kl_weight)));
  }
  return out;
}

template <typename T>
struct CvaeLoss {
  Var<T> total;
  Var<T> kl;
  Var<T> reconstruction;
};

/// Negative conditional lower bound with squared-error reconstruction:
/// mean_b KL(q(z|x,c) || N(0,I)) + mean_b |G(z) - x|^2, z = mean + sigma * eps.
template <typename T>
CvaeLoss<T> cvae_loss(Tape<T>& tape, ModelBundle<T>& bundle, const Batch<T>& batch, const Tensor<T>& eps,
                      NormMode mode = NormMode::kTrain) {
  if (bundle.variant() != Variant::kCVAE) throw std::logic_error("cvae_loss: requires the CVAE variant");
  Var<T> x = tape.constant(batch.samples);
  auto post = bundle.encode_cvae(tape, x, batch.conditions);
  Var<T> z = reparameterize(post.mean, post.log_variance, eps);
  Var<T> recon_x = bundle.decode(tape, z, batch.class_indices, mode);
  const std::size_t b = batch.size();
  Var<T> diff = reshape(sub(recon_x, x), Shape{b, bundle.dims().sample_size()});
  Var<T> recon = mean(sum_rows(square(diff)));
  Var<T> kl = mean(kl_to_standard_normal(post.mean, post.log_variance));
  return {add(kl, recon), kl, recon};
}

struct TrainerConfig {
  OptimizerConfig generator_optimizer;
  OptimizerConfig discriminator_optimizer;
  AcLoss ac_loss = AcLoss::kModified;
  double kl_weight = 1.0;
  std::size_t batch_size = 100;
  std::size_t disc_steps = 1;  ///< discriminator updates per iteration
  std::size_t gen_steps = 1;   ///< generator updates per iteration
};

/// Alternating adversarial optimization over an owned ModelBundle.
template <typename T>
class Trainer {
 public:
  Trainer(ModelBundle<T> bundle, TrainerConfig config, std::uint64_t seed)
      : bundle_(std::move(bundle)), config_(config), rng_(seed) {
    if (config_.batch_size < 2) throw std::invalid_argument("Trainer: batch size must be >= 2");
    if (bundle_.dims().condition_dim != bundle_.dims().num_classes) {
      throw std::invalid_argument("Trainer: class conditions are one-hot, so condition_dim must equal K");
    }
    gen_opt_ = Adam<T>(bundle_.params(), bundle_.generator_params(), config_.generator_optimizer);
    if (bundle_.has_discriminator()) {
      disc_opt_ = Adam<T>(bundle_.params(), bundle_.discriminator_params(), config_.discriminator_optimizer);
    }
  }

  /// One iteration: `disc_steps` discriminator updates (one real batch each)
  /// with the generator fixed, then `gen_steps` generator updates with fresh
  /// noise and the discriminator fixed. CVAE runs one reconstruction update
  /// per real batch.
  LossReport train_step(std::span<const Batch<T>> real_batches) {
    ++step_;
    LossReport rep;
    rep.step = step_;
    if (bundle_.variant() == Variant::kCVAE) {
      for (const auto& real : real_batches) cvae_phase(real, rep);
      return rep;
    }
    if (real_batches.size() != config_.disc_steps) {
      throw std::invalid_argument("train_step: expected " + std::to_string(config_.disc_steps) +
                                  " real batches, got " + std::to_string(real_batches.size()));
    }
    for (const auto& real : real_batches) discriminator_phase(real, rep);
    for (std::size_t i = 0; i < config_.gen_steps; ++i) generator_phase(real_batches.front().size(), rep);
    return rep;
  }

  LossReport train_step(const Batch<T>& real) { return train_step(std::span<const Batch<T>>(&real, 1)); }

  /// Discriminator update under L_D; the generator runs forward only, with
  /// its running statistics left untouched.
  void discriminator_phase(const Batch<T>& real, LossReport& rep) {
    const std::size_t b = real.size();
    std::vector<std::size_t> classes = draw_classes(b);
    Tensor<T> conditions = one_hot_batch<T>(classes, bundle_.dims().num_classes);
    GenerationNoise<T> noise = bundle_.draw_noise(b, TruncationRange::none(), rng_);
    Tensor<T> fake;
    {
      Tape<T> gen_tape;
      fake = bundle_.generator_forward(gen_tape, conditions, classes, noise, NormMode::kTrainFrozen)
                 .sample.value();
    }
    bundle_.params().zero_grad();
    Tape<T> tape;
    auto loss = discriminator_loss(tape, bundle_, real, fake, classes, config_.ac_loss);
    rep.loss_d = checked(loss.total, "loss_d");
    rep.source_term = checked(loss.source_term, "source_term");
    rep.class_term = checked(loss.class_term, "class_term");
    rep.real_class_term = checked(loss.real_class_term, "real_class_term");
    rep.fake_class_term = checked(loss.fake_class_term, "fake_class_term");
    tape.backward(loss.total);
    disc_opt_.step(bundle_.params());
  }

  /// Generator (encoder + decoder) update under L_G with the fed class as
  /// the class target.
  void generator_phase(std::size_t batch, LossReport& rep) {
    std::vector<std::size_t> classes = draw_classes(batch);
    Tensor<T> conditions = one_hot_batch<T>(classes, bundle_.dims().num_classes);
    GenerationNoise<T> noise = bundle_.draw_noise(batch, TruncationRange::none(), rng_);
    bundle_.params().zero_grad();
    Tape<T> tape;
    auto loss = generator_loss(tape, bundle_, conditions, classes, noise, config_.kl_weight);
    rep.loss_g = checked(loss.total, "loss_g");
    rep.kl = loss.kl.valid() ? checked(loss.kl, "kl") : 0.0;
    tape.backward(loss.total);
    gen_opt_.step(bundle_.params());
  }

  void cvae_phase(const Batch<T>& real, LossReport& rep) {
    Tensor<T> eps(Shape{real.size(), bundle_.dims().latent_dim});
    for (auto& v : eps.data()) v = static_cast<T>(rng_.normal());
    bundle_.params().zero_grad();
    Tape<T> tape;
    auto loss = cvae_loss(tape, bundle_, real, eps);
    rep.loss_g = checked(loss.total, "loss_g");
    rep.kl = checked(loss.kl, "kl");
    tape.backward(loss.total);
    gen_opt_.step(bundle_.params());
  }

  ModelBundle<T>& bundle() noexcept { return bundle_; }
  const ModelBundle<T>& bundle() const noexcept { return bundle_; }
  const TrainerConfig& config() const noexcept { return config_; }
  Adam<T>& generator_optimizer() noexcept { return gen_opt_; }
  Adam<T>& discriminator_optimizer() noexcept { return disc_opt_; }
  const Adam<T>& generator_optimizer() const noexcept { return gen_opt_; }
  const Adam<T>& discriminator_optimizer() const noexcept { return disc_opt_; }
  Rng& rng() noexcept { return rng_; }
  const Rng& rng() const noexcept { return rng_; }
  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }

 private:
  std::vector<std::size_t> draw_classes(std::size_t n) {
    std::vector<std::size_t> c(n);
    for (auto& v : c) v = static_cast<std::size_t>(rng_.uniform_int(bundle_.dims().num_classes));
    return c;
  }

  double checked(const Var<T>& v, const char* term) const {
    const double x = static_cast<double>(v.value()[0]);
    if (!std::isfinite(x)) throw TrainingDiverged(step_, term);
    return x;
  }

  ModelBundle<T> bundle_;
  TrainerConfig config_;
  Rng rng_;
  Adam<T> gen_opt_;
  Adam<T> disc_opt_;
  std::uint64_t step_ = 0;
};

}  // namespace vcgan
