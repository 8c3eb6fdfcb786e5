#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore.hpp"
#include "vcgan/layers.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

enum class Variant { kVCGAN, kConcatCGAN, kCBNCGAN, kCVAE };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kVCGAN: return "vcgan";
    case Variant::kConcatCGAN: return "concat_cgan";
    case Variant::kCBNCGAN: return "cbn_cgan";
    case Variant::kCVAE: return "cvae";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "vcgan") return Variant::kVCGAN;
  if (s == "concat_cgan" || s == "concat") return Variant::kConcatCGAN;
  if (s == "cbn_cgan" || s == "cbn") return Variant::kCBNCGAN;
  if (s == "cvae") return Variant::kCVAE;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

enum class Architecture { kMlp, kConv };

inline std::string to_string(Architecture a) { return a == Architecture::kMlp ? "mlp" : "conv"; }

inline Architecture parse_architecture(const std::string& s) {
  if (s == "mlp") return Architecture::kMlp;
  if (s == "conv") return Architecture::kConv;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

struct ModelDims {
  std::size_t num_classes = 10;    ///< K
  std::size_t condition_dim = 10;  ///< N_c
  std::size_t noise_dim = 128;     ///< N_phi
  std::size_t latent_dim = 128;    ///< J
  Shape sample_shape{2};
  Architecture arch = Architecture::kMlp;
  std::vector<std::size_t> encoder_hidden{512, 256};
  std::vector<std::size_t> decoder_hidden{128, 128};
  std::vector<std::size_t> disc_hidden{128, 128};
  std::size_t conv_channels = 16;
  bool gen_batchnorm = true;
  bool disc_batchnorm = true;
  std::size_t spectral_iterations = 1;
  double init_stddev = 0.02;
  double leaky_slope = 0.2;

  std::size_t sample_size() const { return shape_size(sample_shape); }

  void validate() const {
    if (num_classes < 1 || condition_dim < 1 || noise_dim < 1 || latent_dim < 1) {
      throw std::invalid_argument("model dims must be positive");
    }
    if (sample_shape.empty() || shape_size(sample_shape) == 0) {
      throw std::invalid_argument("sample shape must be non-empty");
    }
    if (arch == Architecture::kConv) {
      if (sample_shape.size() != 3 || sample_shape[1] % 2 || sample_shape[2] % 2) {
        throw std::invalid_argument("conv architecture needs a CxHxW sample shape with even H, W");
      }
    }
  }
};

/// Class condition: one-hot (with class_index) or an arbitrary embedding.
struct ConditionVector {
  std::vector<double> values;
  std::optional<std::size_t> class_index;

  static ConditionVector one_hot(std::size_t k, std::size_t num_classes) {
    if (k >= num_classes) {
      throw std::out_of_range("one_hot: class " + std::to_string(k) + " >= " +
                              std::to_string(num_classes));
    }
    ConditionVector c{std::vector<double>(num_classes, 0.0), k};
    c.values[k] = 1.0;
    return c;
  }

  /// (1 - t) * a + t * b; the result carries no class index.
  static ConditionVector lerp(const ConditionVector& a, const ConditionVector& b, double t) {
    if (a.values.size() != b.values.size()) {
      throw std::invalid_argument("ConditionVector::lerp: length mismatch");
    }
    ConditionVector c{std::vector<double>(a.values.size()), std::nullopt};
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = (1.0 - t) * a.values[i] + t * b.values[i];
    if (a.class_index && a == b) c.class_index = a.class_index;
    return c;
  }

  bool operator==(const ConditionVector&) const = default;
};

template <typename T>
Tensor<T> one_hot_batch(std::span<const std::size_t> classes, std::size_t num_classes) {
  Tensor<T> out(Shape{classes.size(), num_classes});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= num_classes) throw std::out_of_range("one_hot_batch: class index out of range");
    out[i * num_classes + classes[i]] = T{1};
  }
  return out;
}

struct DiscriminatorOutput {
  double source_prob = 0.5;
  std::vector<double> class_probs;  ///< K + 1 entries; the last is "Others"
};

/// Noise for one batch of generation. Which fields are used depends on the
/// variant: VCGAN uses both (phi feeds the encoder, eps the reparameterization);
/// the CGAN baselines use phi only; CVAE uses eps as the prior draw of z.
template <typename T>
struct GenerationNoise {
  Tensor<T> phi;
  Tensor<T> eps;
};

/// Encoder F(c, phi), decoder G(z) and discriminator D(x) for one variant.
template <typename T>
class ModelBundle {
 public:
  struct Posterior {
    Var<T> mean;
    Var<T> log_variance;
  };

  struct GeneratorTrace {
    Var<T> sample;
    std::optional<Posterior> posterior;
    Var<T> latent;
  };

  ModelBundle(Variant variant, ModelDims dims, std::uint64_t init_seed)
      : variant_(variant), dims_(std::move(dims)) {
    dims_.validate();
    Rng rng(init_seed);
    const double sd = dims_.init_stddev;

    if (variant_ == Variant::kVCGAN) {
      build_mlp_encoder("enc", dims_.condition_dim + dims_.noise_dim, encoder_, rng);
    }
    if (variant_ == Variant::kCVAE) {
      build_mlp_encoder("enc_img", dims_.sample_size() + dims_.condition_dim, encoder_, rng);
    }

    const std::size_t dec_in = decoder_input_dim();
    const bool cbn = variant_ == Variant::kCBNCGAN;
    const bool use_norm = cbn || dims_.gen_batchnorm;
    auto add_norm = [&](const std::string& name, std::size_t channels) {
      if (!use_norm) return;
      if (cbn) {
        dec_cbn_.push_back(CondBatchNormLayer<T>::create(store_, name, dims_.num_classes, channels));
      } else {
        dec_bn_.push_back(BatchNormLayer<T>::create(store_, name, channels));
      }
    };
    if (dims_.arch == Architecture::kMlp) {
      std::size_t width = dec_in;
      for (std::size_t i = 0; i < dims_.decoder_hidden.size(); ++i) {
        const std::string p = "dec.fc" + std::to_string(i);
        dec_fc_.push_back(LinearLayer<T>::create(store_, p, width, dims_.decoder_hidden[i], rng, sd, false));
        add_norm(p + ".norm", dims_.decoder_hidden[i]);
        width = dims_.decoder_hidden[i];
      }
      dec_fc_.push_back(LinearLayer<T>::create(store_, "dec.out", width, dims_.sample_size(), rng, sd, false));
    } else {
      const std::size_t c0 = 2 * dims_.conv_channels, c1 = dims_.conv_channels;
      const std::size_t h = dims_.sample_shape[1] / 2, w = dims_.sample_shape[2] / 2;
      dec_fc_.push_back(LinearLayer<T>::create(store_, "dec.proj", dec_in, c0 * h * w, rng, sd, false));
      add_norm("dec.proj.norm", c0);
      dec_conv_.push_back(ConvLayer<T>::create(store_, "dec.up0", c0, c1, 4, 2, 1, true, rng, sd, false));
      add_norm("dec.up0.norm", c1);
      dec_conv_.push_back(ConvLayer<T>::create(store_, "dec.out", c1, dims_.sample_shape[0], 3, 1, 1,
                                               true, rng, sd, false));
    }

    if (variant_ != Variant::kCVAE) {
      const std::size_t head = dims_.num_classes + 2;
      if (dims_.arch == Architecture::kMlp) {
        std::size_t width = dims_.sample_size();
        for (std::size_t i = 0; i < dims_.disc_hidden.size(); ++i) {
          const std::string p = "disc.fc" + std::to_string(i);
          disc_fc_.push_back(LinearLayer<T>::create(store_, p, width, dims_.disc_hidden[i], rng, sd, true));
          if (dims_.disc_batchnorm && i > 0) {
            disc_bn_.push_back(BatchNormLayer<T>::create(store_, p + ".norm", dims_.disc_hidden[i]));
          }
          width = dims_.disc_hidden[i];
        }
        disc_head_ = LinearLayer<T>::create(store_, "disc.head", width, head, rng, sd, true);
      } else {
        const std::size_t c = dims_.conv_channels;
        const std::size_t in_ch = dims_.sample_shape[0];
        disc_conv_.push_back(ConvLayer<T>::create(store_, "disc.conv0", in_ch, c, 3, 1, 1, false, rng, sd, true));
        disc_conv_.push_back(ConvLayer<T>::create(store_, "disc.conv1", c, 2 * c, 4, 2, 1, false, rng, sd, true));
        if (dims_.disc_batchnorm) disc_bn_.push_back(BatchNormLayer<T>::create(store_, "disc.conv1.norm", 2 * c));
        const std::size_t flat = 2 * c * (dims_.sample_shape[1] / 2) * (dims_.sample_shape[2] / 2);
        disc_head_ = LinearLayer<T>::create(store_, "disc.head", flat, head, rng, sd, true);
      }
    }
  }

  Variant variant() const noexcept { return variant_; }
  const ModelDims& dims() const noexcept { return dims_; }
  ParameterStore<T>& params() noexcept { return store_; }
  const ParameterStore<T>& params() const noexcept { return store_; }
  bool has_discriminator() const noexcept { return disc_head_.has_value(); }

  std::size_t decoder_input_dim() const {
    switch (variant_) {
      case Variant::kConcatCGAN: return dims_.condition_dim + dims_.noise_dim;
      case Variant::kCBNCGAN: return dims_.noise_dim;
      default: return dims_.latent_dim;
    }
  }

  /// Trainable parameters of the generator side (encoder(s) + decoder).
  std::vector<std::size_t> generator_params() const {
    auto out = store_.trainable_with_prefix("enc");
    auto dec = store_.trainable_with_prefix("dec.");
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  std::vector<std::size_t> discriminator_params() const {
    return store_.trainable_with_prefix("disc.");
  }

  // ---------------------------------------------------------------- batched

  /// Posterior q(z | c, phi): conditions (B x N_c), noise (B x N_phi).
  Posterior encode(Tape<T>& tape, const Tensor<T>& conditions, const Tensor<T>& noise) {
    if (variant_ != Variant::kVCGAN) {
      throw std::logic_error("encode: only the VCGAN variant has a condition encoder (got " +
                             to_string(variant_) + ")");
    }
    check_matrix("encode: conditions", conditions, dims_.condition_dim);
    check_matrix("encode: noise", noise, dims_.noise_dim);
    if (conditions.dim(0) != noise.dim(0)) throw std::invalid_argument("encode: batch sizes differ");
    return run_encoder(tape, concat_cols(tape.constant(conditions), tape.constant(noise)));
  }

  /// CVAE posterior q(z | x, c) from samples (B x sample shape) and conditions.
  Posterior encode_cvae(Tape<T>& tape, const Var<T>& samples, const Tensor<T>& conditions) {
    if (variant_ != Variant::kCVAE) {
      throw std::logic_error("encode_cvae: requires the CVAE variant (got " + to_string(variant_) + ")");
    }
    check_matrix("encode_cvae: conditions", conditions, dims_.condition_dim);
    const std::size_t b = samples.shape().at(0);
    if (samples.value().size() != b * dims_.sample_size() || conditions.dim(0) != b) {
      throw std::invalid_argument("encode_cvae: sample batch does not match configured shape");
    }
    Var<T> flat = reshape(samples, Shape{b, dims_.sample_size()});
    return run_encoder(tape, concat_cols(flat, tape.constant(conditions)));
  }

  /// Decoder G: input (B x decoder_input_dim) to samples (B x sample shape),
  /// tanh output. `class_index` drives conditional batch norm (CBN variant).
  Var<T> decode(Tape<T>& tape, const Var<T>& input, std::span<const std::size_t> class_index,
                NormMode mode) {
    if (input.shape().size() != 2 || input.shape()[1] != decoder_input_dim()) {
      throw std::invalid_argument("decode: expected (batch x " + std::to_string(decoder_input_dim()) +
                                  ") input, got " + shape_string(input.shape()));
    }
    const std::size_t b = input.shape()[0];
    if (variant_ == Variant::kCBNCGAN && class_index.size() != b) {
      throw std::invalid_argument("decode: CBN variant needs a class index per sample");
    }
    std::size_t norm_i = 0;
    auto norm = [&](const Var<T>& h) {
      if (!dec_cbn_.empty()) return dec_cbn_.at(norm_i++)(tape, store_, h, class_index, mode);
      if (!dec_bn_.empty()) return dec_bn_.at(norm_i++)(tape, store_, h, mode);
      return h;
    };
    Var<T> h = input;
    if (dims_.arch == Architecture::kMlp) {
      for (std::size_t i = 0; i + 1 < dec_fc_.size(); ++i) h = relu(norm(dec_fc_[i](tape, store_, h)));
      h = tanh(dec_fc_.back()(tape, store_, h));
    } else {
      const std::size_t c0 = 2 * dims_.conv_channels;
      h = dec_fc_[0](tape, store_, h);
      h = reshape(h, Shape{b, c0, dims_.sample_shape[1] / 2, dims_.sample_shape[2] / 2});
      h = relu(norm(h));
      h = relu(norm(dec_conv_[0](tape, store_, h)));
      h = tanh(dec_conv_[1](tape, store_, h));
    }
    Shape out{b};
    out.insert(out.end(), dims_.sample_shape.begin(), dims_.sample_shape.end());
    return reshape(h, out);
  }

  /// Discriminator logits (B x K+2). Column 0 is the source logit; columns
  /// 1..K+1 are the class logits with "Others" last. `update_spectral`
  /// advances the power-iteration vectors.
  Var<T> discriminate(Tape<T>& tape, const Var<T>& samples, NormMode mode, bool update_spectral) {
    if (!has_discriminator()) throw std::logic_error("discriminate: CVAE variant has no discriminator");
    const std::size_t b = samples.shape().at(0);
    if (samples.value().size() != b * dims_.sample_size()) {
      throw std::invalid_argument("discriminate: sample batch " + shape_string(samples.shape()) +
                                  " does not match configured shape " + shape_string(dims_.sample_shape));
    }
    const std::size_t sn = update_spectral ? dims_.spectral_iterations : 0;
    const T slope = static_cast<T>(dims_.leaky_slope);
    Var<T> h;
    if (dims_.arch == Architecture::kMlp) {
      h = reshape(samples, Shape{b, dims_.sample_size()});
      std::size_t bn_i = 0;
      for (std::size_t i = 0; i < disc_fc_.size(); ++i) {
        h = disc_fc_[i](tape, store_, h, sn);
        if (i > 0 && !disc_bn_.empty()) h = disc_bn_[bn_i++](tape, store_, h, mode);
        h = leaky_relu(h, slope);
      }
    } else {
      Shape img{b};
      img.insert(img.end(), dims_.sample_shape.begin(), dims_.sample_shape.end());
      h = reshape(samples, img);
      h = leaky_relu(disc_conv_[0](tape, store_, h, sn), slope);
      h = disc_conv_[1](tape, store_, h, sn);
      if (!disc_bn_.empty()) h = disc_bn_[0](tape, store_, h, mode);
      h = leaky_relu(h, slope);
      h = reshape(h, Shape{b, h.value().size() / b});
    }
    return (*disc_head_)(tape, store_, h, sn);
  }

  /// Draws generation noise for a batch. Truncation applies to the latent
  /// draw: eps for VCGAN and CVAE, phi for the CGAN baselines.
  GenerationNoise<T> draw_noise(std::size_t batch, const TruncationRange& range, Rng& rng) const {
    GenerationNoise<T> n;
    const TruncationRange none = TruncationRange::none();
    auto fill = [&](std::size_t cols, const TruncationRange& r) {
      Tensor<T> t(Shape{batch, cols});
      for (auto& v : t.data()) v = static_cast<T>(truncated_standard_normal(r, rng));
      return t;
    };
    switch (variant_) {
      case Variant::kVCGAN:
        n.phi = fill(dims_.noise_dim, none);
        n.eps = fill(dims_.latent_dim, range);
        break;
      case Variant::kConcatCGAN:
      case Variant::kCBNCGAN:
        n.phi = fill(dims_.noise_dim, range);
        break;
      case Variant::kCVAE:
        n.eps = fill(dims_.latent_dim, range);
        break;
    }
    return n;
  }

  /// Full generator path for a batch: conditions (B x N_c) and, for CBN, a
  /// class index per sample.
  GeneratorTrace generator_forward(Tape<T>& tape, const Tensor<T>& conditions,
                                   std::span<const std::size_t> class_index,
                                   const GenerationNoise<T>& noise, NormMode mode) {
    check_matrix("generate: conditions", conditions, dims_.condition_dim);
    const std::size_t b = conditions.dim(0);
    GeneratorTrace tr;
    switch (variant_) {
      case Variant::kVCGAN: {
        Posterior post = encode(tape, conditions, noise.phi);
        tr.latent = reparameterize(post.mean, post.log_variance, noise.eps);
        tr.posterior = post;
        break;
      }
      case Variant::kConcatCGAN:
        check_matrix("generate: noise", noise.phi, dims_.noise_dim);
        tr.latent = concat_cols(tape.constant(conditions), tape.constant(noise.phi));
        break;
      case Variant::kCBNCGAN:
        if (class_index.size() != b) {
          throw std::invalid_argument("generate: CBN variant requires a class index for every sample");
        }
        check_matrix("generate: noise", noise.phi, dims_.noise_dim);
        tr.latent = tape.constant(noise.phi);
        break;
      case Variant::kCVAE:
        check_matrix("generate: latent", noise.eps, dims_.latent_dim);
        tr.latent = tape.constant(noise.eps);
        break;
    }
    tr.sample = decode(tape, tr.latent, class_index, mode);
    return tr;
  }

  // ------------------------------------------------------------ per sample

  DiagonalGaussian<T> encode(const ConditionVector& c, std::span<const T> phi) {
    Tape<T> tape;
    Tensor<T> ct = row(c.values);
    Tensor<T> pt = row(std::vector<double>(phi.begin(), phi.end()));
    Posterior p = encode(tape, ct, pt);
    return to_gaussian(p.mean.value(), p.log_variance.value());
  }

  DiagonalGaussian<T> encode_cvae(const Tensor<T>& sample, const ConditionVector& c) {
    Tape<T> tape;
    Shape s{1};
    s.insert(s.end(), sample.shape().begin(), sample.shape().end());
    Posterior p = encode_cvae(tape, tape.constant(sample.reshaped(s)), row(c.values));
    return to_gaussian(p.mean.value(), p.log_variance.value());
  }

  /// Decodes one latent vector in inference mode; `class_index` only for CBN.
  Tensor<T> decode(std::span<const T> z, std::optional<std::size_t> class_index = std::nullopt) {
    Tape<T> tape;
    std::vector<std::size_t> idx;
    if (class_index) idx.push_back(*class_index);
    Var<T> x = decode(tape, tape.constant(row(std::vector<double>(z.begin(), z.end()))), idx,
                      NormMode::kInference);
    return x.value().reshaped(dims_.sample_shape);
  }

  DiscriminatorOutput discriminate(const Tensor<T>& sample) {
    if (sample.shape() != dims_.sample_shape) {
      throw std::invalid_argument("discriminate: sample shape " + shape_string(sample.shape()) +
                                  " does not match configured " + shape_string(dims_.sample_shape));
    }
    Tape<T> tape;
    Shape s{1};
    s.insert(s.end(), sample.shape().begin(), sample.shape().end());
    Var<T> logits = discriminate(tape, tape.constant(sample.reshaped(s)), NormMode::kInference, false);
    return head_output(logits.value(), 0);
  }

  /// Splits a row of head logits into source probability and class distribution.
  DiscriminatorOutput head_output(const Tensor<T>& logits, std::size_t row_index) const {
    const std::size_t w = dims_.num_classes + 2;
    const T* r = &logits[row_index * w];
    DiscriminatorOutput out;
    out.source_prob = static_cast<double>(sigmoid_value(r[0]));
    std::vector<double> logit(r + 1, r + w);
    double mx = logit[0];
    for (double v : logit) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : logit) z += (v = std::exp(v - mx));
    for (double& v : logit) v /= z;
    out.class_probs = std::move(logit);
    return out;
  }

  /// Generates one sample from explicit noise (batch of one, inference mode).
  Tensor<T> generate_from(const ConditionVector& c, const GenerationNoise<T>& noise,
                          Tensor<T>* latent = nullptr) {
    if (variant_ == Variant::kCBNCGAN && !c.class_index) {
      throw std::invalid_argument("generate: CBN variant requires a class index");
    }
    Tape<T> tape;
    std::vector<std::size_t> idx;
    if (c.class_index) idx.push_back(*c.class_index);
    auto tr = generator_forward(tape, row(c.values), idx, noise, NormMode::kInference);
    if (latent) *latent = tr.latent.value();
    return tr.sample.value().reshaped(dims_.sample_shape);
  }

  /// Test-time generation: phi ~ N(0, I), posterior from the encoder, z from
  /// the truncated posterior, x = G(z). Baselines follow their own paths.
  Tensor<T> generate(const ConditionVector& c, const TruncationRange& range, Rng& rng,
                     Tensor<T>* latent = nullptr) {
    return generate_from(c, draw_noise(1, range, rng), latent);
  }

  /// Batched one-hot generation in inference mode, (B x sample shape).
  Tensor<T> generate_batch(std::span<const std::size_t> classes, const TruncationRange& range, Rng& rng) {
    if (classes.empty()) throw std::invalid_argument("generate_batch: empty class list");
    Tape<T> tape;
    auto tr = generator_forward(tape, one_hot_batch<T>(classes, dims_.num_classes), classes,
                                draw_noise(classes.size(), range, rng), NormMode::kInference);
    return tr.sample.value();
  }

  /// Generation along (1 - t) c_a + t c_b for t in linspace(0, 1, steps) with
  /// one noise draw held fixed across all steps.
  std::vector<Tensor<T>> interpolate_conditions(const ConditionVector& c_a, const ConditionVector& c_b,
                                                std::size_t steps, const GenerationNoise<T>& noise) {
    if (steps < 2) throw std::invalid_argument("interpolate_conditions: need at least 2 steps");
    if (c_a.values.size() != c_b.values.size()) {
      throw std::invalid_argument("interpolate_conditions: condition lengths differ");
    }
    std::vector<Tensor<T>> out;
    for (std::size_t s = 0; s < steps; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
      ConditionVector c = s == 0 ? c_a : s + 1 == steps ? c_b : ConditionVector::lerp(c_a, c_b, t);
      out.push_back(generate_from(c, noise));
    }
    return out;
  }

  /// As above with phi fixed by the caller and eps drawn once from `rng`.
  std::vector<Tensor<T>> interpolate_conditions(const ConditionVector& c_a, const ConditionVector& c_b,
                                                std::size_t steps, const Tensor<T>& phi,
                                                const TruncationRange& range, Rng& rng) {
    GenerationNoise<T> noise = draw_noise(1, range, rng);
    if (!noise.phi.empty()) {
      if (phi.size() != dims_.noise_dim) throw std::invalid_argument("interpolate_conditions: phi length");
      noise.phi = phi.reshaped(Shape{1, dims_.noise_dim});
    }
    return interpolate_conditions(c_a, c_b, steps, noise);
  }

 private:
  struct EncoderLayers {
    std::vector<LinearLayer<T>> hidden;
    LinearLayer<T> mean_head;
    LinearLayer<T> logvar_head;
  };

  void build_mlp_encoder(const std::string& prefix, std::size_t in, std::optional<EncoderLayers>& enc,
                         Rng& rng) {
    EncoderLayers e;
    std::size_t width = in;
    for (std::size_t i = 0; i < dims_.encoder_hidden.size(); ++i) {
      e.hidden.push_back(LinearLayer<T>::create(store_, prefix + ".fc" + std::to_string(i), width,
                                                dims_.encoder_hidden[i], rng, dims_.init_stddev, false));
      width = dims_.encoder_hidden[i];
    }
    e.mean_head = LinearLayer<T>::create(store_, prefix + ".mean", width, dims_.latent_dim, rng,
                                         dims_.init_stddev, false);
    e.logvar_head = LinearLayer<T>::create(store_, prefix + ".logvar", width, dims_.latent_dim, rng,
                                           dims_.init_stddev, false);
    enc = std::move(e);
  }

  Posterior run_encoder(Tape<T>& tape, Var<T> h) {
    for (const auto& l : encoder_->hidden) h = relu(l(tape, store_, h));
    Var<T> mean = encoder_->mean_head(tape, store_, h);
    Var<T> logvar = clamp(encoder_->logvar_head(tape, store_, h), static_cast<T>(kLogVarianceMin),
                          static_cast<T>(kLogVarianceMax));
    return {mean, logvar};
  }

  static void check_matrix(const char* what, const Tensor<T>& t, std::size_t cols) {
    if (t.rank() != 2 || t.dim(1) != cols) {
      throw std::invalid_argument(std::string(what) + ": expected (batch x " + std::to_string(cols) +
                                  "), got " + shape_string(t.shape()));
    }
  }

  static Tensor<T> row(const std::vector<double>& v) {
    Tensor<T> t(Shape{1, v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
    return t;
  }

  static DiagonalGaussian<T> to_gaussian(const Tensor<T>& mean, const Tensor<T>& logvar) {
    return DiagonalGaussian<T>(std::vector<T>(mean.data().begin(), mean.data().end()),
                               std::vector<T>(logvar.data().begin(), logvar.data().end()));
  }

  Variant variant_;
  ModelDims dims_;
  ParameterStore<T> store_;
  std::optional<EncoderLayers> encoder_;
  std::vector<LinearLayer<T>> dec_fc_;
  std::vector<ConvLayer<T>> dec_conv_;
  std::vector<BatchNormLayer<T>> dec_bn_;
  std::vector<CondBatchNormLayer<T>> dec_cbn_;
  std::vector<LinearLayer<T>> disc_fc_;
  std::vector<ConvLayer<T>> disc_conv_;
  std::vector<BatchNormLayer<T>> disc_bn_;
  std::optional<LinearLayer<T>> disc_head_;
};

}  // namespace vcgan
