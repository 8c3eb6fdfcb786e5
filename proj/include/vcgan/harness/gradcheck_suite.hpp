#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vcgan/diffcore.hpp"
#include "vcgan/models.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/rng.hpp"
#include "vcgan/training.hpp"

namespace vcgan::harness {

namespace detail {

using DVar = Var<double>;
using DTensor = Tensor<double>;
using Fn = std::function<DVar(Tape<double>&, std::span<const DVar>)>;

inline DTensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, double offset = 0.0) {
  DTensor t(std::move(shape));
  for (auto& v : t.data()) v = offset + scale * rng.normal();
  return t;
}

/// Values bounded away from 0 so that kinks (relu, clamp edges) are not straddled.
inline DTensor kink_free(Shape shape, Rng& rng) {
  DTensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double m = 0.2 + rng.uniform();
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

/// Reduces any output to a scalar with fixed random weights so every output
/// element contributes a distinct amount.
inline DVar weighted_sum(const DVar& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, y.tape().constant(random_tensor(y.shape(), rng))));
}

inline ModelDims tiny_dims(Variant v, bool conv) {
  ModelDims d;
  d.num_classes = 3;
  d.condition_dim = 3;
  d.noise_dim = 3;
  d.latent_dim = 2;
  d.encoder_hidden = {4, 4};
  d.decoder_hidden = {4, 4};
  d.disc_hidden = {4, 4};
  d.init_stddev = 0.5;
  d.conv_channels = 2;
  if (conv) {
    d.arch = Architecture::kConv;
    d.sample_shape = {1, 4, 4};
  }
  (void)v;
  return d;
}

}  // namespace detail

/// Finite-difference checks of every differentiable primitive and of the
/// assembled losses on tiny randomized networks.
inline std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 1, GradCheckOptions opt = {}) {
  using namespace detail;
  Rng rng(seed);
  std::vector<GradCheckResult> out;
  auto unary = [&](std::string name, std::function<DVar(const DVar&)> f, DTensor x) {
    const std::uint64_t ws = rng.next_u64();
    out.push_back(check_input_gradients(
        std::move(name), [f, ws](Tape<double>&, std::span<const DVar> in) { return weighted_sum(f(in[0]), ws); },
        {std::move(x)}, opt));
  };
  auto nary = [&](std::string name, Fn f, std::vector<DTensor> xs) {
    const std::uint64_t ws = rng.next_u64();
    out.push_back(check_input_gradients(
        std::move(name), [f, ws](Tape<double>& t, std::span<const DVar> in) { return weighted_sum(f(t, in), ws); },
        std::move(xs), opt));
  };

  const Shape m{3, 4};
  nary("add", [](Tape<double>&, std::span<const DVar> v) { return add(v[0], v[1]); },
       {random_tensor(m, rng), random_tensor(m, rng)});
  nary("sub", [](Tape<double>&, std::span<const DVar> v) { return sub(v[0], v[1]); },
       {random_tensor(m, rng), random_tensor(m, rng)});
  nary("mul", [](Tape<double>&, std::span<const DVar> v) { return mul(v[0], v[1]); },
       {random_tensor(m, rng), random_tensor(m, rng)});
  unary("scale", [](const DVar& x) { return scale(x, 1.7); }, random_tensor(m, rng));
  unary("add_scalar", [](const DVar& x) { return add_scalar(x, -0.3); }, random_tensor(m, rng));
  unary("square", [](const DVar& x) { return square(x); }, random_tensor(m, rng));
  unary("exp", [](const DVar& x) { return exp(x); }, random_tensor(m, rng, 0.5));
  unary("log", [](const DVar& x) { return log(x); }, random_tensor(m, rng, 0.1, 2.0));
  unary("relu", [](const DVar& x) { return relu(x); }, kink_free(m, rng));
  unary("leaky_relu", [](const DVar& x) { return leaky_relu(x, 0.2); }, kink_free(m, rng));
  unary("tanh", [](const DVar& x) { return tanh(x); }, random_tensor(m, rng));
  unary("sigmoid", [](const DVar& x) { return sigmoid(x); }, random_tensor(m, rng, 2.0));
  unary("log_sigmoid", [](const DVar& x) { return log_sigmoid(x); }, random_tensor(m, rng, 3.0));
  unary("clamp", [](const DVar& x) { return clamp(x, -1.5, 1.5); }, kink_free(m, rng));
  unary("reshape", [](const DVar& x) { return reshape(x, Shape{4, 3}); }, random_tensor(m, rng));
  unary("sum", [](const DVar& x) { return sum(x); }, random_tensor(m, rng));
  unary("mean", [](const DVar& x) { return mean(x); }, random_tensor(m, rng));
  unary("sum_rows", [](const DVar& x) { return sum_rows(x); }, random_tensor(m, rng));
  nary("matmul", [](Tape<double>&, std::span<const DVar> v) { return matmul(v[0], v[1]); },
       {random_tensor(m, rng), random_tensor(Shape{4, 5}, rng)});
  nary("linear", [](Tape<double>&, std::span<const DVar> v) { return linear(v[0], v[1], v[2]); },
       {random_tensor(m, rng), random_tensor(Shape{5, 4}, rng), random_tensor(Shape{5}, rng)});
  nary("add_bias", [](Tape<double>&, std::span<const DVar> v) { return add_bias(v[0], v[1]); },
       {random_tensor(Shape{2, 3, 2, 2}, rng), random_tensor(Shape{3}, rng)});
  unary("softmax", [](const DVar& x) { return softmax(x); }, random_tensor(m, rng, 2.0));
  unary("log_softmax", [](const DVar& x) { return log_softmax(x); }, random_tensor(m, rng, 2.0));
  nary("concat_cols", [](Tape<double>&, std::span<const DVar> v) { return concat_cols(v[0], v[1]); },
       {random_tensor(m, rng), random_tensor(Shape{3, 2}, rng)});
  unary("slice_cols", [](const DVar& x) { return slice_cols(x, 1, 3); }, random_tensor(m, rng));
  unary("slice_rows", [](const DVar& x) { return slice_rows(x, 1, 3); }, random_tensor(m, rng));
  {
    const std::vector<std::size_t> idx{2, 0, 3};
    unary("pick", [idx](const DVar& x) { return pick(x, std::span<const std::size_t>(idx)); },
          random_tensor(m, rng));
  }
  for (std::size_t stride : {1, 2}) {
    const std::string s = std::to_string(stride);
    nary("conv2d_s" + s,
         [stride](Tape<double>&, std::span<const DVar> v) { return conv2d(v[0], v[1], stride, 1); },
         {random_tensor(Shape{2, 2, 5, 5}, rng), random_tensor(Shape{3, 2, 3, 3}, rng)});
    nary("conv_transpose2d_s" + s,
         [stride](Tape<double>&, std::span<const DVar> v) { return conv_transpose2d(v[0], v[1], stride, 1); },
         {random_tensor(Shape{2, 2, 3, 3}, rng), random_tensor(Shape{2, 3, 4, 4}, rng)});
  }
  nary("batch_norm",
       [](Tape<double>&, std::span<const DVar> v) {
         DTensor rm(Shape{3}), rv(Shape{3}, 1.0);
         return normalize_batch(v[0], NormMode::kTrainFrozen, rm, rv);
       },
       {random_tensor(Shape{4, 3, 2}, rng)});
  nary("channel_affine", [](Tape<double>&, std::span<const DVar> v) { return channel_affine(v[0], v[1], v[2]); },
       {random_tensor(Shape{4, 3}, rng), random_tensor(Shape{3}, rng), random_tensor(Shape{3}, rng)});
  {
    const std::vector<std::size_t> cls{0, 2, 1, 2};
    nary("conditional_batch_norm",
         [cls](Tape<double>&, std::span<const DVar> v) {
           DTensor rm(Shape{3}), rv(Shape{3}, 1.0);
           return conditional_batch_norm(v[0], std::span<const std::size_t>(cls), v[1], v[2],
                                         NormMode::kTrainFrozen, rm, rv);
         },
         {random_tensor(Shape{4, 3}, rng), random_tensor(Shape{3, 3}, rng), random_tensor(Shape{3, 3}, rng)});
  }
  {
    DTensor u = random_tensor(Shape{4}, rng);
    nary("spectral_normalize",
         [u](Tape<double>&, std::span<const DVar> v) {
           DTensor uu = u;
           return spectral_normalize(v[0], uu, 0);
         },
         {random_tensor(Shape{4, 5}, rng)});
  }
  {
    DTensor eps = random_tensor(Shape{3, 4}, rng);
    nary("reparameterize",
         [eps](Tape<double>&, std::span<const DVar> v) { return reparameterize(v[0], v[1], eps); },
         {random_tensor(Shape{3, 4}, rng), random_tensor(Shape{3, 4}, rng, 0.5)});
  }
  nary("kl_to_standard_normal",
       [](Tape<double>&, std::span<const DVar> v) { return kl_to_standard_normal(v[0], v[1]); },
       {random_tensor(Shape{3, 4}, rng), random_tensor(Shape{3, 4}, rng, 0.5)});

  // Assembled losses on tiny networks.
  const std::size_t b = 4;
  const std::vector<std::size_t> classes{0, 1, 2, 1};
  for (bool conv : {false, true}) {
    const std::string arch = conv ? "_conv" : "_mlp";
    for (Variant v : {Variant::kVCGAN, Variant::kConcatCGAN, Variant::kCBNCGAN, Variant::kCVAE}) {
      ModelBundle<double> bundle(v, tiny_dims(v, conv), rng.next_u64());
      // zero-initialized biases put dead-input units exactly on the relu kink
      for (auto& p : bundle.params())
        if (p.trainable)
          for (auto& x : p.value.data()) x += 0.1 * rng.normal();
      const ModelDims& d = bundle.dims();
      Shape xs{b};
      xs.insert(xs.end(), d.sample_shape.begin(), d.sample_shape.end());
      Batch<double> real = make_batch(random_tensor(xs, rng, 0.5), classes, d.num_classes);
      GenerationNoise<double> noise = bundle.draw_noise(b, TruncationRange::none(), rng);
      const std::string tag = to_string(v) + arch;
      const std::span<const std::size_t> cls(classes);
      if (v == Variant::kCVAE) {
        DTensor eps = random_tensor(Shape{b, d.latent_dim}, rng);
        out.push_back(check_parameter_gradients(
            "cvae_loss_" + tag, bundle.params(), bundle.generator_params(),
            [&](bool bp) {
              Tape<double> t;
              auto l = cvae_loss(t, bundle, real, eps, NormMode::kTrainFrozen);
              if (bp) t.backward(l.total);
              return l.total.value()[0];
            },
            opt));
        continue;
      }
      DTensor fake = random_tensor(xs, rng, 0.5);
      for (AcLoss ac : {AcLoss::kModified, AcLoss::kOriginal}) {
        out.push_back(check_parameter_gradients(
            "discriminator_loss_" + to_string(ac) + "_" + tag, bundle.params(), bundle.discriminator_params(),
            [&](bool bp) {
              Tape<double> t;
              auto l = discriminator_loss(t, bundle, real, fake, cls, ac, NormMode::kTrainFrozen, false);
              if (bp) t.backward(l.total);
              return l.total.value()[0];
            },
            opt));
      }
      const DTensor cond = one_hot_batch<double>(cls, d.num_classes);
      out.push_back(check_parameter_gradients(
          "generator_loss_" + tag, bundle.params(), bundle.generator_params(),
          [&](bool bp) {
            Tape<double> t;
            auto l = generator_loss(t, bundle, cond, cls, noise, 1.0, NormMode::kTrainFrozen, NormMode::kInference);
            if (bp) t.backward(l.total);
            return l.total.value()[0];
          },
          opt));
    }
  }
  return out;
}

}  // namespace vcgan::harness
