#include <gtest/gtest.h>

#include <cmath>

#include "vcgan/models.hpp"
#include "vcgan/rng.hpp"
#include "vcgan/training.hpp"

namespace {

using namespace vcgan;

ModelDims small_dims(Architecture arch) {
  ModelDims d;
  d.num_classes = 10;
  d.condition_dim = 10;
  d.noise_dim = 6;
  d.latent_dim = 5;
  d.encoder_hidden = {16, 12};
  d.decoder_hidden = {12, 12};
  d.disc_hidden = {12, 12};
  d.conv_channels = 4;
  d.arch = arch;
  d.sample_shape = arch == Architecture::kMlp ? Shape{2} : Shape{1, 8, 8};
  return d;
}

const Variant kAll[] = {Variant::kVCGAN, Variant::kConcatCGAN, Variant::kCBNCGAN, Variant::kCVAE};

TEST(Variant, NamesRoundTrip) {
  for (Variant v : kAll) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("gan"), std::invalid_argument);
}

TEST(ModelBundle, ShapeContracts) {
  for (Architecture arch : {Architecture::kMlp, Architecture::kConv}) {
    for (Variant v : kAll) {
      const ModelDims d = small_dims(arch);
      ModelBundle<float> m(v, d, 3);
      Rng rng(4);
      const std::vector<std::size_t> classes{0, 3, 9};
      Tape<float> t;
      auto tr = m.generator_forward(t, one_hot_batch<float>(classes, 10), classes,
                                    m.draw_noise(3, TruncationRange::none(), rng), NormMode::kTrain);
      Shape expect{3};
      expect.insert(expect.end(), d.sample_shape.begin(), d.sample_shape.end());
      EXPECT_EQ(tr.sample.shape(), expect) << to_string(v);
      for (float x : tr.sample.value().data()) {
        EXPECT_GE(x, -1.0f);
        EXPECT_LE(x, 1.0f);
      }
      if (v == Variant::kVCGAN) {
        ASSERT_TRUE(tr.posterior.has_value());
        EXPECT_EQ(tr.posterior->mean.shape(), (Shape{3, d.latent_dim}));
        EXPECT_EQ(tr.posterior->log_variance.shape(), (Shape{3, d.latent_dim}));
      } else {
        EXPECT_FALSE(tr.posterior.has_value());
      }
      if (m.has_discriminator()) {
        auto logits = m.discriminate(t, tr.sample, NormMode::kTrain, true);
        EXPECT_EQ(logits.shape(), (Shape{3, 12}));
      }
    }
  }
}

TEST(ModelBundle, DecoderInputWidthPerVariant) {
  const ModelDims d = small_dims(Architecture::kMlp);
  EXPECT_EQ(ModelBundle<float>(Variant::kVCGAN, d, 1).decoder_input_dim(), d.latent_dim);
  EXPECT_EQ(ModelBundle<float>(Variant::kConcatCGAN, d, 1).decoder_input_dim(), d.condition_dim + d.noise_dim);
  EXPECT_EQ(ModelBundle<float>(Variant::kCBNCGAN, d, 1).decoder_input_dim(), d.noise_dim);
  EXPECT_EQ(ModelBundle<float>(Variant::kCVAE, d, 1).decoder_input_dim(), d.latent_dim);
}

TEST(ModelBundle, ZeroEncoderGivesStandardPosterior) {
  ModelBundle<double> m(Variant::kVCGAN, small_dims(Architecture::kMlp), 5);
  for (auto& p : m.params())
    if (p.name.starts_with("enc")) p.value.fill(0.0);
  const std::vector<double> phi(6, 0.7);
  const auto post = m.encode(ConditionVector::one_hot(4, 10), std::span<const double>(phi));
  for (std::size_t j = 0; j < post.dim(); ++j) {
    EXPECT_EQ(post.mean()[j], 0.0);
    EXPECT_EQ(post.log_variance()[j], 0.0);
  }
}

TEST(ModelBundle, EncodeRejectsWrongSizes) {
  ModelBundle<double> m(Variant::kVCGAN, small_dims(Architecture::kMlp), 5);
  const std::vector<double> phi(5, 0.0);
  EXPECT_THROW(m.encode(ConditionVector::one_hot(1, 10), std::span<const double>(phi)), std::invalid_argument);
  ModelBundle<double> cc(Variant::kConcatCGAN, small_dims(Architecture::kMlp), 5);
  const std::vector<double> phi6(6, 0.0);
  EXPECT_THROW(cc.encode(ConditionVector::one_hot(1, 10), std::span<const double>(phi6)), std::logic_error);
  EXPECT_THROW(ConditionVector::one_hot(10, 10), std::out_of_range);
}

TEST(ModelBundle, DiscriminatorHeadSplitsSourceAndClasses) {
  ModelBundle<float> m(Variant::kVCGAN, small_dims(Architecture::kMlp), 6);
  const auto out = m.discriminate(Tensor<float>(Shape{2}, std::vector<float>{0.1f, -0.2f}));
  EXPECT_GT(out.source_prob, 0.0);
  EXPECT_LT(out.source_prob, 1.0);
  ASSERT_EQ(out.class_probs.size(), 11u);
  double s = 0;
  for (double p : out.class_probs) s += p;
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_THROW(m.discriminate(Tensor<float>(Shape{3})), std::invalid_argument);
  ModelBundle<float> cvae(Variant::kCVAE, small_dims(Architecture::kMlp), 6);
  EXPECT_FALSE(cvae.has_discriminator());
  EXPECT_TRUE(cvae.discriminator_params().empty());
}

TEST(ModelBundle, InterpolationEndpointsMatchOneHotGeneration) {
  for (Variant v : {Variant::kVCGAN, Variant::kConcatCGAN, Variant::kCVAE}) {
    ModelBundle<float> m(v, small_dims(Architecture::kMlp), 7);
    Rng rng(8);
    const auto noise = m.draw_noise(1, TruncationRange::none(), rng);
    const auto a = ConditionVector::one_hot(2, 10), b = ConditionVector::one_hot(7, 10);
    const auto path = m.interpolate_conditions(a, b, 8, noise);
    ASSERT_EQ(path.size(), 8u);
    EXPECT_EQ(path.front(), m.generate_from(a, noise)) << to_string(v);
    EXPECT_EQ(path.back(), m.generate_from(b, noise)) << to_string(v);
  }
}

TEST(ModelBundle, InterpolationArgumentChecks) {
  ModelBundle<float> m(Variant::kVCGAN, small_dims(Architecture::kMlp), 7);
  Rng rng(8);
  const auto noise = m.draw_noise(1, TruncationRange::none(), rng);
  const auto a = ConditionVector::one_hot(2, 10);
  EXPECT_THROW(m.interpolate_conditions(a, a, 1, noise), std::invalid_argument);
  EXPECT_THROW(m.interpolate_conditions(a, ConditionVector::one_hot(2, 9), 4, noise), std::invalid_argument);
  ModelBundle<float> cbn(Variant::kCBNCGAN, small_dims(Architecture::kMlp), 7);
  const auto cn = cbn.draw_noise(1, TruncationRange::none(), rng);
  EXPECT_THROW(cbn.interpolate_conditions(a, ConditionVector::one_hot(3, 10), 4, cn), std::invalid_argument);
}

TEST(ModelBundle, CvaeGenerationIgnoresTheCondition) {
  ModelBundle<float> m(Variant::kCVAE, small_dims(Architecture::kMlp), 9);
  Rng rng(10);
  const auto noise = m.draw_noise(1, TruncationRange::none(), rng);
  const auto x0 = m.generate_from(ConditionVector::one_hot(0, 10), noise);
  for (std::size_t k = 1; k < 10; ++k) EXPECT_EQ(m.generate_from(ConditionVector::one_hot(k, 10), noise), x0);
}

TEST(ModelBundle, VcganGenerationDependsOnTheCondition) {
  ModelBundle<float> m(Variant::kVCGAN, small_dims(Architecture::kMlp), 9);
  Rng rng(10);
  const auto noise = m.draw_noise(1, TruncationRange::none(), rng);
  EXPECT_NE(m.generate_from(ConditionVector::one_hot(0, 10), noise),
            m.generate_from(ConditionVector::one_hot(1, 10), noise));
}

TEST(ModelBundle, GeneratorParametersPerVariant) {
  auto names = [](const ModelBundle<float>& m) {
    std::vector<std::string> out;
    for (auto i : m.generator_params()) out.push_back(m.params()[i].name);
    return out;
  };
  auto any_prefix = [](const std::vector<std::string>& v, const std::string& p) {
    for (const auto& n : v)
      if (n.starts_with(p)) return true;
    return false;
  };
  const ModelDims d = small_dims(Architecture::kMlp);
  const auto vc = names(ModelBundle<float>(Variant::kVCGAN, d, 1));
  const auto cc = names(ModelBundle<float>(Variant::kConcatCGAN, d, 1));
  const auto cb = names(ModelBundle<float>(Variant::kCBNCGAN, d, 1));
  const auto cv = names(ModelBundle<float>(Variant::kCVAE, d, 1));
  EXPECT_TRUE(any_prefix(vc, "enc."));
  EXPECT_FALSE(any_prefix(cc, "enc"));
  EXPECT_TRUE(any_prefix(cb, "dec.fc0.norm.gain_table"));
  EXPECT_FALSE(any_prefix(vc, "dec.fc0.norm.gain_table"));
  EXPECT_TRUE(any_prefix(cv, "enc_img."));
  for (const auto* v : {&vc, &cc, &cb, &cv}) EXPECT_FALSE(any_prefix(*v, "disc."));
}

TEST(ModelBundle, GeneratorLossReachesExactlyTheVariantPath) {
  // Gradients of the generator loss must reach every generator parameter
  // that the variant's forward path uses.
  for (Variant v : {Variant::kVCGAN, Variant::kConcatCGAN, Variant::kCBNCGAN}) {
    ModelBundle<double> m(v, small_dims(Architecture::kMlp), 11);
    Rng rng(12);
    for (auto& p : m.params())
      if (p.trainable)
        for (auto& x : p.value.data()) x += 0.1 * rng.normal();
    const std::vector<std::size_t> classes{0, 1, 2, 3, 4, 5};
    m.params().zero_grad();
    Tape<double> t;
    auto loss = generator_loss(t, m, one_hot_batch<double>(classes, 10), classes,
                               m.draw_noise(6, TruncationRange::none(), rng));
    t.backward(loss.total);
    for (auto i : m.generator_params()) {
      const auto& p = m.params()[i];
      // a bias directly followed by batch norm has an exactly zero gradient
      if (p.name.starts_with("dec.fc") && p.name.ends_with(".bias") && p.name.find("norm") == std::string::npos)
        continue;
      double n = 0;
      for (double g : p.grad.data()) n += g * g;
      EXPECT_GT(n, 0.0) << to_string(v) << " " << p.name;
    }
  }
}

TEST(ModelBundle, ConstructionIsDeterministicPerSeed) {
  const ModelDims d = small_dims(Architecture::kConv);
  ModelBundle<float> a(Variant::kVCGAN, d, 21), b(Variant::kVCGAN, d, 21), c(Variant::kVCGAN, d, 22);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value);
    differs = differs || a.params()[i].value != c.params()[i].value;
  }
  EXPECT_TRUE(differs);
}

TEST(ModelDims, ValidationRejectsBadShapes) {
  ModelDims d = small_dims(Architecture::kConv);
  d.sample_shape = {1, 7, 8};
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d = small_dims(Architecture::kMlp);
  d.latent_dim = 0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

}  // namespace
