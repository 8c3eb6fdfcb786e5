#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vcgan/vcgan.hpp"

namespace {

using namespace vcgan;
using namespace vcgan::harness;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vcgan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig quick_config(const fs::path& dir) {
  ExperimentConfig c;
  c.noise_dim = 4;
  c.latent_dim = 4;
  c.encoder_hidden = {16, 16};
  c.decoder_hidden = {16, 16};
  c.disc_hidden = {16, 16};
  c.batch_size = 16;
  c.steps = 20;
  c.log_interval = 5;
  c.checkpoint_interval = 10;
  c.eval_samples = 200;
  c.is_groups = 2;
  c.classifier_steps = 300;
  c.output_dir = dir.string();
  return c;
}

// ------------------------------------------------------------------ config

TEST(Config, ParsesKeysCommentsAndLists) {
  const auto c = parse_config("# comment\n\nvariant = cbn_cgan\nencoder_hidden = 32,16\nkl_weight=0.5\ntruncation = 1.5\n");
  EXPECT_EQ(c.variant, Variant::kCBNCGAN);
  EXPECT_EQ(c.encoder_hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(c.kl_weight, 0.5);
  EXPECT_EQ(c.truncation, TruncationRange::sigma(1.5));
}

TEST(Config, RejectsUnknownDuplicateAndMalformedLines) {
  EXPECT_THROW(parse_config("no_such_key = 1\n"), ConfigError);
  try {
    parse_config("steps = 1\nseed = 2\nsteps = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  EXPECT_THROW(parse_config("steps\n"), ConfigError);
  EXPECT_THROW(parse_config("steps = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("variant = gan\n"), ConfigError);
  EXPECT_THROW(parse_config("gen_batchnorm = maybe\n"), ConfigError);
}

TEST(Config, EchoRoundTrips) {
  ExperimentConfig c;
  c.variant = Variant::kCVAE;
  c.lr_g = 1.25e-4;
  c.truncation = TruncationRange::sigma(0.5);
  c.disc_hidden = {7, 9};
  const std::string echo = config_echo(c);
  EXPECT_EQ(config_echo(parse_config(echo)), echo);
  for (const auto& k : config_keys()) EXPECT_NE(echo.find(k + " = "), std::string::npos) << k;
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"mixture2d.cfg", "shapes.cfg"}) {
    const fs::path p = fs::path(VCGAN_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(load_config(p.string()).validate()) << name;
  }
}

TEST(Config, ValidationRejectsDegenerateValues) {
  ExperimentConfig c;
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.log_interval = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ----------------------------------------------------------------- datasets

TEST(Datasets, MixtureMeansAndScaling) {
  MixtureSpec spec;
  const auto m = spec.means();
  ASSERT_EQ(m.size(), 8u);
  EXPECT_NEAR(m[0][0], 2.0, 1e-15);
  EXPECT_NEAR(m[2][1], 2.0, 1e-15);
  Rng rng(1);
  const auto set = make_mixture_dataset(spec, 500, rng);
  EXPECT_EQ(set.size(), 4000u);
  std::vector<double> sx(8), sy(8);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const float x = set.tensor().at(i, 0), y = set.tensor().at(i, 1);
    // means sit at r / (r + 4 sigma); beyond six sigma is never expected
    EXPECT_LE(std::hypot(x, y), (spec.radius + 6 * spec.sigma) / spec.scale());
    sx[set.labels[i]] += x;
    sy[set.labels[i]] += y;
  }
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(sx[k] / 500, m[k][0] / spec.scale(), 0.01);
    EXPECT_NEAR(sy[k] / 500, m[k][1] / spec.scale(), 0.01);
  }
}

TEST(Datasets, MixtureRejectsDegenerateSpecs) {
  EXPECT_THROW((MixtureSpec{8, 2.0, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((MixtureSpec{8, 0.0, 0.05}.validate()), std::invalid_argument);
  Rng rng(1);
  EXPECT_THROW(draw_mixture(MixtureSpec{}, {8}, rng), std::out_of_range);
}

TEST(Datasets, ShapesArePixelRangeAndDistinct) {
  ShapesSpec spec;
  spec.jitter = false;
  spec.brightness_min = spec.brightness_max = 1.0;
  Rng rng(2);
  const auto set = make_shapes_dataset(spec, 1, rng);
  ASSERT_EQ(set.tensor().shape(), (Shape{10, 1, 8, 8}));
  for (float v : set.tensor().data()) EXPECT_TRUE(v == -1.0f || v == 1.0f);
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      const auto pa = set.tensor().data().subspan(a * 64, 64), pb = set.tensor().data().subspan(b * 64, 64);
      EXPECT_FALSE(std::equal(pa.begin(), pa.end(), pb.begin())) << a << " vs " << b;
    }
}

class IdxFixture : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = scratch("idx"); }
  std::string img() const { return (dir_ / "img.idx").string(); }
  std::string lab() const { return (dir_ / "lab.idx").string(); }
  fs::path dir_;
};

TEST_F(IdxFixture, RoundTripsAndScales) {
  const std::vector<std::vector<std::uint8_t>> images{{0, 255, 128, 64, 1, 2}, {9, 8, 7, 6, 5, 4}};
  write_idx(img(), lab(), images, 2, 3, {3, 1});
  const auto set = load_idx(img(), lab());
  EXPECT_EQ(set.tensor().shape(), (Shape{2, 1, 2, 3}));
  EXPECT_EQ(set.labels, (std::vector<std::size_t>{3, 1}));
  EXPECT_FLOAT_EQ(set.tensor()[0], -1.0f);
  EXPECT_FLOAT_EQ(set.tensor()[1], 1.0f);
  EXPECT_FLOAT_EQ(set.tensor()[2], static_cast<float>(128 / 127.5 - 1.0));
}

IdxErrorCode idx_code(const std::string& a, const std::string& b) {
  try {
    load_idx(a, b);
  } catch (const IdxError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return IdxErrorCode::kIo;
}

TEST_F(IdxFixture, ErrorsAreClassified) {
  write_idx(img(), lab(), {{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2, {0, 1});
  const std::string good_img = slurp(img()), good_lab = slurp(lab());
  auto put = [](const std::string& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; };

  EXPECT_EQ(idx_code((dir_ / "missing").string(), lab()), IdxErrorCode::kIo);
  put(img(), good_lab);
  EXPECT_EQ(idx_code(img(), lab()), IdxErrorCode::kBadMagic);
  put(img(), good_img.substr(0, good_img.size() - 1));
  EXPECT_EQ(idx_code(img(), lab()), IdxErrorCode::kTruncated);
  put(img(), good_img + "x");
  EXPECT_EQ(idx_code(img(), lab()), IdxErrorCode::kDimMismatch);
  put(img(), good_img);
  write_idx((dir_ / "x").string(), lab(), {{1, 2, 3, 4}}, 2, 2, {0});
  EXPECT_EQ(idx_code(img(), lab()), IdxErrorCode::kCountMismatch);
  put(img(), good_img.substr(0, 10));
  EXPECT_EQ(idx_code(img(), lab()), IdxErrorCode::kTruncated);
}

TEST_F(IdxFixture, DataSourceDrawsStoredSamples) {
  write_idx(img(), lab(), {{0, 0, 0, 0}, {255, 255, 255, 255}}, 2, 2, {0, 1});
  ExperimentConfig c;
  c.dataset = DatasetKind::kIdx;
  c.num_classes = 2;
  c.idx_images = img();
  c.idx_labels = lab();
  DataSource src(c);
  EXPECT_EQ(src.sample_shape(), (Shape{1, 2, 2}));
  Rng rng(3);
  const auto b = src.batch(10, rng);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_FLOAT_EQ(b.samples[i * 4], b.class_indices[i] == 0 ? -1.0f : 1.0f);
  c.num_classes = 1;
  EXPECT_THROW((void)DataSource(c), ConfigError);
}

// -------------------------------------------------------------------- emit

TEST(Emit, GrayscaleGridHeaderAndPixels) {
  Tensor<float> s(Shape{4, 1, 8, 8}, -1.0f);
  const std::string bytes = sample_grid_bytes(s, 2, 2);
  const std::string header = "P5\n16 16\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 256);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) EXPECT_EQ(bytes[i], '\0');
  s.fill(1.0f);
  EXPECT_EQ(static_cast<unsigned char>(sample_grid_bytes(s, 2, 2).back()), 255);
  EXPECT_EQ(to_pixel(0.0f), 128);
  EXPECT_EQ(to_pixel(5.0f), 255);
  EXPECT_THROW(sample_grid_bytes(s, 3, 2), EmitError);
}

TEST(Emit, GridPlacesSamplesRowMajor) {
  Tensor<float> s(Shape{2, 1, 1, 1}, std::vector<float>{-1.0f, 1.0f});
  const auto dir = scratch("grid");
  emit_sample_grid(s, 1, 2, (dir / "g.pgm").string());
  const auto img = read_pnm((dir / "g.pgm").string());
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255}));
}

TEST(Emit, ScatterFormat) {
  EXPECT_EQ(scatter_csv({0.5f, -0.25f}, {3}), "x,y,class\n0.5,-0.25,3\n");
  EXPECT_EQ(scatter_csv({}, {}), "x,y,class\n");
  EXPECT_EQ(scatter_csv({1.0f / 3.0f, 2.0f}, {0}), "x,y,class\n0.333333,2,0\n");
  EXPECT_THROW(scatter_csv({1.0f}, {0}), EmitError);
  const auto dir = scratch("scatter");
  emit_scatter(std::vector<float>{0.5f, -0.25f, 0.125f, 1.0f}, {3, 4}, (dir / "s.csv").string());
  const auto pts = read_scatter((dir / "s.csv").string());
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1].label, 4u);
  EXPECT_DOUBLE_EQ(pts[1].x, 0.125);
}

// -------------------------------------------------------------- experiments

TEST(Experiment, SeedsAreDistinctPerConsumer) {
  const auto s = RunSeeds::derive(1);
  const std::set<std::uint64_t> all{s.init, s.trainer, s.data, s.classifier, s.reference, s.generation};
  EXPECT_EQ(all.size(), 6u);
  EXPECT_EQ(RunSeeds::derive(1).data, s.data);
  EXPECT_NE(RunSeeds::derive(2).data, s.data);
}

TEST(Experiment, ZeroStepsWritesCheckpointOnly) {
  const auto dir = scratch("zero");
  auto cfg = quick_config(dir);
  cfg.steps = 0;
  const auto res = run_experiment(cfg);
  EXPECT_EQ(res.steps_done, 0u);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_EQ(slurp(dir / "train_log.csv"), kTrainLogHeader);
  EXPECT_FALSE(res.final_scores.has_value());
}

TEST(Experiment, WritesArtifactsAndReproducesBytes) {
  const auto d1 = scratch("rep1"), d2 = scratch("rep2");
  const auto r1 = run_experiment(quick_config(d1));
  const auto r2 = run_experiment(quick_config(d2));
  EXPECT_EQ(r1.checkpoint_hash, r2.checkpoint_hash);
  for (const char* f : {"train_log.csv", "checkpoint.bin", "scores.csv", "samples.csv"}) {
    // the echo inside config.txt names the directory, so it is compared separately
    ASSERT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  const std::string log = slurp(d1 / "train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);  // header + steps 5, 10, 15, 20
  EXPECT_EQ(log.rfind(kTrainLogHeader, 0), 0u);
  EXPECT_EQ(slurp(d1 / "config.txt"), config_echo(quick_config(d1)));
  EXPECT_EQ(read_scatter((d1 / "samples.csv").string()).size(), 800u);
}

TEST(Experiment, DifferentSeedsDiffer) {
  const auto d1 = scratch("seed1"), d2 = scratch("seed2");
  auto c2 = quick_config(d2);
  c2.seed = 2;
  c2.steps = 5;
  auto c1 = quick_config(d1);
  c1.steps = 5;
  EXPECT_NE(run_experiment(c1).checkpoint_hash, run_experiment(c2).checkpoint_hash);
}

TEST(Experiment, ResumeAppendsAndMatchesStraightRun) {
  const auto straight = scratch("straight"), part = scratch("part");
  const auto full = run_experiment(quick_config(straight));
  auto first = quick_config(part);
  first.steps = 10;
  run_experiment(first);
  auto second = quick_config(part);
  second.resume_from = (part / "checkpoint.bin").string();
  const auto resumed = run_experiment(second);
  EXPECT_EQ(resumed.checkpoint_hash, full.checkpoint_hash);
  EXPECT_EQ(slurp(part / "train_log.csv"), slurp(straight / "train_log.csv"));
}

TEST(Experiment, ImageRunWritesGrid) {
  const auto dir = scratch("image");
  auto cfg = quick_config(dir);
  cfg.dataset = DatasetKind::kShapes;
  cfg.num_classes = 10;
  cfg.conv_channels = 4;
  cfg.steps = 3;
  cfg.eval_samples = 100;
  cfg.classifier_steps = 400;
  run_experiment(cfg);
  const auto img = read_pnm((dir / "samples.pgm").string());
  EXPECT_EQ(img.width, 64u);
  EXPECT_EQ(img.height, 80u);
  EXPECT_NE(slurp(dir / "scores.csv").find("features=classifier-penultimate"), std::string::npos);
}

TEST(Experiment, LoadExperimentAppliesOverrides) {
  const auto dir = scratch("load");
  auto cfg = quick_config(dir);
  cfg.steps = 5;
  const auto res = run_experiment(cfg);
  auto ex = load_experiment((dir / "checkpoint.bin").string(), {{"truncation", "0.5"}});
  EXPECT_EQ(ex->config().truncation, TruncationRange::sigma(0.5));
  EXPECT_EQ(ex->step(), 5u);
  auto same = load_experiment((dir / "checkpoint.bin").string());
  EXPECT_EQ(same->checkpoint_hash(), res.checkpoint_hash);
  EXPECT_NE(ex->checkpoint_hash(), res.checkpoint_hash);
}

TEST(Experiment, InterpolationGridEndpoints) {
  Experiment ex(quick_config(scratch("interp")));
  for (int i = 0; i < 5; ++i) ex.step_once();
  Rng a(4), b(4);
  const auto grid = interpolation_grid(ex.bundle(), 1, 6, 8, 3, TruncationRange::none(), a);
  ASSERT_EQ(grid.shape(), (Shape{24, 2}));
  for (std::size_t r = 0; r < 3; ++r) {
    const auto noise = ex.bundle().draw_noise(1, TruncationRange::none(), b);
    const auto start = ex.bundle().generate_from(ConditionVector::one_hot(1, 8), noise);
    const auto end = ex.bundle().generate_from(ConditionVector::one_hot(6, 8), noise);
    EXPECT_EQ(grid.at(r * 8, 0), start[0]);
    EXPECT_EQ(grid.at(r * 8, 1), start[1]);
    EXPECT_EQ(grid.at(r * 8 + 7, 0), end[0]);
    EXPECT_EQ(grid.at(r * 8 + 7, 1), end[1]);
  }
}

TEST(Ablation, OneRowPerVariantRangeSeedWithStableHash) {
  const auto dir = scratch("ablation");
  auto cfg = quick_config(dir);
  cfg.steps = 4;
  const auto ranges = TruncationRange::standard_sweep();
  const auto rows = ablation_run(cfg, {Variant::kVCGAN, Variant::kConcatCGAN}, ranges, {1});
  ASSERT_EQ(rows.size(), 2 * ranges.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_TRUE(rows[i].error.empty()) << rows[i].error;
    EXPECT_EQ(rows[i].checkpoint_hash, rows[i - i % ranges.size()].checkpoint_hash);
    EXPECT_TRUE(rows[i].fid.has_value());
  }
  const std::string csv = slurp(dir / "ablation.csv");
  EXPECT_EQ(csv, ablation_csv(rows));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
}

TEST(Ablation, TrainingFailuresAreRecorded) {
  const auto dir = scratch("ablation_fail");
  auto cfg = quick_config(dir);
  cfg.steps = 2;
  cfg.lr_d = 1e30;  // drives the discriminator to non-finite values
  cfg.lr_g = 1e30;
  const auto rows = ablation_run(cfg, {Variant::kConcatCGAN}, {TruncationRange::none()}, {1});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NE(rows[0].error.find("non-finite"), std::string::npos) << rows[0].error;
  EXPECT_NE(ablation_csv(rows).find("error,error,error"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "ablation_errors.txt"));
}

}  // namespace
