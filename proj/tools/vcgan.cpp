// Command-line front end: train, sample, eval, interpolate, ablate, gradcheck.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vcgan/vcgan.hpp"

namespace {

using namespace vcgan;
using namespace vcgan::harness;

/// `--<key> value` for every config key; set values are applied after the
/// config file so the command line wins.
struct ConfigOverrides {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_path, "config file (key = value)")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) app.add_option("--" + key, values[key], "override config key " + key);
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& [k, v] : values)
      if (!v.empty()) apply_setting(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_report(const ScoreReport& r) { std::cout << r.to_csv(); }

int cmd_train(const ConfigOverrides& o) {
  const ExperimentConfig cfg = o.resolve();
  std::cout << "training " << to_string(cfg.variant) << " on " << to_string(cfg.dataset) << " for " << cfg.steps
            << " steps into " << cfg.output_dir << "\n";
  const ExperimentResult res = run_experiment(cfg);
  if (res.last_report) {
    const LossReport& r = *res.last_report;
    std::cout << "step " << r.step << " loss_d " << format_number(r.loss_d) << " loss_g " << format_number(r.loss_g)
              << " kl " << format_number(r.kl) << "\n";
  }
  if (res.final_scores) print_report(*res.final_scores);
  std::printf("checkpoint hash %016llx\n", static_cast<unsigned long long>(res.checkpoint_hash));
  return 0;
}

std::vector<std::pair<std::string, std::string>> range_override(const std::string& truncation) {
  if (truncation.empty()) return {};
  return {{"truncation", truncation}};
}

int cmd_sample(const std::string& ckpt, const std::string& out, const std::string& truncation, std::size_t per_class,
               std::uint64_t seed) {
  auto ex = load_experiment(ckpt, range_override(truncation));
  const auto& cfg = ex->config();
  const std::size_t k = cfg.num_classes;
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < k; ++c) classes.insert(classes.end(), per_class, c);
  Rng rng(seed);
  Tensor<float> s = ex->bundle().generate_batch(classes, cfg.truncation, rng);
  std::string path;
  if (cfg.is_image()) {
    path = out + ".pgm";
    emit_sample_grid(s, k, per_class, path);
  } else {
    path = out + ".csv";
    emit_scatter(s, classes, path);
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& out, const std::string& truncation) {
  auto ex = load_experiment(ckpt, range_override(truncation));
  const ScoreReport r = ex->evaluator().evaluate(ex->bundle(), ex->config().truncation);
  if (!out.empty()) r.write(out);
  print_report(r);
  return 0;
}

int cmd_interpolate(const std::string& ckpt, const std::string& out, const std::string& truncation,
                    std::size_t from, std::size_t to, std::size_t steps, std::size_t rows, std::uint64_t seed) {
  auto ex = load_experiment(ckpt, range_override(truncation));
  Rng rng(seed);
  const Tensor<float> grid = interpolation_grid(ex->bundle(), from, to, steps, rows, ex->config().truncation, rng);
  std::cout << "wrote " << emit_interpolation(grid, steps, ex->config().is_image(), out) << "\n";
  return 0;
}

int cmd_ablate(const ConfigOverrides& o, const std::string& variants, const std::string& ranges,
               const std::string& seeds) {
  const ExperimentConfig cfg = o.resolve();
  std::vector<Variant> vs;
  for (const auto& v : split_list(variants)) vs.push_back(parse_variant(v));
  std::vector<TruncationRange> rs;
  for (const auto& r : split_list(ranges)) rs.push_back(TruncationRange::parse(r));
  std::vector<std::uint64_t> ss;
  for (const auto& s : split_list(seeds)) ss.push_back(std::stoull(s));
  if (vs.empty() || rs.empty() || ss.empty()) throw CLI::ValidationError("ablate", "empty variant/range/seed list");
  const auto rows = ablation_run(cfg, vs, rs, ss);
  std::cout << ablation_csv(rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
  return failed == 0 ? 0 : 1;
}

int cmd_gradcheck(std::uint64_t seed) {
  std::size_t failed = 0;
  for (const auto& r : run_gradcheck_suite(seed)) {
    std::printf("%-4s %-48s %.3e  %s\n", r.passed() ? "ok" : "FAIL", r.name.c_str(), r.max_relative_error,
                r.worst.c_str());
    failed += r.passed() ? 0 : 1;
  }
  std::printf("%zu failed\n", failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional GAN toolkit with a variational generator"};
  app.require_subcommand(1);

  ConfigOverrides train_opts;
  auto* train = app.add_subcommand("train", "train one model and write log, checkpoint, scores and samples");
  train_opts.attach(*train);

  std::string ckpt, out, truncation;
  std::size_t per_class = 8, from = 0, to = 1, steps = 8, rows = 4;
  std::uint64_t seed = 1;

  auto* sample = app.add_subcommand("sample", "generate a class-by-row sample grid or scatter from a checkpoint");
  sample->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("-o,--out", out, "output path without extension")->required();
  sample->add_option("--truncation", truncation, "none or a sigma multiplier");
  sample->add_option("--per-class", per_class, "samples per class")->check(CLI::PositiveNumber);
  sample->add_option("--seed", seed, "generation seed");

  auto* eval = app.add_subcommand("eval", "score a checkpoint (IS, FID, mode coverage)");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out", out, "score CSV path");
  eval->add_option("--truncation", truncation, "none or a sigma multiplier");

  auto* interp = app.add_subcommand("interpolate", "interpolate between two class conditions with fixed noise");
  interp->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  interp->add_option("-o,--out", out, "output path without extension")->required();
  interp->add_option("--from", from, "start class");
  interp->add_option("--to", to, "end class");
  interp->add_option("--steps", steps, "interpolation steps")->check(CLI::Range(2, 1000));
  interp->add_option("--rows", rows, "noise draws, one per row")->check(CLI::PositiveNumber);
  interp->add_option("--truncation", truncation, "none or a sigma multiplier");
  interp->add_option("--seed", seed, "noise seed");

  ConfigOverrides ablate_opts;
  std::string variants = "vcgan,concat_cgan,cbn_cgan,cvae", ranges = "none,2,1.5,1,0.5", seeds = "1";
  auto* ablate = app.add_subcommand("ablate", "train variants per seed and sweep test-time truncation");
  ablate_opts.attach(*ablate);
  ablate->add_option("--variants", variants, "comma-separated variants");
  ablate->add_option("--ranges", ranges, "comma-separated truncation ranges");
  ablate->add_option("--seeds", seeds, "comma-separated seeds");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of primitives and losses");
  gc->add_option("--seed", seed, "input seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts);
    if (*sample) return cmd_sample(ckpt, out, truncation, per_class, seed);
    if (*eval) return cmd_eval(ckpt, out, truncation);
    if (*interp) return cmd_interpolate(ckpt, out, truncation, from, to, steps, rows, seed);
    if (*ablate) return cmd_ablate(ablate_opts, variants, ranges, seeds);
    if (*gc) return cmd_gradcheck(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
