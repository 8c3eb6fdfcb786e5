#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/models.hpp"
#include "vcgan/probdist.hpp"
#include "vcgan/training.hpp"

namespace vcgan::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { kMixture2d, kShapes, kIdx };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kMixture2d: return "mixture2d";
    case DatasetKind::kShapes: return "shapes";
    case DatasetKind::kIdx: return "idx";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "mixture2d") return DatasetKind::kMixture2d;
  if (s == "shapes") return DatasetKind::kShapes;
  if (s == "idx") return DatasetKind::kIdx;
  throw ConfigError("unknown dataset '" + s + "'");
}

struct ExperimentConfig {
  // data
  DatasetKind dataset = DatasetKind::kMixture2d;
  std::size_t num_classes = 8;
  double mixture_radius = 2.0;
  double mixture_sigma = 0.05;
  bool shapes_jitter = true;
  double shapes_brightness_min = 0.6;
  double shapes_brightness_max = 1.0;
  std::string idx_images;
  std::string idx_labels;

  // model
  Variant variant = Variant::kVCGAN;
  std::size_t noise_dim = 128;
  std::size_t latent_dim = 128;
  std::vector<std::size_t> encoder_hidden{512, 256};
  std::vector<std::size_t> decoder_hidden{128, 128};
  std::vector<std::size_t> disc_hidden{128, 128};
  std::size_t conv_channels = 16;
  bool gen_batchnorm = true;
  bool disc_batchnorm = true;
  double init_stddev = 0.02;
  std::size_t spectral_iterations = 1;

  // optimization
  double lr_g = 0.0002;
  double lr_d = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 100;
  std::uint64_t steps = 20000;
  std::size_t disc_steps = 1;
  std::size_t gen_steps = 1;
  AcLoss ac_loss = AcLoss::kModified;
  double kl_weight = 1.0;
  std::uint64_t seed = 1;

  // evaluation and output
  TruncationRange truncation = TruncationRange::none();
  std::string output_dir = "runs/default";
  std::uint64_t log_interval = 100;
  std::uint64_t eval_interval = 0;  ///< 0: evaluate at the end only
  std::uint64_t checkpoint_interval = 1000;
  std::size_t eval_samples = 10000;
  std::size_t is_groups = 10;
  double coverage_threshold = 0.5;
  std::size_t classifier_steps = 2000;
  bool record_elapsed = false;
  std::string resume_from;

  bool is_image() const { return dataset != DatasetKind::kMixture2d; }

  /// Model dimensions implied by the data and model sections.
  ModelDims model_dims(const Shape& sample_shape) const {
    ModelDims d;
    d.num_classes = num_classes;
    d.condition_dim = num_classes;
    d.noise_dim = noise_dim;
    d.latent_dim = latent_dim;
    d.sample_shape = sample_shape;
    d.arch = sample_shape.size() == 3 ? Architecture::kConv : Architecture::kMlp;
    d.encoder_hidden = encoder_hidden;
    d.decoder_hidden = decoder_hidden;
    d.disc_hidden = disc_hidden;
    d.conv_channels = conv_channels;
    d.gen_batchnorm = gen_batchnorm;
    d.disc_batchnorm = disc_batchnorm;
    d.init_stddev = init_stddev;
    d.spectral_iterations = spectral_iterations;
    d.validate();
    return d;
  }

  TrainerConfig trainer_config() const {
    TrainerConfig t;
    t.generator_optimizer = {lr_g, beta1, beta2, adam_epsilon};
    t.discriminator_optimizer = {lr_d, beta1, beta2, adam_epsilon};
    t.ac_loss = ac_loss;
    t.kl_weight = kl_weight;
    t.batch_size = batch_size;
    t.disc_steps = disc_steps;
    t.gen_steps = gen_steps;
    return t;
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    positive(noise_dim, "noise_dim");
    positive(latent_dim, "latent_dim");
    positive(conv_channels, "conv_channels");
    positive(disc_steps, "disc_steps");
    positive(gen_steps, "gen_steps");
    positive(log_interval, "log_interval");
    positive(checkpoint_interval, "checkpoint_interval");
    positive(is_groups, "is_groups");
    positive(classifier_steps, "classifier_steps");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (eval_samples < 2 * num_classes) throw ConfigError("eval_samples must be >= 2 * num_classes");
    if (!(mixture_radius > 0.0)) throw ConfigError("mixture_radius must be positive");
    if (!(mixture_sigma > 0.0)) throw ConfigError("mixture_sigma must be positive (degenerate covariance)");
    if (!(shapes_brightness_min > 0.0 && shapes_brightness_min <= shapes_brightness_max &&
          shapes_brightness_max <= 1.0)) {
      throw ConfigError("shapes brightness must satisfy 0 < min <= max <= 1");
    }
    if (dataset == DatasetKind::kShapes && num_classes > 10) throw ConfigError("shapes supports at most 10 classes");
    if (dataset == DatasetKind::kIdx && (idx_images.empty() || idx_labels.empty())) {
      throw ConfigError("idx dataset needs idx_images and idx_labels");
    }
    if (!(coverage_threshold >= 0.0 && coverage_threshold <= 1.0)) {
      throw ConfigError("coverage_threshold must lie in [0,1]");
    }
    if (kl_weight < 0.0) throw ConfigError("kl_weight must be >= 0");
    trainer_config().generator_optimizer.validate();
    trainer_config().discriminator_optimizer.validate();
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(const std::string& key, const std::string& v) {
  U out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define VCGAN_SIZE_FIELD(name)                                                                         \
  Field {                                                                                              \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<std::size_t>(#name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.name); }                             \
  }
#define VCGAN_U64_FIELD(name)                                                                            \
  Field {                                                                                                \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<std::uint64_t>(#name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.name); }                               \
  }
#define VCGAN_DOUBLE_FIELD(name)                                                                       \
  Field {                                                                                              \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.name); }                                  \
  }
#define VCGAN_BOOL_FIELD(name)                                                                \
  Field {                                                                                     \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }     \
  }
#define VCGAN_STRING_FIELD(name)                                                    \
  Field {                                                                           \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = v; },          \
        [](const ExperimentConfig& c) { return c.name; }                           \
  }
#define VCGAN_LIST_FIELD(name)                                                                \
  Field {                                                                                     \
    #name, [](ExperimentConfig& c, const std::string& v) { c.name = parse_list(#name, v); }, \
        [](const ExperimentConfig& c) { return fmt_list(c.name); }                           \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"dataset", [](ExperimentConfig& c, const std::string& v) { c.dataset = parse_dataset_kind(v); },
            [](const ExperimentConfig& c) { return to_string(c.dataset); }},
      VCGAN_SIZE_FIELD(num_classes),
      VCGAN_DOUBLE_FIELD(mixture_radius),
      VCGAN_DOUBLE_FIELD(mixture_sigma),
      VCGAN_BOOL_FIELD(shapes_jitter),
      VCGAN_DOUBLE_FIELD(shapes_brightness_min),
      VCGAN_DOUBLE_FIELD(shapes_brightness_max),
      VCGAN_STRING_FIELD(idx_images),
      VCGAN_STRING_FIELD(idx_labels),
      Field{"variant",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.variant = parse_variant(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.variant); }},
      VCGAN_SIZE_FIELD(noise_dim),
      VCGAN_SIZE_FIELD(latent_dim),
      VCGAN_LIST_FIELD(encoder_hidden),
      VCGAN_LIST_FIELD(decoder_hidden),
      VCGAN_LIST_FIELD(disc_hidden),
      VCGAN_SIZE_FIELD(conv_channels),
      VCGAN_BOOL_FIELD(gen_batchnorm),
      VCGAN_BOOL_FIELD(disc_batchnorm),
      VCGAN_DOUBLE_FIELD(init_stddev),
      VCGAN_SIZE_FIELD(spectral_iterations),
      VCGAN_DOUBLE_FIELD(lr_g),
      VCGAN_DOUBLE_FIELD(lr_d),
      VCGAN_DOUBLE_FIELD(beta1),
      VCGAN_DOUBLE_FIELD(beta2),
      VCGAN_DOUBLE_FIELD(adam_epsilon),
      VCGAN_SIZE_FIELD(batch_size),
      VCGAN_U64_FIELD(steps),
      VCGAN_SIZE_FIELD(disc_steps),
      VCGAN_SIZE_FIELD(gen_steps),
      Field{"ac_loss",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.ac_loss = parse_ac_loss(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.ac_loss); }},
      VCGAN_DOUBLE_FIELD(kl_weight),
      VCGAN_U64_FIELD(seed),
      Field{"truncation",
            [](ExperimentConfig& c, const std::string& v) {
              try {
                c.truncation = TruncationRange::parse(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            },
            [](const ExperimentConfig& c) { return c.truncation.to_string(); }},
      VCGAN_STRING_FIELD(output_dir),
      VCGAN_U64_FIELD(log_interval),
      VCGAN_U64_FIELD(eval_interval),
      VCGAN_U64_FIELD(checkpoint_interval),
      VCGAN_SIZE_FIELD(eval_samples),
      VCGAN_SIZE_FIELD(is_groups),
      VCGAN_DOUBLE_FIELD(coverage_threshold),
      VCGAN_SIZE_FIELD(classifier_steps),
      VCGAN_BOOL_FIELD(record_elapsed),
      VCGAN_STRING_FIELD(resume_from),
  };
  return table;
}

#undef VCGAN_SIZE_FIELD
#undef VCGAN_U64_FIELD
#undef VCGAN_DOUBLE_FIELD
#undef VCGAN_BOOL_FIELD
#undef VCGAN_STRING_FIELD
#undef VCGAN_LIST_FIELD

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::fields()) keys.emplace_back(f.key);
  return keys;
}

/// Sets one key; unknown keys are rejected.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses flat `key = value` text. Blank lines and lines starting with '#'
/// are skipped.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' already set on line " +
                        std::to_string(it->second));
    }
    seen[key] = lineno;
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Resolved configuration, one `key = value` line per field in a fixed order.
inline std::string config_echo(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace vcgan::harness
