#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcgan/diffcore/tensor.hpp"
#include "vcgan/rng.hpp"
#include "vcgan/training.hpp"

namespace vcgan {

// On-disk layout (all integers 64-bit little-endian, floats IEEE-754 32-bit
// little-endian):
//
//   "VCGAN-CKPT 1\n"
//   config echo:  len, bytes
//   step
//   tensor table: count, then per entry name-len, name, rank, dims..., floats
//   optimizers:   count, then per entry name-len, name, step, m-table, v-table
//   rng states:   count, then per entry name-len, name, word-count, words...
//   FNV-1a 64 of every preceding byte

inline constexpr std::string_view kCheckpointMagic = "VCGAN-CKPT";
inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorCode { kIo, kFormat, kVersion, kTruncated, kChecksum };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& what)
      : std::runtime_error("checkpoint: " + what), code_(code) {}
  CheckpointErrorCode code() const noexcept { return code_; }

 private:
  CheckpointErrorCode code_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

struct OptimizerSnapshot {
  std::string name;
  std::uint64_t step = 0;
  NamedTensors m;
  NamedTensors v;

  bool operator==(const OptimizerSnapshot&) const = default;
};

struct Checkpoint {
  std::string config_echo;
  std::uint64_t step = 0;
  NamedTensors tensors;
  std::vector<OptimizerSnapshot> optimizers;
  std::vector<std::pair<std::string, Rng::State>> rngs;

  bool operator==(const Checkpoint&) const = default;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  void table(const NamedTensors& t) {
    u64(t.size());
    for (const auto& [name, tensor] : t) {
      str(name);
      u64(tensor.rank());
      for (auto d : tensor.shape()) u64(d);
      for (float f : tensor.data()) f32(f);
    }
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(v);
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  NamedTensors table() {
    NamedTensors t;
    const std::uint64_t count = u64();
    for (std::uint64_t k = 0; k < count; ++k) {
      std::string name = str();
      const std::uint64_t rank = u64();
      if (rank == 0 || rank > 16) throw CheckpointError(CheckpointErrorCode::kFormat, "bad rank for '" + name + "'");
      Shape shape(rank);
      std::uint64_t total = 1;
      for (auto& d : shape) {
        d = u64();
        if (d == 0) throw CheckpointError(CheckpointErrorCode::kFormat, "zero dimension in '" + name + "'");
        total *= d;
      }
      need(total * 4);
      std::vector<float> data(total);
      for (auto& f : data) f = f32();
      t.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return t;
  }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError(CheckpointErrorCode::kTruncated, "unexpected end of data");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.raw(" " + std::to_string(kCheckpointVersion) + "\n");
  w.str(ck.config_echo);
  w.u64(ck.step);
  w.table(ck.tensors);
  w.u64(ck.optimizers.size());
  for (const auto& o : ck.optimizers) {
    w.str(o.name);
    w.u64(o.step);
    w.table(o.m);
    w.table(o.v);
  }
  w.u64(ck.rngs.size());
  for (const auto& [name, state] : ck.rngs) {
    w.str(name);
    w.u64(state.size());
    for (auto word : state) w.u64(word);
  }
  const std::uint64_t sum = fnv1a64(w.bytes());
  w.u64(sum);
  return std::move(w.bytes());
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos || !bytes.starts_with(kCheckpointMagic) ||
      bytes.size() <= kCheckpointMagic.size() || bytes[kCheckpointMagic.size()] != ' ') {
    throw CheckpointError(CheckpointErrorCode::kFormat, "missing VCGAN-CKPT header");
  }
  const std::string_view version = bytes.substr(kCheckpointMagic.size() + 1, newline - kCheckpointMagic.size() - 1);
  if (version != std::to_string(kCheckpointVersion)) {
    throw CheckpointError(CheckpointErrorCode::kVersion,
                          "unsupported version '" + std::string(version) + "'");
  }
  if (bytes.size() < newline + 1 + 8) throw CheckpointError(CheckpointErrorCode::kTruncated, "file too short");
  detail::ByteReader r(bytes.substr(newline + 1));
  Checkpoint ck;
  ck.config_echo = r.str();
  ck.step = r.u64();
  ck.tensors = r.table();
  const std::uint64_t n_opt = r.u64();
  for (std::uint64_t i = 0; i < n_opt; ++i) {
    OptimizerSnapshot o;
    o.name = r.str();
    o.step = r.u64();
    o.m = r.table();
    o.v = r.table();
    ck.optimizers.push_back(std::move(o));
  }
  const std::uint64_t n_rng = r.u64();
  for (std::uint64_t i = 0; i < n_rng; ++i) {
    std::string name = r.str();
    const std::uint64_t words = r.u64();
    if (words != Rng::kStateWords) throw CheckpointError(CheckpointErrorCode::kFormat, "bad rng state size");
    Rng::State st{};
    for (auto& w : st) w = r.u64();
    ck.rngs.emplace_back(std::move(name), st);
  }
  const std::size_t body_end = newline + 1 + r.position();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorCode::kFormat, "trailing bytes after checksum");
  if (stored != fnv1a64(bytes.substr(0, body_end))) {
    throw CheckpointError(CheckpointErrorCode::kChecksum, "checksum mismatch");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointErrorCode::kIo, "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointErrorCode::kIo, "write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointErrorCode::kIo, "cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

// ------------------------------------------------------- trainer bindings

template <typename T>
NamedTensors export_store(const ParameterStore<T>& store) {
  NamedTensors out;
  for (const auto& p : store) out.emplace_back(p.name, p.value.template cast<float>());
  return out;
}

template <typename T>
void import_store(ParameterStore<T>& store, const NamedTensors& tensors) {
  if (tensors.size() != store.size()) {
    throw CheckpointError(CheckpointErrorCode::kFormat,
                          "tensor table has " + std::to_string(tensors.size()) + " entries, model has " +
                              std::to_string(store.size()));
  }
  for (const auto& [name, t] : tensors) {
    if (!store.contains(name)) throw CheckpointError(CheckpointErrorCode::kFormat, "unknown tensor '" + name + "'");
    auto& p = store.get(name);
    if (p.value.shape() != t.shape()) {
      throw CheckpointError(CheckpointErrorCode::kFormat, "shape mismatch for '" + name + "'");
    }
    p.value = t.template cast<T>();
  }
}

template <typename T>
OptimizerSnapshot export_optimizer(const std::string& name, const Adam<T>& opt, const ParameterStore<T>& store) {
  OptimizerSnapshot s{name, opt.step_count(), {}, {}};
  for (std::size_t k = 0; k < opt.params().size(); ++k) {
    const std::string& pname = store[opt.params()[k]].name;
    s.m.emplace_back(pname, opt.moments()[k].m.template cast<float>());
    s.v.emplace_back(pname, opt.moments()[k].v.template cast<float>());
  }
  return s;
}

template <typename T>
void import_optimizer(const OptimizerSnapshot& s, Adam<T>& opt, const ParameterStore<T>& store) {
  if (s.m.size() != opt.params().size() || s.v.size() != opt.params().size()) {
    throw CheckpointError(CheckpointErrorCode::kFormat, "optimizer '" + s.name + "' size mismatch");
  }
  for (std::size_t k = 0; k < opt.params().size(); ++k) {
    const auto& p = store[opt.params()[k]];
    if (s.m[k].first != p.name || s.m[k].second.shape() != p.value.shape() ||
        s.v[k].second.shape() != p.value.shape()) {
      throw CheckpointError(CheckpointErrorCode::kFormat, "optimizer '" + s.name + "' entry mismatch at " + p.name);
    }
    opt.moments()[k].m = s.m[k].second.template cast<T>();
    opt.moments()[k].v = s.v[k].second.template cast<T>();
  }
  opt.set_step_count(s.step);
}

/// Captures parameters, buffers, optimizer moments and the trainer RNG.
template <typename T>
Checkpoint snapshot(const Trainer<T>& trainer, std::string config_echo) {
  Checkpoint ck;
  ck.config_echo = std::move(config_echo);
  ck.step = trainer.step();
  ck.tensors = export_store(trainer.bundle().params());
  ck.optimizers.push_back(export_optimizer("generator", trainer.generator_optimizer(), trainer.bundle().params()));
  if (trainer.bundle().has_discriminator()) {
    ck.optimizers.push_back(
        export_optimizer("discriminator", trainer.discriminator_optimizer(), trainer.bundle().params()));
  }
  ck.rngs.emplace_back("trainer", trainer.rng().state());
  return ck;
}

template <typename T>
void restore(Trainer<T>& trainer, const Checkpoint& ck) {
  import_store(trainer.bundle().params(), ck.tensors);
  for (const auto& o : ck.optimizers) {
    if (o.name == "generator") {
      import_optimizer(o, trainer.generator_optimizer(), trainer.bundle().params());
    } else if (o.name == "discriminator") {
      import_optimizer(o, trainer.discriminator_optimizer(), trainer.bundle().params());
    } else {
      throw CheckpointError(CheckpointErrorCode::kFormat, "unknown optimizer block '" + o.name + "'");
    }
  }
  for (const auto& [name, st] : ck.rngs) {
    if (name == "trainer") trainer.rng().set_state(st);
  }
  trainer.set_step(ck.step);
}

}  // namespace vcgan
