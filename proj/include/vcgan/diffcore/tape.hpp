#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcgan/diffcore/tensor.hpp"

namespace vcgan {

/// A named tensor owned by a model. Trainable parameters receive gradients
/// from the tape; non-trainable entries are buffers (running statistics,
/// power-iteration vectors) that ride along in checkpoints.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void zero_grad() {
    if (grad.shape() != value.shape()) {
      grad = Tensor<T>(value.shape());
    } else {
      grad.fill(T{0});
    }
  }
};

/// Append-only, index-addressed parameter table. Indices stay valid for the
/// life of the store, so layers hold indices rather than pointers and the
/// store (and anything owning it) stays copyable.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) {
      throw std::invalid_argument("ParameterStore: duplicate name '" + name + "'");
    }
    const std::size_t id = params_.size();
    index_.emplace(name, id);
    Parameter<T> p{std::move(name), std::move(value), {}, trainable};
    p.zero_grad();
    params_.push_back(std::move(p));
    return id;
  }

  Parameter<T>& operator[](std::size_t i) { return params_.at(i); }
  const Parameter<T>& operator[](std::size_t i) const { return params_.at(i); }

  Parameter<T>& get(const std::string& name) { return params_.at(lookup(name)); }
  const Parameter<T>& get(const std::string& name) const { return params_.at(lookup(name)); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("ParameterStore: no entry named '" + name + "'");
    }
    return it->second;
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Trainable entries whose name starts with `prefix`.
  std::vector<std::size_t> trainable_with_prefix(std::string_view prefix) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].trainable && std::string_view(params_[i].name).starts_with(prefix)) {
        out.push_back(i);
      }
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape<T>& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Every op evaluates eagerly and appends a
/// node, so node order is a topological order by construction.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}); }

  /// Leaf that collects a gradient on the tape (inputs under test, latent codes).
  Var<T> variable(Tensor<T> value) { return push("variable", std::move(value), true, {}); }

  /// Leaf bound to a model parameter; backward adds into Parameter::grad.
  Var<T> param(Parameter<T>& p) {
    Var<T> v = push("param", p.value, p.trainable, {});
    nodes_[v.id()].param = &p;
    return v;
  }

  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owned(in, op);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owned(in, op);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor<T>& value(const Var<T>& v) const {
    check_owned(v, "value");
    return nodes_[v.id()].value;
  }

  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient buffer of an input, allocated on first use; nullptr when the
  /// input does not require a gradient. Backward functions add into it.
  T* grad_ptr(const Var<T>& v) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
    return n.grad.data().data();
  }

  /// Gradient accumulated at a node by the last backward pass (zeros if none).
  Tensor<T> grad(const Var<T>& v) const {
    check_owned(v, "grad");
    const Node& n = nodes_[v.id()];
    if (n.grad.shape() != n.value.shape()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(const Var<T>& out) {
    check_owned(out, "backward");
    backward(out, Tensor<T>(out.shape(), T{1}));
  }

  void backward(const Var<T>& out, const Tensor<T>& seed) {
    check_owned(out, "backward");
    if (seed.shape() != out.shape()) {
      throw std::invalid_argument("Tape::backward: seed shape " + shape_string(seed.shape()) +
                                  " does not match output " + shape_string(out.shape()));
    }
    if (!nodes_[out.id()].requires_grad) return;
    for (auto& n : nodes_) n.grad = Tensor<T>();
    {
      T* g = grad_ptr(out);
      auto s = seed.data();
      for (std::size_t i = 0; i < s.size(); ++i) g[i] += s[i];
    }
    for (std::size_t i = out.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
      if (n.backward) {
        // Callbacks only touch input buffers; nodes_ never grows here.
        n.backward(*this, n.grad);
      }
    }
    for (auto& n : nodes_) {
      if (n.param && n.requires_grad && n.grad.shape() == n.value.shape()) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{op, std::move(value), Tensor<T>(), requires_grad, std::move(backward),
                          nullptr});
    return Var<T>(this, nodes_.size() - 1);
  }

  void check_owned(const Var<T>& v, std::string_view what) const {
    if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
      throw std::logic_error(std::string(what) +
                             ": variable does not belong to this tape (no forward record)");
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace vcgan
