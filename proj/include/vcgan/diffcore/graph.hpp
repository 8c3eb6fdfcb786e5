#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore/ops.hpp"

namespace vcgan {

/// A named, replayable computation: input placeholders plus nodes that may
/// only reference names declared before them (so the declaration order is a
/// topological order and the graph is acyclic). evaluate() replays the nodes
/// on a fresh tape; backprop() pushes output gradients back through it.
template <typename T>
class ComputationGraph {
 public:
  using NodeFn = std::function<Var<T>(std::span<const Var<T>>)>;

  void add_input(const std::string& name, bool requires_grad = true) {
    declare(name);
    nodes_.push_back({name, {}, {}, true, requires_grad});
  }

  void add_node(const std::string& name, std::vector<std::string> inputs, NodeFn fn) {
    for (const auto& in : inputs) {
      if (!order_.count(in)) {
        throw std::invalid_argument("graph node '" + name + "' references undeclared input '" + in +
                                    "'");
      }
    }
    declare(name);
    nodes_.push_back({name, std::move(inputs), std::move(fn), false, false});
  }

  /// Position of a node in the evaluation order.
  std::size_t topological_index(const std::string& name) const { return order_.at(name); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Tape-level access for node functions that need parameters or constants.
  Tape<T>& tape() {
    if (!tape_) throw std::logic_error("graph: no evaluation in progress");
    return *tape_;
  }

  std::map<std::string, Tensor<T>> evaluate(const std::map<std::string, Tensor<T>>& inputs) {
    tape_ = std::make_unique<Tape<T>>();
    values_.assign(nodes_.size(), Var<T>());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.is_input) {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) {
          tape_.reset();
          throw std::invalid_argument("graph input '" + n.name + "' is not bound");
        }
        values_[i] = n.requires_grad ? tape_->variable(it->second) : tape_->constant(it->second);
        continue;
      }
      std::vector<Var<T>> args;
      args.reserve(n.inputs.size());
      for (const auto& in : n.inputs) args.push_back(values_[order_.at(in)]);
      try {
        values_[i] = n.fn(args);
      } catch (const std::invalid_argument& e) {
        tape_.reset();
        throw std::invalid_argument("graph node '" + n.name + "': " + e.what());
      }
    }
    std::map<std::string, Tensor<T>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) out.emplace(nodes_[i].name, values_[i].value());
    return out;
  }

  /// Seeds each named output with its upstream gradient and backpropagates.
  void backprop(const std::map<std::string, Tensor<T>>& output_grads) {
    if (!tape_) throw std::logic_error("graph: backprop called before evaluate");
    Var<T> total;
    for (const auto& [name, g] : output_grads) {
      Var<T> v = values_.at(order_.at(name));
      if (g.shape() != v.shape()) {
        throw std::invalid_argument("graph output '" + name + "': gradient shape " +
                                    shape_string(g.shape()) + " vs value " + shape_string(v.shape()));
      }
      Var<T> term = sum(mul(v, tape_->constant(g)));
      total = total.valid() ? add(total, term) : term;
    }
    if (total.valid()) tape_->backward(total);
  }

  /// Gradient at a named node after backprop (zeros if it received none).
  Tensor<T> grad(const std::string& name) const {
    if (!tape_) throw std::logic_error("graph: no evaluation to read gradients from");
    return tape_->grad(values_.at(order_.at(name)));
  }

 private:
  struct Node {
    std::string name;
    std::vector<std::string> inputs;
    NodeFn fn;
    bool is_input;
    bool requires_grad;
  };

  void declare(const std::string& name) {
    if (!order_.emplace(name, nodes_.size()).second) {
      throw std::invalid_argument("graph: duplicate node name '" + name + "'");
    }
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> order_;
  std::unique_ptr<Tape<T>> tape_;
  std::vector<Var<T>> values_;
};

}  // namespace vcgan
