#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vcgan/diffcore/tape.hpp"

namespace vcgan {

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;  ///< worst tensor-wise |a - n| / max(|a|, |n|, floor)
  double tolerance = 1e-4;
  std::string worst;  ///< input index or parameter name with the largest error
  bool passed() const { return max_relative_error <= tolerance; }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Norm floor for the relative error, scaled by max(1, |f|), so gradients
  /// that are exactly zero compare against finite-difference rounding.
  double norm_floor = 1e-6;
};

namespace detail {

inline double relative_error(std::span<const double> analytic, std::span<const double> numeric,
                             double floor) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

}  // namespace detail

/// Central-difference check of d(scalar)/d(inputs) for a function built on a
/// double-precision tape from leaf variables.
inline GradCheckResult check_input_gradients(
    std::string name,
    const std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>& fn,
    std::vector<Tensor<double>> inputs, GradCheckOptions opt = {}) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    Var<double> out = fn(tape, vars);
    if (out.value().size() != 1) throw std::invalid_argument("gradcheck: function must be scalar");
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&]() {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return fn(tape, vars).value()[0];
  };
  const double floor = opt.norm_floor * std::max(1.0, std::abs(eval()));
  GradCheckResult res{std::move(name), 0.0, opt.tolerance, {}};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> numeric(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + opt.step;
      const double fp = eval();
      inputs[k][i] = orig - opt.step;
      const double fm = eval();
      inputs[k][i] = orig;
      numeric[i] = (fp - fm) / (2.0 * opt.step);
    }
    const double err = detail::relative_error(analytic[k].data(), numeric, floor);
    if (err >= res.max_relative_error) {
      res.max_relative_error = err;
      res.worst = "input " + std::to_string(k);
    }
  }
  return res;
}

/// Central-difference check of a scalar loss with respect to store entries.
/// `loss(backprop)` must rebuild the computation from the store's current
/// values and, when `backprop` is true, call backward so grads land in the
/// store. It must be deterministic (fixed noise, frozen running state).
inline GradCheckResult check_parameter_gradients(std::string name, ParameterStore<double>& store,
                                                 const std::vector<std::size_t>& params,
                                                 const std::function<double(bool)>& loss,
                                                 GradCheckOptions opt = {}) {
  store.zero_grad();
  const double floor = opt.norm_floor * std::max(1.0, std::abs(loss(true)));
  std::vector<Tensor<double>> analytic;
  for (auto i : params) analytic.push_back(store[i].grad);
  GradCheckResult res{std::move(name), 0.0, opt.tolerance, {}};
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& value = store[params[k]].value;
    std::vector<double> numeric(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + opt.step;
      const double fp = loss(false);
      value[i] = orig - opt.step;
      const double fm = loss(false);
      value[i] = orig;
      numeric[i] = (fp - fm) / (2.0 * opt.step);
    }
    const double err = detail::relative_error(analytic[k].data(), numeric, floor);
    if (err >= res.max_relative_error) {
      res.max_relative_error = err;
      res.worst = store[params[k]].name;
    }
  }
  return res;
}

}  // namespace vcgan
