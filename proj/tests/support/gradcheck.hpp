#pragma once

// Finite-difference gradient oracle. Compares reverse-mode gradients against
// central differences on an f64 tape. Frozen reference: tests depend on this
// harness, the harness depends only on the public tape API.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "formtree/rng.hpp"
#include "formtree/tape.hpp"
#include "formtree/tensor.hpp"

namespace ftcheck {

using formtree::DType;
using formtree::Rng;
using formtree::Tensor;

// Builds a scalar loss from differentiable leaves. Must be deterministic and
// must not depend on anything but the tape and the given leaves.
using LossBuilder =
    std::function<formtree::nn::Value(formtree::nn::Tape&, const std::vector<formtree::nn::Value>&)>;

struct GradCheckResult {
  bool ok = true;
  std::string detail;
};

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  formtree::nn::Tape tape(DType::F64);
  std::vector<formtree::nn::Value> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
  return tape.value(build(tape, leaves)).at(0);
}

// inputs must be f64. Checks up to coords_per_input randomly sampled
// coordinates of every input; passes when
// |analytic - numeric| <= tol * max(1, |analytic|, |numeric|).
inline GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                  Rng& rng, int coords_per_input = 25, double h = 1e-5,
                                  double tol = 1e-4) {
  formtree::nn::Tape tape(DType::F64);
  std::vector<formtree::nn::Value> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
  formtree::nn::Value loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (auto v : leaves) analytic.push_back(tape.grad(v));

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t numel = inputs[k].numel();
    std::vector<std::size_t> coords;
    if (numel <= static_cast<std::size_t>(coords_per_input)) {
      for (std::size_t i = 0; i < numel; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < coords_per_input; ++i)
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(numel) - 1)));
    }
    for (std::size_t c : coords) {
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[k].set(c, inputs[k].at(c) + h);
      minus[k].set(c, inputs[k].at(c) - h);
      const double numeric = (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
      const double a = analytic[k].at(c);
      const double scale = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (std::fabs(a - numeric) > tol * scale) {
        std::ostringstream os;
        os << "input " << k << " coord " << c << ": analytic " << a << " vs numeric " << numeric
           << " (|diff| " << std::fabs(a - numeric) << " > " << tol * scale << ")";
        return {false, os.str()};
      }
    }
  }
  return {true, ""};
}

// Uniform values bounded away from zero, so kinks (relu) sit far from the
// finite-difference step.
inline Tensor random_signed(std::vector<std::size_t> shape, Rng& rng, double lo = 0.1,
                            double hi = 1.0) {
  Tensor t(std::move(shape), DType::F64);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(lo, hi);
    t.set(i, rng.bernoulli(0.5) ? mag : -mag);
  }
  return t;
}

inline Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape), DType::F64);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

}  // namespace ftcheck
