#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "formtree/rng.hpp"
#include "formtree/tensor.hpp"

namespace formtree::nn {

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;  // decoupled: applied to the parameter, not the moments
};

using GradMap = std::map<std::string, Tensor>;

// Named parameters plus Adam moment buffers. Registration order is preserved
// so checkpoints and iteration are deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back({name, std::move(init), Tensor(), Tensor()});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) { return entries_[find(name)].value; }
  const Tensor& at(const std::string& name) const { return entries_[find(name)].value; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  // One optimizer step over every parameter that has a gradient. `step` is
  // 1-based and drives bias correction. Non-finite gradients abort.
  void adam_step(const GradMap& grads, const AdamConfig& cfg, long step) {
    if (step < 1) throw std::invalid_argument("adam_step: step must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (auto& e : entries_) {
      auto it = grads.find(e.name);
      if (it == grads.end()) continue;
      const Tensor& g = it->second;
      if (!g.same_shape(e.value))
        throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape()) +
                                    " for parameter " + e.name + " " +
                                    shape_str(e.value.shape()));
      if (!g.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient for " + e.name + " at step " +
                                 std::to_string(step));
      if (!e.m.defined()) {
        e.m = Tensor(e.value.shape(), e.value.dtype());
        e.v = Tensor(e.value.shape(), e.value.dtype());
      }
      for (std::size_t i = 0; i < e.value.numel(); ++i) {
        const double gi = g.at(i);
        const double m = cfg.beta1 * e.m.at(i) + (1.0 - cfg.beta1) * gi;
        const double v = cfg.beta2 * e.v.at(i) + (1.0 - cfg.beta2) * gi * gi;
        e.m.set(i, m);
        e.v.set(i, v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        const double p = e.value.at(i);
        e.value.set(i, p - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p));
      }
    }
  }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m, v;  // Adam moments, allocated on first step
  };

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::vector<std::size_t> shape, DType dt, Rng& rng) {
  Tensor t(std::move(shape), dt);
  std::size_t fan_in = 1, fan_out = 1;
  if (t.rank() >= 2) {
    fan_in = t.dim(0);
    fan_out = t.dim(1);
    for (std::size_t i = 2; i < t.rank(); ++i) fan_out *= t.dim(i);
  } else if (t.rank() == 1) {
    fan_in = fan_out = t.dim(0);
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-limit, limit));
  return t;
}

}  // namespace formtree::nn
