#pragma once

#include <map>
#include <string>

#include "formtree/param_store.hpp"
#include "formtree/tape.hpp"

namespace formtree::nn {

// Places each named parameter on a tape once and hands back the same handle
// on repeated lookups, so a parameter used by several blocks accumulates one
// gradient. grads() collects everything touched this pass for adam_step.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  Value operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Value v = tape_->leaf(store_->at(name), true);
    bound_.emplace(name, v);
    return v;
  }

  // Presets a name to an existing tape value; later lookups return it instead
  // of leafing the store's tensor. Lets a caller substitute or tie parameters.
  void bind(const std::string& name, Value v) { bound_[name] = v; }

  GradMap grads() const {
    GradMap g;
    for (const auto& [name, v] : bound_) g[name] = tape_->grad(v);
    return g;
  }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, Value> bound_;
};

}  // namespace formtree::nn
