#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "formtree/param_store.hpp"
#include "formtree/tensor.hpp"

namespace formtree::nn {

// Named-tensor archive: a UTF-8 JSON header, a single NUL byte, then the raw
// little-endian tensor payloads back to back. Header offsets are relative to
// the first byte after the NUL. Round trips are bitwise exact.
//
// header = {"version": 1,
//           "meta": {...},                      // free-form, e.g. model config
//           "entries": [{"name": ..., "dtype": "f32"|"f64",
//                        "shape": [...], "offset": ..., "nbytes": ...}, ...]}

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> entries;  // file order
  nlohmann::json meta;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const nlohmann::json& meta);
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an already-built store. Every store
// parameter must be present with a matching shape and dtype.
void load_into(ParamStore& params, const Checkpoint& ckpt);

}  // namespace formtree::nn
