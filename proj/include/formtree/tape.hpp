#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "formtree/tensor.hpp"

namespace formtree::nn {

class Tape;

// Handle into a tape. Cheap to copy; valid for the lifetime of its tape.
struct Value {
  Tape* tape = nullptr;
  int idx = -1;
  bool ok() const { return tape != nullptr && idx >= 0; }
};

// Reverse-mode autodiff over an append-only node list. One tape per forward
// pass; backward visits nodes in reverse creation order, which is a valid
// topological order because ops only consume already-created values.
class Tape {
 public:
  explicit Tape(DType dt) : dtype_(dt) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DType dtype() const { return dtype_; }
  std::size_t size() const { return nodes_.size(); }

  Value leaf(Tensor v, bool requires_grad = false);
  Value constant(Tensor v) { return leaf(std::move(v), false); }

  // a: n x k, b: k x m -> n x m
  Value matmul(Value a, Value b);
  // same shape, or b of shape [m] / [1,m] broadcast over the rows of a (n x m)
  Value add(Value a, Value b);
  // all 2-D with equal row count; concatenated along the last dim
  Value concat(const std::vector<Value>& parts);
  Value relu(Value x);
  // x: n x m, gamma/beta: [m]; normalizes each row (biased variance)
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
  // row-wise softmax over the last dim of a 2-D tensor
  Value softmax(Value x);
  // table: V x d, ids in [0, V) -> len(ids) x d; backward scatter-adds rows
  Value embedding_lookup(Value table, const std::vector<int>& ids);
  Value gather_rows(Value x, const std::vector<int>& rows) { return embedding_lookup(x, rows); }
  // q: n x d, k/v: m x d, mask: n*m row-major (1 = attend), empty = dense.
  // Masked entries are never read or written, so attention outputs depend
  // only on unmasked rows. Every query row must keep at least one key.
  Value masked_attention(Value q, Value k, Value v, const std::vector<std::uint8_t>& mask,
                         int n_heads);
  // logits: n x c -> per-row losses [n], logsumexp-stabilized
  Value cross_entropy(Value logits, const std::vector<int>& targets);
  Value mean(Value x);  // scalar
  Value sum(Value x);   // scalar
  Value scale(Value x, double c);
  // a: n x h, b: m x h -> (m*n) x h with row j*n+i = a_i + b_j
  Value outer_add(Value a, Value b);
  Value reshape(Value x, std::vector<std::size_t> shape);

  // References stay valid for the tape's lifetime (nodes live in a deque).
  const Tensor& value(Value v) const;
  const Tensor& grad(Value v);  // zeros if never touched by backward
  bool requires_grad(Value v) const;

  // loss must be scalar. Single-shot: one backward per tape; accumulation
  // across steps happens outside (fresh tape per step, grads summed there).
  void backward(Value loss);

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;  // allocated lazily
    std::vector<int> inputs;
    std::function<void()> backward;
    bool requires_grad = false;
  };

  int push(std::string op, Tensor value, std::vector<int> inputs);
  Tensor& grad_buf(int idx);
  void check(Value v, const char* op) const;

  DType dtype_;
  std::deque<Node> nodes_;  // deque: references survive push_back
  bool backward_done_ = false;
};

}  // namespace formtree::nn
