#include "formtree/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "formtree/kernels.hpp"

namespace formtree::nn {

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require(bool cond, const std::string& op, const std::string& what) {
  if (!cond) fail(op, what);
}

template <class T>
void accumulate(Tensor& dst, const Tensor& src) {
  kernels::axpy<T>(T(1), src.data<T>(), dst.data<T>(), dst.numel());
}

}  // namespace

Value Tape::leaf(Tensor v, bool requires_grad) {
  const int idx = push("leaf", std::move(v), {});
  nodes_[idx].requires_grad = requires_grad;
  return {this, idx};
}

int Tape::push(std::string op, Tensor value, std::vector<int> inputs) {
  if (value.dtype() != dtype_) fail(op, "dtype mismatch with tape");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  for (int i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int idx) {
  Node& n = nodes_[idx];
  if (!n.grad.defined()) n.grad = Tensor(n.value.shape(), dtype_);
  return n.grad;
}

void Tape::check(Value v, const char* op) const {
  if (v.tape != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
    throw std::logic_error(std::string(op) + ": value does not belong to this tape");
}

const Tensor& Tape::value(Value v) const {
  check(v, "value");
  return nodes_[v.idx].value;
}

const Tensor& Tape::grad(Value v) {
  check(v, "grad");
  return grad_buf(v.idx);
}

bool Tape::requires_grad(Value v) const {
  check(v, "requires_grad");
  return nodes_[v.idx].requires_grad;
}

// ---------------------------------------------------------------- matmul

Value Tape::matmul(Value a, Value b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& A = nodes_[a.idx].value;
  const Tensor& B = nodes_[b.idx].value;
  require(A.rank() == 2 && B.rank() == 2, "matmul",
          "expects 2-D inputs, got " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  require(A.dim(1) == B.dim(0), "matmul",
          "inner dims disagree: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  const std::size_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
  Tensor out({n, m}, dtype_);
  if (dtype_ == DType::F32)
    kernels::matmul<float>(A.data<float>(), B.data<float>(), out.data<float>(), n, k, m);
  else
    kernels::matmul<double>(A.data<double>(), B.data<double>(), out.data<double>(), n, k, m);
  const int o = push("matmul", std::move(out), {a.idx, b.idx});
  nodes_[o].backward = [this, o, ia = a.idx, ib = b.idx, n, k, m] {
    const Tensor& g = grad_buf(o);
    const Tensor& A = nodes_[ia].value;
    const Tensor& B = nodes_[ib].value;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      if (nodes_[ia].requires_grad)
        kernels::matmul_a_bt<T>(g.data<T>(), B.data<T>(), grad_buf(ia).data<T>(), n, m, k, true);
      if (nodes_[ib].requires_grad)
        kernels::matmul_at_b<T>(A.data<T>(), g.data<T>(), grad_buf(ib).data<T>(), k, n, m, true);
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------------------- add

Value Tape::add(Value a, Value b) {
  check(a, "add");
  check(b, "add");
  const Tensor& A = nodes_[a.idx].value;
  const Tensor& B = nodes_[b.idx].value;
  const bool same = A.same_shape(B);
  bool row_bcast = false;
  if (!same) {
    row_bcast = A.rank() == 2 &&
                ((B.rank() == 1 && B.dim(0) == A.dim(1)) ||
                 (B.rank() == 2 && B.dim(0) == 1 && B.dim(1) == A.dim(1)));
    require(row_bcast, "add",
            "shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()) +
                " neither match nor row-broadcast");
  }
  Tensor out(A.shape(), dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    if (same) {
      kernels::add<T>(A.data<T>(), B.data<T>(), out.data<T>(), A.numel());
    } else {
      const std::size_t n = A.dim(0), m = A.dim(1);
      for (std::size_t i = 0; i < n; ++i)
        kernels::add<T>(A.data<T>() + i * m, B.data<T>(), out.data<T>() + i * m, m);
    }
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});
  const int o = push("add", std::move(out), {a.idx, b.idx});
  nodes_[o].backward = [this, o, ia = a.idx, ib = b.idx, same] {
    const Tensor& g = grad_buf(o);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      if (nodes_[ia].requires_grad) accumulate<T>(grad_buf(ia), g);
      if (nodes_[ib].requires_grad) {
        Tensor& db = grad_buf(ib);
        if (same) {
          accumulate<T>(db, g);
        } else {
          const std::size_t n = nodes_[ia].value.dim(0), m = nodes_[ia].value.dim(1);
          for (std::size_t i = 0; i < n; ++i)
            kernels::axpy<T>(T(1), g.data<T>() + i * m, db.data<T>(), m);
        }
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ---------------------------------------------------------------- concat

Value Tape::concat(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat", "no inputs");
  std::vector<int> idxs;
  std::size_t rows = 0, width = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    check(parts[p], "concat");
    const Tensor& t = nodes_[parts[p].idx].value;
    require(t.rank() == 2, "concat", "expects 2-D inputs, got " + shape_str(t.shape()));
    if (p == 0)
      rows = t.dim(0);
    else
      require(t.dim(0) == rows, "concat",
              "row counts disagree: " + std::to_string(rows) + " vs " + std::to_string(t.dim(0)));
    width += t.dim(1);
    idxs.push_back(parts[p].idx);
  }
  Tensor out({rows, width}, dtype_);
  const std::size_t esz = dtype_size(dtype_);
  std::size_t col = 0;
  for (int id : idxs) {
    const Tensor& t = nodes_[id].value;
    const std::size_t w = t.dim(1);
    for (std::size_t i = 0; i < rows; ++i)
      std::memcpy(static_cast<char*>(out.raw()) + (i * width + col) * esz,
                  static_cast<const char*>(t.raw()) + i * w * esz, w * esz);
    col += w;
  }
  const int o = push("concat", std::move(out), idxs);
  nodes_[o].backward = [this, o, idxs, rows, width] {
    const Tensor& g = grad_buf(o);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      std::size_t col = 0;
      for (int id : idxs) {
        const std::size_t w = nodes_[id].value.dim(1);
        if (nodes_[id].requires_grad) {
          Tensor& di = grad_buf(id);
          for (std::size_t i = 0; i < rows; ++i)
            kernels::axpy<T>(T(1), g.data<T>() + i * width + col, di.data<T>() + i * w, w);
        }
        col += w;
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------------------ relu

Value Tape::relu(Value x) {
  check(x, "relu");
  const Tensor& X = nodes_[x.idx].value;
  Tensor out(X.shape(), dtype_);
  if (dtype_ == DType::F32)
    kernels::relu<float>(X.data<float>(), out.data<float>(), X.numel());
  else
    kernels::relu<double>(X.data<double>(), out.data<double>(), X.numel());
  const int o = push("relu", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx] {
    if (!nodes_[ix].requires_grad) return;
    const Tensor& g = grad_buf(o);
    const Tensor& X = nodes_[ix].value;
    Tensor masked(X.shape(), dtype_);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      kernels::relu_bwd<T>(g.data<T>(), X.data<T>(), masked.data<T>(), X.numel());
      accumulate<T>(grad_buf(ix), masked);
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------------- layer_norm

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
  check(x, "layer_norm");
  check(gamma, "layer_norm");
  check(beta, "layer_norm");
  const Tensor& X = nodes_[x.idx].value;
  require(X.rank() == 2, "layer_norm", "expects 2-D input, got " + shape_str(X.shape()));
  const std::size_t n = X.dim(0), m = X.dim(1);
  const Tensor& G = nodes_[gamma.idx].value;
  const Tensor& Bt = nodes_[beta.idx].value;
  require(G.rank() == 1 && G.dim(0) == m, "layer_norm",
          "gamma shape " + shape_str(G.shape()) + " for input " + shape_str(X.shape()));
  require(Bt.rank() == 1 && Bt.dim(0) == m, "layer_norm",
          "beta shape " + shape_str(Bt.shape()) + " for input " + shape_str(X.shape()));

  Tensor out({n, m}, dtype_);
  Tensor xhat({n, m}, dtype_);
  Tensor inv_std({n}, dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T* xp = X.data<T>();
    const T* gp = G.data<T>();
    const T* bp = Bt.data<T>();
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = xp + i * m;
      T mu = kernels::sum<T>(row, m) / static_cast<T>(m);
      T var = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const T d = row[j] - mu;
        var += d * d;
      }
      var /= static_cast<T>(m);
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      inv_std.data<T>()[i] = is;
      T* xh = xhat.data<T>() + i * m;
      T* op = out.data<T>() + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        xh[j] = (row[j] - mu) * is;
        op[j] = gp[j] * xh[j] + bp[j];
      }
    }
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});

  const int o = push("layer_norm", std::move(out), {x.idx, gamma.idx, beta.idx});
  nodes_[o].backward = [this, o, ix = x.idx, ig = gamma.idx, ib = beta.idx,
                        xh = std::move(xhat), is = std::move(inv_std), n, m] {
    const Tensor& g = grad_buf(o);
    const Tensor& G = nodes_[ig].value;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T* gp = g.data<T>();
      const T* xhp = xh.data<T>();
      const T* isp = is.data<T>();
      const T* gam = G.data<T>();
      if (nodes_[ig].requires_grad || nodes_[ib].requires_grad) {
        T* dg = nodes_[ig].requires_grad ? grad_buf(ig).data<T>() : nullptr;
        T* db = nodes_[ib].requires_grad ? grad_buf(ib).data<T>() : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            if (dg) dg[j] += gp[i * m + j] * xhp[i * m + j];
            if (db) db[j] += gp[i * m + j];
          }
      }
      if (nodes_[ix].requires_grad) {
        T* dx = grad_buf(ix).data<T>();
        std::vector<T> dxh(m);
        for (std::size_t i = 0; i < n; ++i) {
          T s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < m; ++j) {
            dxh[j] = gp[i * m + j] * gam[j];
            s1 += dxh[j];
            s2 += dxh[j] * xhp[i * m + j];
          }
          s1 /= static_cast<T>(m);
          s2 /= static_cast<T>(m);
          for (std::size_t j = 0; j < m; ++j)
            dx[i * m + j] += isp[i] * (dxh[j] - s1 - xhp[i * m + j] * s2);
        }
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// --------------------------------------------------------------- softmax

Value Tape::softmax(Value x) {
  check(x, "softmax");
  const Tensor& X = nodes_[x.idx].value;
  require(X.rank() == 2, "softmax", "expects 2-D input, got " + shape_str(X.shape()));
  const std::size_t n = X.dim(0), m = X.dim(1);
  require(m > 0, "softmax", "empty rows");
  Tensor out({n, m}, dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = X.data<T>() + i * m;
      T* op = out.data<T>() + i * m;
      const T mx = kernels::max<T>(row, m);
      T s = 0;
      for (std::size_t j = 0; j < m; ++j) {
        op[j] = std::exp(row[j] - mx);
        s += op[j];
      }
      const T inv = T(1) / s;
      for (std::size_t j = 0; j < m; ++j) op[j] *= inv;
    }
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});
  const int o = push("softmax", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx, n, m] {
    if (!nodes_[ix].requires_grad) return;
    const Tensor& g = grad_buf(o);
    const Tensor& P = nodes_[o].value;
    auto run = [&](auto tag) {
      using T = decltype(tag);
      T* dx = grad_buf(ix).data<T>();
      for (std::size_t i = 0; i < n; ++i) {
        const T* prow = P.data<T>() + i * m;
        const T* grow = g.data<T>() + i * m;
        const T s = kernels::dot<T>(grow, prow, m);
        for (std::size_t j = 0; j < m; ++j) dx[i * m + j] += prow[j] * (grow[j] - s);
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------ embedding_lookup

Value Tape::embedding_lookup(Value table, const std::vector<int>& ids) {
  check(table, "embedding_lookup");
  const Tensor& Tb = nodes_[table.idx].value;
  require(Tb.rank() == 2, "embedding_lookup", "table must be 2-D, got " + shape_str(Tb.shape()));
  const std::size_t V = Tb.dim(0), d = Tb.dim(1);
  for (int id : ids)
    require(id >= 0 && static_cast<std::size_t>(id) < V, "embedding_lookup",
            "id " + std::to_string(id) + " out of range [0," + std::to_string(V) + ")");
  const std::size_t R = ids.size();
  Tensor out({R, d}, dtype_);
  const std::size_t esz = dtype_size(dtype_);
  for (std::size_t r = 0; r < R; ++r)
    std::memcpy(static_cast<char*>(out.raw()) + r * d * esz,
                static_cast<const char*>(Tb.raw()) + static_cast<std::size_t>(ids[r]) * d * esz,
                d * esz);
  const int o = push("embedding_lookup", std::move(out), {table.idx});
  nodes_[o].backward = [this, o, it = table.idx, ids, d] {
    if (!nodes_[it].requires_grad) return;
    const Tensor& g = grad_buf(o);
    Tensor& dt = grad_buf(it);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      for (std::size_t r = 0; r < ids.size(); ++r)
        kernels::axpy<T>(T(1), g.data<T>() + r * d,
                         dt.data<T>() + static_cast<std::size_t>(ids[r]) * d, d);
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------- masked_attention

Value Tape::masked_attention(Value q, Value k, Value v, const std::vector<std::uint8_t>& mask,
                             int n_heads) {
  check(q, "masked_attention");
  check(k, "masked_attention");
  check(v, "masked_attention");
  const Tensor& Q = nodes_[q.idx].value;
  const Tensor& K = nodes_[k.idx].value;
  const Tensor& Vv = nodes_[v.idx].value;
  require(Q.rank() == 2 && K.rank() == 2 && Vv.rank() == 2, "masked_attention",
          "expects 2-D q/k/v");
  const std::size_t n = Q.dim(0), d = Q.dim(1), m = K.dim(0);
  require(K.dim(1) == d && Vv.dim(0) == m && Vv.dim(1) == d, "masked_attention",
          "q " + shape_str(Q.shape()) + ", k " + shape_str(K.shape()) + ", v " +
              shape_str(Vv.shape()) + " disagree");
  require(n_heads > 0 && d % static_cast<std::size_t>(n_heads) == 0, "masked_attention",
          "width " + std::to_string(d) + " not divisible by " + std::to_string(n_heads) +
              " heads");
  require(mask.empty() || mask.size() == n * m, "masked_attention",
          "mask size " + std::to_string(mask.size()) + " for " + std::to_string(n) + "x" +
              std::to_string(m));
  const std::size_t H = static_cast<std::size_t>(n_heads);
  const std::size_t dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool dense = mask.empty();
  for (std::size_t i = 0; i < n && !dense; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m && !any; ++j) any = mask[i * m + j] != 0;
    require(any, "masked_attention", "query row " + std::to_string(i) + " masks every key");
  }

  Tensor out({n, d}, dtype_);
  Tensor probs({H, n, m}, dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    const T scl = static_cast<T>(inv_sqrt);
    std::vector<T> srow(m);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* qi = Q.data<T>() + i * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
          if (!dense && !mask[i * m + j]) continue;
          srow[j] = scl * kernels::dot<T>(qi, K.data<T>() + j * d + h * dh, dh);
          if (srow[j] > mx) mx = srow[j];
        }
        T ssum = 0;
        T* prow = probs.data<T>() + (h * n + i) * m;
        for (std::size_t j = 0; j < m; ++j) {
          if (!dense && !mask[i * m + j]) continue;
          prow[j] = std::exp(srow[j] - mx);
          ssum += prow[j];
        }
        const T inv = T(1) / ssum;
        T* oi = out.data<T>() + i * d + h * dh;
        for (std::size_t j = 0; j < m; ++j) {
          if (!dense && !mask[i * m + j]) continue;
          prow[j] *= inv;
          kernels::axpy<T>(prow[j], Vv.data<T>() + j * d + h * dh, oi, dh);
        }
      }
    }
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});

  const int o = push("masked_attention", std::move(out), {q.idx, k.idx, v.idx});
  nodes_[o].backward = [this, o, iq = q.idx, ik = k.idx, iv = v.idx, mask, P = std::move(probs),
                        n, m, d, H, dh, inv_sqrt] {
    const Tensor& g = grad_buf(o);
    const Tensor& Q = nodes_[iq].value;
    const Tensor& K = nodes_[ik].value;
    const Tensor& Vv = nodes_[iv].value;
    const bool dense = mask.empty();
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const T scl = static_cast<T>(inv_sqrt);
      T* dq = nodes_[iq].requires_grad ? grad_buf(iq).data<T>() : nullptr;
      T* dk = nodes_[ik].requires_grad ? grad_buf(ik).data<T>() : nullptr;
      T* dv = nodes_[iv].requires_grad ? grad_buf(iv).data<T>() : nullptr;
      std::vector<T> dp(m);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          const T* gi = g.data<T>() + i * d + h * dh;
          const T* prow = P.data<T>() + (h * n + i) * m;
          T sdot = 0;
          for (std::size_t j = 0; j < m; ++j) {
            if (!dense && !mask[i * m + j]) continue;
            dp[j] = kernels::dot<T>(gi, Vv.data<T>() + j * d + h * dh, dh);
            sdot += dp[j] * prow[j];
            if (dv) kernels::axpy<T>(prow[j], gi, dv + j * d + h * dh, dh);
          }
          if (!dq && !dk) continue;
          const T* qi = Q.data<T>() + i * d + h * dh;
          for (std::size_t j = 0; j < m; ++j) {
            if (!dense && !mask[i * m + j]) continue;
            const T ds = prow[j] * (dp[j] - sdot) * scl;
            if (dq) kernels::axpy<T>(ds, K.data<T>() + j * d + h * dh, dq + i * d + h * dh, dh);
            if (dk) kernels::axpy<T>(ds, qi, dk + j * d + h * dh, dh);
          }
        }
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ---------------------------------------------------------- cross_entropy

Value Tape::cross_entropy(Value logits, const std::vector<int>& targets) {
  check(logits, "cross_entropy");
  const Tensor& X = nodes_[logits.idx].value;
  require(X.rank() == 2, "cross_entropy", "expects 2-D logits, got " + shape_str(X.shape()));
  const std::size_t n = X.dim(0), c = X.dim(1);
  require(targets.size() == n, "cross_entropy",
          std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  for (int t : targets)
    require(t >= 0 && static_cast<std::size_t>(t) < c, "cross_entropy",
            "target " + std::to_string(t) + " out of range [0," + std::to_string(c) + ")");

  Tensor out({n}, dtype_);
  Tensor probs({n, c}, dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = X.data<T>() + i * c;
      T* prow = probs.data<T>() + i * c;
      const T mx = kernels::max<T>(row, c);
      T s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        prow[j] = std::exp(row[j] - mx);
        s += prow[j];
      }
      const T inv = T(1) / s;
      for (std::size_t j = 0; j < c; ++j) prow[j] *= inv;
      out.data<T>()[i] = std::log(s) + mx - row[targets[i]];
    }
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});

  const int o = push("cross_entropy", std::move(out), {logits.idx});
  nodes_[o].backward = [this, o, ix = logits.idx, targets, P = std::move(probs), n, c] {
    if (!nodes_[ix].requires_grad) return;
    const Tensor& g = grad_buf(o);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      T* dx = grad_buf(ix).data<T>();
      for (std::size_t i = 0; i < n; ++i) {
        const T gi = g.data<T>()[i];
        const T* prow = P.data<T>() + i * c;
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += gi * prow[j];
        dx[i * c + static_cast<std::size_t>(targets[i])] -= gi;
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ------------------------------------------------------------ reductions

Value Tape::sum(Value x) {
  check(x, "sum");
  const Tensor& X = nodes_[x.idx].value;
  Tensor out({1}, dtype_);
  if (dtype_ == DType::F32)
    out.data<float>()[0] = kernels::sum<float>(X.data<float>(), X.numel());
  else
    out.data<double>()[0] = kernels::sum<double>(X.data<double>(), X.numel());
  const int o = push("sum", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx] {
    if (!nodes_[ix].requires_grad) return;
    const double g = grad_buf(o).at(0);
    Tensor& dx = grad_buf(ix);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx.set(i, dx.at(i) + g);
  };
  return {this, o};
}

Value Tape::mean(Value x) {
  check(x, "mean");
  const Tensor& X = nodes_[x.idx].value;
  require(X.numel() > 0, "mean", "empty input");
  const double inv = 1.0 / static_cast<double>(X.numel());
  Tensor out({1}, dtype_);
  if (dtype_ == DType::F32)
    out.data<float>()[0] = static_cast<float>(kernels::sum<float>(X.data<float>(), X.numel()) * inv);
  else
    out.data<double>()[0] = kernels::sum<double>(X.data<double>(), X.numel()) * inv;
  const int o = push("mean", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx, inv] {
    if (!nodes_[ix].requires_grad) return;
    const double g = grad_buf(o).at(0) * inv;
    Tensor& dx = grad_buf(ix);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx.set(i, dx.at(i) + g);
  };
  return {this, o};
}

Value Tape::scale(Value x, double cst) {
  check(x, "scale");
  const Tensor& X = nodes_[x.idx].value;
  Tensor out(X.shape(), dtype_);
  if (dtype_ == DType::F32)
    kernels::scale<float>(static_cast<float>(cst), X.data<float>(), out.data<float>(), X.numel());
  else
    kernels::scale<double>(cst, X.data<double>(), out.data<double>(), X.numel());
  const int o = push("scale", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx, cst] {
    if (!nodes_[ix].requires_grad) return;
    const Tensor& g = grad_buf(o);
    if (dtype_ == DType::F32)
      kernels::axpy<float>(static_cast<float>(cst), g.data<float>(), grad_buf(ix).data<float>(),
                           g.numel());
    else
      kernels::axpy<double>(cst, g.data<double>(), grad_buf(ix).data<double>(), g.numel());
  };
  return {this, o};
}

// -------------------------------------------------------------- outer_add

Value Tape::outer_add(Value a, Value b) {
  check(a, "outer_add");
  check(b, "outer_add");
  const Tensor& A = nodes_[a.idx].value;
  const Tensor& B = nodes_[b.idx].value;
  require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1), "outer_add",
          "shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  const std::size_t n = A.dim(0), m = B.dim(0), h = A.dim(1);
  Tensor out({m * n, h}, dtype_);
  auto fwd = [&](auto tag) {
    using T = decltype(tag);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < n; ++i)
        kernels::add<T>(A.data<T>() + i * h, B.data<T>() + j * h,
                        out.data<T>() + (j * n + i) * h, h);
  };
  dtype_ == DType::F32 ? fwd(float{}) : fwd(double{});
  const int o = push("outer_add", std::move(out), {a.idx, b.idx});
  nodes_[o].backward = [this, o, ia = a.idx, ib = b.idx, n, m, h] {
    const Tensor& g = grad_buf(o);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      if (nodes_[ia].requires_grad) {
        T* da = grad_buf(ia).data<T>();
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t i = 0; i < n; ++i)
            kernels::axpy<T>(T(1), g.data<T>() + (j * n + i) * h, da + i * h, h);
      }
      if (nodes_[ib].requires_grad) {
        T* db = grad_buf(ib).data<T>();
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t i = 0; i < n; ++i)
            kernels::axpy<T>(T(1), g.data<T>() + (j * n + i) * h, db + j * h, h);
      }
    };
    dtype_ == DType::F32 ? run(float{}) : run(double{});
  };
  return {this, o};
}

// ---------------------------------------------------------------- reshape

Value Tape::reshape(Value x, std::vector<std::size_t> shape) {
  check(x, "reshape");
  const Tensor& X = nodes_[x.idx].value;
  std::size_t numel = 1;
  for (std::size_t d : shape) numel *= d;
  require(numel == X.numel(), "reshape",
          shape_str(X.shape()) + " to " + shape_str(shape) + " changes element count");
  Tensor out(shape, dtype_);
  std::memcpy(out.raw(), X.raw(), X.nbytes());
  const int o = push("reshape", std::move(out), {x.idx});
  nodes_[o].backward = [this, o, ix = x.idx] {
    if (!nodes_[ix].requires_grad) return;
    const Tensor& g = grad_buf(o);
    if (dtype_ == DType::F32)
      kernels::axpy<float>(1.f, g.data<float>(), grad_buf(ix).data<float>(), g.numel());
    else
      kernels::axpy<double>(1.0, g.data<double>(), grad_buf(ix).data<double>(), g.numel());
  };
  return {this, o};
}

// --------------------------------------------------------------- backward

void Tape::backward(Value loss) {
  check(loss, "backward");
  if (backward_done_)
    throw std::logic_error("backward: already ran on this tape; build a fresh tape per step");
  const Node& ln = nodes_[loss.idx];
  require(ln.value.numel() == 1, "backward",
          "loss must be scalar, got " + shape_str(ln.value.shape()));
  backward_done_ = true;
  std::vector<char> live(nodes_.size(), 0);
  std::vector<int> stack{loss.idx};
  live[loss.idx] = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (int in : nodes_[cur].inputs)
      if (!live[in] && nodes_[in].requires_grad) {
        live[in] = 1;
        stack.push_back(in);
      }
  }
  grad_buf(loss.idx).set(0, grad_buf(loss.idx).at(0) + 1.0);
  for (int i = loss.idx; i >= 0; --i)
    if (live[i] && nodes_[i].backward && nodes_[i].requires_grad) nodes_[i].backward();
}

}  // namespace formtree::nn
