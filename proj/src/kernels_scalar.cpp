#include "formtree/kernels.hpp"

#include <algorithm>
#include <limits>

// Scalar reference kernels. These define the semantics the SIMD variants are
// tested against.

namespace formtree::kernels {
namespace {

template <class T>
void axpy_ref(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void scale_ref(T a, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

template <class T>
void relu_ref(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd_ref(const T* g, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <class T>
T sum_ref(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
T max_ref(const T* x, std::size_t n) {
  T m = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

// C = A * B, saxpy form: walk rows of A, broadcast each element against the
// matching row of B. Keeps the inner loop contiguous in both B and C.
template <class T>
void matmul_ref(const T* a, const T* b, T* c, std::size_t n, std::size_t k,
                std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    T* crow = c + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = a[i * k + kk];
      const T* brow = b + kk * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void matmul_at_b_ref(const T* a, const T* b, T* c, std::size_t n, std::size_t k,
                     std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, T(0));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * n;
    const T* brow = b + kk * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T av = arow[i];
      T* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void matmul_a_bt_ref(const T* a, const T* b, T* c, std::size_t n, std::size_t k,
                     std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      T acc = 0;
      const T* brow = b + j * k;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

}  // namespace

const Kernels& scalar_table() {
  static const Kernels table = {
      "scalar",
      axpy_ref<float>, axpy_ref<double>,
      dot_ref<float>, dot_ref<double>,
      add_ref<float>, add_ref<double>,
      mul_ref<float>, mul_ref<double>,
      scale_ref<float>, scale_ref<double>,
      relu_ref<float>, relu_ref<double>,
      relu_bwd_ref<float>, relu_bwd_ref<double>,
      sum_ref<float>, sum_ref<double>,
      max_ref<float>, max_ref<double>,
      matmul_ref<float>, matmul_ref<double>,
      matmul_at_b_ref<float>, matmul_at_b_ref<double>,
      matmul_a_bt_ref<float>, matmul_a_bt_ref<double>,
  };
  return table;
}

}  // namespace formtree::kernels
