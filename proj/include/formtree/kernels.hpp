#pragma once

// Dense arithmetic kernels behind the tensor core.
//
// Every kernel exists as a scalar reference implementation plus optional
// SIMD variants (AVX2+FMA on x86-64, NEON on aarch64). A table of function
// pointers is selected once at startup from CPU capabilities; the
// FORMTREE_KERNELS environment variable ("scalar", "avx2", "neon") overrides
// the choice. SIMD variants are equivalence-tested against the scalar
// reference in tests/test_kernels.cpp.

#include <cstddef>
#include <string_view>

namespace formtree::kernels {

struct Kernels {
  const char* name;

  // y += a * x
  void (*axpy_f32)(float a, const float* x, float* y, std::size_t n);
  void (*axpy_f64)(double a, const double* x, double* y, std::size_t n);

  float (*dot_f32)(const float* x, const float* y, std::size_t n);
  double (*dot_f64)(const double* x, const double* y, std::size_t n);

  void (*add_f32)(const float* a, const float* b, float* out, std::size_t n);
  void (*add_f64)(const double* a, const double* b, double* out, std::size_t n);

  void (*mul_f32)(const float* a, const float* b, float* out, std::size_t n);
  void (*mul_f64)(const double* a, const double* b, double* out, std::size_t n);

  void (*scale_f32)(float a, const float* x, float* out, std::size_t n);
  void (*scale_f64)(double a, const double* x, double* out, std::size_t n);

  void (*relu_f32)(const float* x, float* out, std::size_t n);
  void (*relu_f64)(const double* x, double* out, std::size_t n);

  // out = g where x > 0, else 0
  void (*relu_bwd_f32)(const float* g, const float* x, float* out, std::size_t n);
  void (*relu_bwd_f64)(const double* g, const double* x, double* out, std::size_t n);

  float (*sum_f32)(const float* x, std::size_t n);
  double (*sum_f64)(const double* x, std::size_t n);

  float (*max_f32)(const float* x, std::size_t n);
  double (*max_f64)(const double* x, std::size_t n);

  // C (n x m) = A (n x k) * B (k x m), row-major; accumulate adds into C
  void (*matmul_f32)(const float* a, const float* b, float* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate);
  void (*matmul_f64)(const double* a, const double* b, double* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate);

  // C (n x m) = A^T * B where A is (k x n), B is (k x m)
  void (*matmul_at_b_f32)(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate);
  void (*matmul_at_b_f64)(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate);

  // C (n x m) = A * B^T where A is (n x k), B is (m x k)
  void (*matmul_a_bt_f32)(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate);
  void (*matmul_a_bt_f64)(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate);
};

const Kernels& scalar_table();
const Kernels* avx2_table();  // nullptr when unsupported on this CPU/build
const Kernels* neon_table();

// Currently active table. Resolved on first use: FORMTREE_KERNELS env var if
// set, otherwise the best table the CPU supports.
const Kernels& active();

// Force a backend by name ("scalar", "avx2", "neon"). Throws std::runtime_error
// if that backend is unavailable.
void set_active(std::string_view name);

// Typed convenience wrappers over the active table.
template <class T> void axpy(T a, const T* x, T* y, std::size_t n);
template <class T> T dot(const T* x, const T* y, std::size_t n);
template <class T> void add(const T* a, const T* b, T* out, std::size_t n);
template <class T> void mul(const T* a, const T* b, T* out, std::size_t n);
template <class T> void scale(T a, const T* x, T* out, std::size_t n);
template <class T> void relu(const T* x, T* out, std::size_t n);
template <class T> void relu_bwd(const T* g, const T* x, T* out, std::size_t n);
template <class T> T sum(const T* x, std::size_t n);
template <class T> T max(const T* x, std::size_t n);
template <class T>
void matmul(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
            bool accumulate = false);
template <class T>
void matmul_at_b(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
                 bool accumulate = false);
template <class T>
void matmul_a_bt(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
                 bool accumulate = false);

template <> inline void axpy<float>(float a, const float* x, float* y, std::size_t n) { active().axpy_f32(a, x, y, n); }
template <> inline void axpy<double>(double a, const double* x, double* y, std::size_t n) { active().axpy_f64(a, x, y, n); }
template <> inline float dot<float>(const float* x, const float* y, std::size_t n) { return active().dot_f32(x, y, n); }
template <> inline double dot<double>(const double* x, const double* y, std::size_t n) { return active().dot_f64(x, y, n); }
template <> inline void add<float>(const float* a, const float* b, float* out, std::size_t n) { active().add_f32(a, b, out, n); }
template <> inline void add<double>(const double* a, const double* b, double* out, std::size_t n) { active().add_f64(a, b, out, n); }
template <> inline void mul<float>(const float* a, const float* b, float* out, std::size_t n) { active().mul_f32(a, b, out, n); }
template <> inline void mul<double>(const double* a, const double* b, double* out, std::size_t n) { active().mul_f64(a, b, out, n); }
template <> inline void scale<float>(float a, const float* x, float* out, std::size_t n) { active().scale_f32(a, x, out, n); }
template <> inline void scale<double>(double a, const double* x, double* out, std::size_t n) { active().scale_f64(a, x, out, n); }
template <> inline void relu<float>(const float* x, float* out, std::size_t n) { active().relu_f32(x, out, n); }
template <> inline void relu<double>(const double* x, double* out, std::size_t n) { active().relu_f64(x, out, n); }
template <> inline void relu_bwd<float>(const float* g, const float* x, float* out, std::size_t n) { active().relu_bwd_f32(g, x, out, n); }
template <> inline void relu_bwd<double>(const double* g, const double* x, double* out, std::size_t n) { active().relu_bwd_f64(g, x, out, n); }
template <> inline float sum<float>(const float* x, std::size_t n) { return active().sum_f32(x, n); }
template <> inline double sum<double>(const double* x, std::size_t n) { return active().sum_f64(x, n); }
template <> inline float max<float>(const float* x, std::size_t n) { return active().max_f32(x, n); }
template <> inline double max<double>(const double* x, std::size_t n) { return active().max_f64(x, n); }
template <> inline void matmul<float>(const float* a, const float* b, float* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_f32(a, b, c, n, k, m, acc); }
template <> inline void matmul<double>(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_f64(a, b, c, n, k, m, acc); }
template <> inline void matmul_at_b<float>(const float* a, const float* b, float* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_at_b_f32(a, b, c, n, k, m, acc); }
template <> inline void matmul_at_b<double>(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_at_b_f64(a, b, c, n, k, m, acc); }
template <> inline void matmul_a_bt<float>(const float* a, const float* b, float* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_a_bt_f32(a, b, c, n, k, m, acc); }
template <> inline void matmul_a_bt<double>(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m, bool acc) { active().matmul_a_bt_f64(a, b, c, n, k, m, acc); }

}  // namespace formtree::kernels
