#include "formtree/kernels.hpp"

// NEON kernels for aarch64. NEON is baseline on aarch64, so availability is a
// compile-time question only.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <algorithm>
#include <limits>

namespace formtree::kernels {
namespace {

void axpy_f32_neon(float a, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f32_neon(const float* x, const float* y, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = vfmaq_f32(acc, vld1q_f32(x + i), vld1q_f32(y + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add_f32_neon(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f32_neon(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32_neon(float a, const float* x, float* out, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void relu_f32_neon(const float* x, float* out, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmaxq_f32(zero, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : 0.f;
}

void relu_bwd_f32_neon(const float* g, const float* x, float* out, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), zero);
    vst1q_f32(out + i, vreinterpretq_f32_u32(vandq_u32(
                           mask, vreinterpretq_u32_f32(vld1q_f32(g + i)))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.f ? g[i] : 0.f;
}

float sum_f32_neon(const float* x, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float max_f32_neon(const float* x, std::size_t n) {
  float m = -std::numeric_limits<float>::infinity();
  float32x4_t vm = vdupq_n_f32(m);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vm = vmaxq_f32(vm, vld1q_f32(x + i));
  m = std::max(m, vmaxvq_f32(vm));
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void matmul_f32_neon(const float* a, const float* b, float* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t kk = 0; kk < k; ++kk)
      axpy_f32_neon(a[i * k + kk], b + kk * m, c + i * m, m);
}

void matmul_at_b_f32_neon(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.f);
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t i = 0; i < n; ++i)
      axpy_f32_neon(a[kk * n + i], b + kk * m, c + i * m, m);
}

void matmul_a_bt_f32_neon(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const float acc = dot_f32_neon(a + i * k, b + j * k, k);
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
}

// f64 on NEON: 2 lanes wins little over scalar here; reuse the f32 patterns.

void axpy_f64_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_f64_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add_f64_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f64_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f64_neon(double a, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void relu_f64_neon(const double* x, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmaxq_f64(zero, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64_neon(const double* g, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double sum_f64_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double max_f64_neon(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void matmul_f64_neon(const double* a, const double* b, double* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t kk = 0; kk < k; ++kk)
      axpy_f64_neon(a[i * k + kk], b + kk * m, c + i * m, m);
}

void matmul_at_b_f64_neon(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t i = 0; i < n; ++i)
      axpy_f64_neon(a[kk * n + i], b + kk * m, c + i * m, m);
}

void matmul_a_bt_f64_neon(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double acc = dot_f64_neon(a + i * k, b + j * k, k);
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
}

}  // namespace

const Kernels* neon_table_impl() {
  static const Kernels table = {
      "neon",
      axpy_f32_neon, axpy_f64_neon,
      dot_f32_neon, dot_f64_neon,
      add_f32_neon, add_f64_neon,
      mul_f32_neon, mul_f64_neon,
      scale_f32_neon, scale_f64_neon,
      relu_f32_neon, relu_f64_neon,
      relu_bwd_f32_neon, relu_bwd_f64_neon,
      sum_f32_neon, sum_f64_neon,
      max_f32_neon, max_f64_neon,
      matmul_f32_neon, matmul_f64_neon,
      matmul_at_b_f32_neon, matmul_at_b_f64_neon,
      matmul_a_bt_f32_neon, matmul_a_bt_f64_neon,
  };
  return &table;
}

}  // namespace formtree::kernels

#else

namespace formtree::kernels {
const Kernels* neon_table_impl() { return nullptr; }
}  // namespace formtree::kernels

#endif
