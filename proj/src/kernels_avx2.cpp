#include "formtree/kernels.hpp"

// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma on
// x86-64 only; callers must check avx2_table() != nullptr (runtime cpuid
// check) before use.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <limits>

namespace formtree::kernels {
namespace {

// ---- f32, 8 lanes ----

void axpy_f32_avx2(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float dot_f32_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add_f32_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f32_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32_avx2(float a, const float* x, float* out, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void relu_f32_avx2(const float* x, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : 0.f;
}

void relu_bwd_f32_avx2(const float* g, const float* x, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(mask, _mm256_loadu_ps(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.f ? g[i] : 0.f;
}

float sum_f32_avx2(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float max_f32_avx2(const float* x, std::size_t n) {
  float m = -std::numeric_limits<float>::infinity();
  __m256 vm = _mm256_set1_ps(m);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
  alignas(32) float tmp[8];
  _mm256_store_ps(tmp, vm);
  for (float t : tmp) m = std::max(m, t);
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void matmul_f32_avx2(const float* a, const float* b, float* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.f);
  for (std::size_t i = 0; i < n; ++i) {
    float* crow = c + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      axpy_f32_avx2(a[i * k + kk], b + kk * m, crow, m);
    }
  }
}

void matmul_at_b_f32_avx2(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.f);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* arow = a + kk * n;
    const float* brow = b + kk * m;
    for (std::size_t i = 0; i < n; ++i) axpy_f32_avx2(arow[i], brow, c + i * m, m);
  }
}

void matmul_a_bt_f32_avx2(const float* a, const float* b, float* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const float acc = dot_f32_avx2(arow, b + j * k, k);
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

// ---- f64, 4 lanes ----

void axpy_f64_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_f64_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add_f64_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_f64_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f64_avx2(double a, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void relu_f64_avx2(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f64_avx2(const double* g, const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double sum_f64_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double max_f64_avx2(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  __m256d vm = _mm256_set1_pd(m);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
  alignas(32) double tmp[4];
  _mm256_store_pd(tmp, vm);
  for (double t : tmp) m = std::max(m, t);
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void matmul_f64_avx2(const double* a, const double* b, double* c, std::size_t n,
                     std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) axpy_f64_avx2(a[i * k + kk], b + kk * m, crow, m);
  }
}

void matmul_at_b_f64_avx2(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * n;
    const double* brow = b + kk * m;
    for (std::size_t i = 0; i < n; ++i) axpy_f64_avx2(arow[i], brow, c + i * m, m);
  }
}

void matmul_a_bt_f64_avx2(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double acc = dot_f64_avx2(arow, b + j * k, k);
      if (accumulate)
        c[i * m + j] += acc;
      else
        c[i * m + j] = acc;
    }
  }
}

}  // namespace

const Kernels* avx2_table_impl() {
  static const Kernels table = {
      "avx2",
      axpy_f32_avx2, axpy_f64_avx2,
      dot_f32_avx2, dot_f64_avx2,
      add_f32_avx2, add_f64_avx2,
      mul_f32_avx2, mul_f64_avx2,
      scale_f32_avx2, scale_f64_avx2,
      relu_f32_avx2, relu_f64_avx2,
      relu_bwd_f32_avx2, relu_bwd_f64_avx2,
      sum_f32_avx2, sum_f64_avx2,
      max_f32_avx2, max_f64_avx2,
      matmul_f32_avx2, matmul_f64_avx2,
      matmul_at_b_f32_avx2, matmul_at_b_f64_avx2,
      matmul_a_bt_f32_avx2, matmul_a_bt_f64_avx2,
  };
  return &table;
}

}  // namespace formtree::kernels

#else

namespace formtree::kernels {
const Kernels* avx2_table_impl() { return nullptr; }
}  // namespace formtree::kernels

#endif
