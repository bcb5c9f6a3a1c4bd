#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "formtree/kernels.hpp"
#include "formtree/rng.hpp"

using formtree::Rng;
namespace kn = formtree::kernels;

namespace {

// sizes straddle SIMD widths: below one vector, exact multiples, remainders
const std::vector<std::size_t> kSizes = {1, 3, 7, 8, 9, 15, 16, 31, 33, 100, 255};

template <class T>
std::vector<T> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

template <class T>
bool close(T a, T b, double tol) {
  const double d = std::fabs(static_cast<double>(a) - static_cast<double>(b));
  return d <= tol * std::max({1.0, std::fabs(static_cast<double>(a)),
                              std::fabs(static_cast<double>(b))});
}

constexpr double kTolF32 = 1e-4;
constexpr double kTolF64 = 1e-12;

std::vector<const kn::Kernels*> simd_tables() {
  std::vector<const kn::Kernels*> out;
  if (kn::avx2_table()) out.push_back(kn::avx2_table());
  if (kn::neon_table()) out.push_back(kn::neon_table());
  return out;
}

}  // namespace

TEST_CASE("at least one table is always available") {
  CHECK(std::string(kn::scalar_table().name) == "scalar");
  CHECK(kn::active().name != nullptr);
}

TEST_CASE("elementwise ops match scalar bitwise") {
  // add/mul/scale/relu/relu_bwd round once per element, so SIMD and scalar
  // agree exactly; only fused/reordered ops get tolerances.
  Rng rng(7);
  const auto& ref = kn::scalar_table();
  for (const auto* tbl : simd_tables()) {
    CAPTURE(tbl->name);
    for (std::size_t n : kSizes) {
      const auto a32 = random_vec<float>(n, rng);
      const auto b32 = random_vec<float>(n, rng);
      const auto a64 = random_vec<double>(n, rng);
      const auto b64 = random_vec<double>(n, rng);
      std::vector<float> r32(n), s32(n);
      std::vector<double> r64(n), s64(n);

      ref.add_f32(a32.data(), b32.data(), r32.data(), n);
      tbl->add_f32(a32.data(), b32.data(), s32.data(), n);
      CHECK(r32 == s32);
      ref.add_f64(a64.data(), b64.data(), r64.data(), n);
      tbl->add_f64(a64.data(), b64.data(), s64.data(), n);
      CHECK(r64 == s64);

      ref.mul_f32(a32.data(), b32.data(), r32.data(), n);
      tbl->mul_f32(a32.data(), b32.data(), s32.data(), n);
      CHECK(r32 == s32);
      ref.mul_f64(a64.data(), b64.data(), r64.data(), n);
      tbl->mul_f64(a64.data(), b64.data(), s64.data(), n);
      CHECK(r64 == s64);

      ref.scale_f32(1.7f, a32.data(), r32.data(), n);
      tbl->scale_f32(1.7f, a32.data(), s32.data(), n);
      CHECK(r32 == s32);
      ref.scale_f64(1.7, a64.data(), r64.data(), n);
      tbl->scale_f64(1.7, a64.data(), s64.data(), n);
      CHECK(r64 == s64);

      ref.relu_f32(a32.data(), r32.data(), n);
      tbl->relu_f32(a32.data(), s32.data(), n);
      CHECK(r32 == s32);
      ref.relu_f64(a64.data(), r64.data(), n);
      tbl->relu_f64(a64.data(), s64.data(), n);
      CHECK(r64 == s64);

      ref.relu_bwd_f32(b32.data(), a32.data(), r32.data(), n);
      tbl->relu_bwd_f32(b32.data(), a32.data(), s32.data(), n);
      CHECK(r32 == s32);
      ref.relu_bwd_f64(b64.data(), a64.data(), r64.data(), n);
      tbl->relu_bwd_f64(b64.data(), a64.data(), s64.data(), n);
      CHECK(r64 == s64);
    }
  }
}

TEST_CASE("reductions and axpy match scalar within tolerance") {
  Rng rng(11);
  const auto& ref = kn::scalar_table();
  for (const auto* tbl : simd_tables()) {
    CAPTURE(tbl->name);
    for (std::size_t n : kSizes) {
      const auto a32 = random_vec<float>(n, rng);
      const auto b32 = random_vec<float>(n, rng);
      const auto a64 = random_vec<double>(n, rng);
      const auto b64 = random_vec<double>(n, rng);

      CHECK(close(ref.dot_f32(a32.data(), b32.data(), n), tbl->dot_f32(a32.data(), b32.data(), n),
                  kTolF32));
      CHECK(close(ref.dot_f64(a64.data(), b64.data(), n), tbl->dot_f64(a64.data(), b64.data(), n),
                  kTolF64));
      CHECK(close(ref.sum_f32(a32.data(), n), tbl->sum_f32(a32.data(), n), kTolF32));
      CHECK(close(ref.sum_f64(a64.data(), n), tbl->sum_f64(a64.data(), n), kTolF64));
      // max picks one element, no arithmetic: exact
      CHECK(ref.max_f32(a32.data(), n) == tbl->max_f32(a32.data(), n));
      CHECK(ref.max_f64(a64.data(), n) == tbl->max_f64(a64.data(), n));

      auto y32r = b32, y32t = b32;
      ref.axpy_f32(0.37f, a32.data(), y32r.data(), n);
      tbl->axpy_f32(0.37f, a32.data(), y32t.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(y32r[i], y32t[i], kTolF32));
      auto y64r = b64, y64t = b64;
      ref.axpy_f64(0.37, a64.data(), y64r.data(), n);
      tbl->axpy_f64(0.37, a64.data(), y64t.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(y64r[i], y64t[i], kTolF64));
    }
  }
}

TEST_CASE("matmul variants match scalar within tolerance") {
  Rng rng(13);
  const auto& ref = kn::scalar_table();
  struct Dims {
    std::size_t n, k, m;
  };
  const std::vector<Dims> dims = {{1, 1, 1}, {2, 3, 4}, {5, 7, 3}, {8, 8, 8},
                                  {9, 1, 9}, {17, 33, 9}, {4, 64, 12}};
  for (const auto* tbl : simd_tables()) {
    CAPTURE(tbl->name);
    for (const auto [n, k, m] : dims) {
      for (bool acc : {false, true}) {
        const auto a32 = random_vec<float>(n * k, rng);
        const auto b32 = random_vec<float>(k * m, rng);
        const auto c0f = random_vec<float>(n * m, rng);
        auto cr = c0f, ct = c0f;
        if (!acc) {
          std::fill(cr.begin(), cr.end(), 0.f);
          std::fill(ct.begin(), ct.end(), 0.f);
        }
        ref.matmul_f32(a32.data(), b32.data(), cr.data(), n, k, m, acc);
        tbl->matmul_f32(a32.data(), b32.data(), ct.data(), n, k, m, acc);
        for (std::size_t i = 0; i < n * m; ++i) CHECK(close(cr[i], ct[i], kTolF32));

        const auto a64 = random_vec<double>(n * k, rng);
        const auto b64 = random_vec<double>(k * m, rng);
        const auto c0d = random_vec<double>(n * m, rng);
        auto dr = c0d, dt = c0d;
        if (!acc) {
          std::fill(dr.begin(), dr.end(), 0.0);
          std::fill(dt.begin(), dt.end(), 0.0);
        }
        ref.matmul_f64(a64.data(), b64.data(), dr.data(), n, k, m, acc);
        tbl->matmul_f64(a64.data(), b64.data(), dt.data(), n, k, m, acc);
        for (std::size_t i = 0; i < n * m; ++i) CHECK(close(dr[i], dt[i], kTolF64));
      }
    }
  }
}

TEST_CASE("transpose matmuls agree with explicit transpose reference") {
  Rng rng(17);
  const auto& ref = kn::scalar_table();
  const std::size_t n = 6, k = 5, m = 7;

  // A^T * B: A is k x n
  const auto a = random_vec<double>(k * n, rng);
  const auto b = random_vec<double>(k * m, rng);
  std::vector<double> at(n * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) at[j * k + i] = a[i * n + j];
  std::vector<double> want(n * m, 0.0), got(n * m, 0.0);
  ref.matmul_f64(at.data(), b.data(), want.data(), n, k, m, false);
  ref.matmul_at_b_f64(a.data(), b.data(), got.data(), n, k, m, false);
  for (std::size_t i = 0; i < n * m; ++i) CHECK(close(want[i], got[i], 1e-12));
  for (const auto* tbl : simd_tables()) {
    std::fill(got.begin(), got.end(), 0.0);
    tbl->matmul_at_b_f64(a.data(), b.data(), got.data(), n, k, m, false);
    for (std::size_t i = 0; i < n * m; ++i) CHECK(close(want[i], got[i], kTolF64));
  }

  // A * B^T: B is m x k
  const auto a2 = random_vec<double>(n * k, rng);
  const auto b2 = random_vec<double>(m * k, rng);
  std::vector<double> b2t(k * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) b2t[j * m + i] = b2[i * k + j];
  std::fill(want.begin(), want.end(), 0.0);
  ref.matmul_f64(a2.data(), b2t.data(), want.data(), n, k, m, false);
  std::fill(got.begin(), got.end(), 0.0);
  ref.matmul_a_bt_f64(a2.data(), b2.data(), got.data(), n, k, m, false);
  for (std::size_t i = 0; i < n * m; ++i) CHECK(close(want[i], got[i], 1e-12));
  for (const auto* tbl : simd_tables()) {
    std::fill(got.begin(), got.end(), 0.0);
    tbl->matmul_a_bt_f64(a2.data(), b2.data(), got.data(), n, k, m, false);
    for (std::size_t i = 0; i < n * m; ++i) CHECK(close(want[i], got[i], kTolF64));
  }
}

TEST_CASE("backend selection by name") {
  const std::string before = kn::active().name;
  kn::set_active("scalar");
  CHECK(std::string(kn::active().name) == "scalar");
  CHECK_THROWS_AS(kn::set_active("no-such-backend"), std::runtime_error);
  if (kn::avx2_table()) {
    kn::set_active("avx2");
    CHECK(std::string(kn::active().name) == "avx2");
  } else {
    CHECK_THROWS_AS(kn::set_active("avx2"), std::runtime_error);
  }
  if (kn::neon_table()) {
    kn::set_active("neon");
    CHECK(std::string(kn::active().name) == "neon");
  } else {
    CHECK_THROWS_AS(kn::set_active("neon"), std::runtime_error);
  }
  kn::set_active(before);
}
