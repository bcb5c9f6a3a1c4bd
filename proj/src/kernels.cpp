#include "formtree/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace formtree::kernels {

const Kernels* avx2_table_impl();
const Kernels* neon_table_impl();

const Kernels* avx2_table() {
#if defined(__x86_64__) || defined(__i386__)
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
#endif
  return avx2_table_impl();
}

const Kernels* neon_table() { return neon_table_impl(); }

namespace {

const Kernels* g_active = nullptr;

const Kernels* pick_default() {
  if (const char* env = std::getenv("FORMTREE_KERNELS")) {
    std::string_view want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table()) return avx2_table();
    if (want == "neon" && neon_table()) return neon_table();
    // Unknown or unavailable backend requested: fall through to autodetect.
  }
  if (const Kernels* t = avx2_table()) return t;
  if (const Kernels* t = neon_table()) return t;
  return &scalar_table();
}

}  // namespace

const Kernels& active() {
  if (!g_active) g_active = pick_default();
  return *g_active;
}

void set_active(std::string_view name) {
  if (name == "scalar") {
    g_active = &scalar_table();
    return;
  }
  if (name == "avx2") {
    if (const Kernels* t = avx2_table()) {
      g_active = t;
      return;
    }
    throw std::runtime_error("avx2 kernels unavailable on this CPU/build");
  }
  if (name == "neon") {
    if (const Kernels* t = neon_table()) {
      g_active = t;
      return;
    }
    throw std::runtime_error("neon kernels unavailable on this CPU/build");
  }
  throw std::runtime_error("unknown kernel backend: " + std::string(name));
}

}  // namespace formtree::kernels
