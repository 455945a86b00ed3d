#include "svyperm/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace svyperm::kernels {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* pick_auto() {
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_supports_avx2_fma()) return &avx2_table();
#endif
  return &scalar_table();
}

const KernelTable* pick(std::string_view name) {
  if (name == "auto") {
    return pick_auto();
  }
  if (name == "scalar") {
    return &scalar_table();
  }
  if (name == "avx2") {
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_supports_avx2_fma()) return &avx2_table();
#endif
    throw std::runtime_error("kernels: avx2 requested but not supported on this CPU");
  }
  throw std::invalid_argument("kernels: unknown variant '" + std::string(name) +
                              "' (expected scalar, avx2 or auto)");
}

const KernelTable* initial_pick() {
  if (const char* env = std::getenv("SVYPERM_KERNELS")) {
    return pick(env);
  }
  return pick_auto();
}

}  // namespace

bool cpu_supports_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() {
  const KernelTable* table = g_active.load(std::memory_order_acquire);
  if (!table) {
    table = initial_pick();
    g_active.store(table, std::memory_order_release);
  }
  return *table;
}

void select(std::string_view name) {
  g_active.store(pick(name), std::memory_order_release);
}

}  // namespace svyperm::kernels
