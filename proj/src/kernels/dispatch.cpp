#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace starnet::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick(std::string_view name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") return avx2_kernels();
  if (name == "auto" || name.empty()) {
    if (const KernelTable* t = avx2_kernels()) return t;
    return &scalar_kernels();
  }
  return nullptr;
}

const KernelTable*& current() {
  static const KernelTable* table = [] {
    const char* env = std::getenv("STARNET_KERNELS");
    const KernelTable* t = pick(env ? std::string_view(env) : std::string_view("auto"));
    return t ? t : pick("auto");
  }();
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* table = cpu_has_avx2() ? avx2_table_if_compiled() : nullptr;
  return table;
}

const KernelTable& active_kernels() { return *current(); }

bool select_kernels(std::string_view name) {
  const KernelTable* t = pick(name);
  if (!t) return false;
  current() = t;
  return true;
}

}  // namespace starnet::kernels
