#include <atomic>
#include <cstdlib>
#include <string>

#include "dspo/error.hpp"
#include "dspo/simd/kernels.hpp"

namespace dspo::simd {
namespace {

Isa initial_isa() {
  if (const char* forced = std::getenv("DSPO_ISA")) {
    const std::string name(forced);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (name == isa_name(isa) && isa_supported(isa)) return isa;
    }
  }
  return detect_isa();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels_for(initial_isa())};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (isa_supported(Isa::Avx2)) return Isa::Avx2;
  if (isa_supported(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    fail(ErrorKind::Config, "kernel variant '" + std::string(isa_name(isa)) +
                                "' is not supported on this host");
  }
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2: return avx2::table;
#endif
#if defined(__aarch64__)
    case Isa::Neon: return neon::table;
#endif
    default: return scalar::table;
  }
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_relaxed); }

Isa active_isa() {
  const KernelTable* current = &kernels();
  for (Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (isa_supported(isa) && current == &kernels_for(isa)) return isa;
  }
  return Isa::Scalar;
}

void set_isa(Isa isa) { active_table().store(&kernels_for(isa), std::memory_order_relaxed); }

}  // namespace dspo::simd
