#include <atomic>
#include <cstdlib>
#include <string>

#include "mvts/error.hpp"
#include "mvts/kernels.hpp"
#include "mvts/log.hpp"

namespace mvts::kernels {

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) noexcept {
  if (isa == Isa::scalar) return true;
#ifdef MVTS_HAVE_AVX2_KERNELS
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect_isa() {
  const Isa best = isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
  if (const char* env = std::getenv("MVTS_SIMD")) {
    const std::string requested(env);
    if (requested == "scalar") return Isa::scalar;
    if (requested == "avx2") {
      if (best == Isa::avx2) return Isa::avx2;
      warn("MVTS_SIMD=avx2 requested but not supported by this CPU; using scalar");
      return Isa::scalar;
    }
    warn("ignoring unknown MVTS_SIMD value '" + requested + "'");
  }
  return best;
}

namespace {
std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect_isa()};
  return slot;
}
}  // namespace

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ParameterError("ISA '" + std::string(isa_name(isa)) + "' is not supported on this CPU");
  }
  active_slot().store(isa);
}

template <class Real>
const KernelTable<Real>& table(Isa isa) {
#ifdef MVTS_HAVE_AVX2_KERNELS
  if (isa == Isa::avx2) return avx2::table<Real>();
#endif
  (void)isa;
  return scalar::table<Real>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace mvts::kernels
