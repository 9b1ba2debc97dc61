#pragma once

// Dense inner-loop kernels. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant. The active table is chosen once at startup
// from CPUID and can be overridden with MVTS_SIMD=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace mvts::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Row-major C[m×n] = (accumulate ? C : 0) + op(A)·op(B), where op(A) is m×k
/// and op(B) is k×n. A transposed operand is read as its stored k×m / n×k
/// matrix with the given leading dimension.
template <class Real>
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  const Real* a = nullptr;
  std::size_t lda = 0;
  const Real* b = nullptr;
  std::size_t ldb = 0;
  Real* c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
};

template <class Real>
struct KernelTable {
  Isa isa;
  void (*gemm)(const GemmArgs<Real>& args);
  /// y += alpha·x
  void (*axpy)(std::size_t n, Real alpha, const Real* x, Real* y);
  Real (*dot)(std::size_t n, const Real* x, const Real* y);
  /// Σ|a−b|
  Real (*abs_diff_sum)(std::size_t n, const Real* a, const Real* b);
  /// y = exp(x − max x) / Σ exp(x − max x), n ≥ 1
  void (*softmax_row)(std::size_t n, const Real* x, Real* y);
};

bool isa_supported(Isa isa) noexcept;

/// Best supported ISA, honoring MVTS_SIMD when it names a supported ISA.
Isa detect_isa();

Isa active_isa() noexcept;

/// Switch the process-wide table. Throws ParameterError if unsupported.
void set_active_isa(Isa isa);

template <class Real>
const KernelTable<Real>& table(Isa isa);

template <class Real>
const KernelTable<Real>& active() {
  return table<Real>(active_isa());
}

namespace scalar {
template <class Real>
const KernelTable<Real>& table();
template <class Real>
void softmax_row(std::size_t n, const Real* x, Real* y);
}

#if defined(__x86_64__) || defined(_M_X64)
#define MVTS_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <class Real>
const KernelTable<Real>& table();
}
#endif

}  // namespace mvts::kernels
