// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "mvts/kernels.hpp"

namespace mvts::kernels::avx2 {
namespace {

template <class Real>
struct Vec;

template <>
struct Vec<float> {
  using type = __m256;
  static constexpr std::size_t lanes = 8;
  static type zero() { return _mm256_setzero_ps(); }
  static type load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, type v) { _mm256_storeu_ps(p, v); }
  static type set1(float x) { return _mm256_set1_ps(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_ps(a, b, c); }
  static type add(type a, type b) { return _mm256_add_ps(a, b); }
  static type abs_diff(type a, type b) {
    return _mm256_andnot_ps(_mm256_set1_ps(-0.0f), _mm256_sub_ps(a, b));
  }
  static float hsum(type v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using type = __m256d;
  static constexpr std::size_t lanes = 4;
  static type zero() { return _mm256_setzero_pd(); }
  static type load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, type v) { _mm256_storeu_pd(p, v); }
  static type set1(double x) { return _mm256_set1_pd(x); }
  static type fmadd(type a, type b, type c) { return _mm256_fmadd_pd(a, b, c); }
  static type add(type a, type b) { return _mm256_add_pd(a, b); }
  static type abs_diff(type a, type b) {
    return _mm256_andnot_pd(_mm256_set1_pd(-0.0), _mm256_sub_pd(a, b));
  }
  static double hsum(type v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

template <class Real>
std::vector<Real>& scratch() {
  thread_local std::vector<Real> buffer;
  return buffer;
}

// C[R × NV·L] tile at (i, j) over k-slice [p0, p0+kb). A element (i, p) lives
// at a[i·rs + p·ps], so a transposed A is read in place.
template <class Real, int R, int NV>
void tile(std::size_t i, std::size_t j, std::size_t p0, std::size_t kb, const Real* a, std::size_t rs,
          std::size_t ps, const Real* b, std::size_t ldb, Real* c, std::size_t ldc, bool accumulate) {
  using V = Vec<Real>;
  constexpr std::size_t L = V::lanes;
  typename V::type acc[R][NV];
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = accumulate ? V::load(c + (i + r) * ldc + j + v * L) : V::zero();
  const Real* ap = a + i * rs + p0 * ps;
  const Real* bp = b + p0 * ldb + j;
  for (std::size_t p = 0; p < kb; ++p, ap += ps, bp += ldb) {
    typename V::type bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = V::load(bp + v * L);
    for (int r = 0; r < R; ++r) {
      const auto av = V::set1(ap[r * rs]);
      for (int v = 0; v < NV; ++v) acc[r][v] = V::fmadd(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < NV; ++v) V::store(c + (i + r) * ldc + j + v * L, acc[r][v]);
}

template <class Real, int NV>
void column_strip(std::size_t i0, std::size_t m, std::size_t j, std::size_t p0, std::size_t kb, const Real* a, std::size_t rs,
                  std::size_t ps, const Real* b, std::size_t ldb, Real* c, std::size_t ldc, bool accumulate) {
  std::size_t i = i0;
  for (; i + 4 <= m; i += 4) tile<Real, 4, NV>(i, j, p0, kb, a, rs, ps, b, ldb, c, ldc, accumulate);
  for (; i < m; ++i) tile<Real, 1, NV>(i, j, p0, kb, a, rs, ps, b, ldb, c, ldc, accumulate);
}

constexpr std::size_t kDepthBlock = 256;
constexpr std::size_t kRowBlock = 64;

template <class Real>
void gemm(const GemmArgs<Real>& g) {
  using V = Vec<Real>;
  constexpr std::size_t L = V::lanes;
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    if (!g.accumulate) {
      for (std::size_t i = 0; i < g.m; ++i) std::fill(g.c + i * g.ldc, g.c + i * g.ldc + g.n, Real(0));
    }
    return;
  }

  const Real* b = g.b;
  std::size_t ldb = g.ldb;
  if (g.trans_b) {
    auto& packed = scratch<Real>();
    packed.resize(g.k * g.n);
    for (std::size_t p = 0; p < g.k; ++p)
      for (std::size_t j = 0; j < g.n; ++j) packed[p * g.n + j] = g.b[j * g.ldb + p];
    b = packed.data();
    ldb = g.n;
  }
  const std::size_t rs = g.trans_a ? 1 : g.lda;
  const std::size_t ps = g.trans_a ? g.lda : 1;

  for (std::size_t p0 = 0; p0 < g.k; p0 += kDepthBlock) {
    const std::size_t kb = std::min(kDepthBlock, g.k - p0);
    const bool accumulate = g.accumulate || p0 > 0;
    for (std::size_t i0 = 0; i0 < g.m; i0 += kRowBlock) {
      const std::size_t i1 = std::min(g.m, i0 + kRowBlock);
      std::size_t j = 0;
      for (; j + 2 * L <= g.n; j += 2 * L)
        column_strip<Real, 2>(i0, i1, j, p0, kb, g.a, rs, ps, b, ldb, g.c, g.ldc, accumulate);
      for (; j + L <= g.n; j += L) column_strip<Real, 1>(i0, i1, j, p0, kb, g.a, rs, ps, b, ldb, g.c, g.ldc, accumulate);
      if (j == g.n) continue;
      for (std::size_t i = i0; i < i1; ++i) {
        Real* c = g.c + i * g.ldc;
        if (!accumulate) std::fill(c + j, c + g.n, Real(0));
        for (std::size_t p = p0; p < p0 + kb; ++p) {
          const Real a_ip = g.a[i * rs + p * ps];
          const Real* bp = b + p * ldb;
          for (std::size_t jj = j; jj < g.n; ++jj) c[jj] += a_ip * bp[jj];
        }
      }
    }
  }
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  using V = Vec<Real>;
  const auto av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::lanes <= n; i += V::lanes) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
Real dot(std::size_t n, const Real* x, const Real* y) {
  using V = Vec<Real>;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + V::lanes <= n; i += V::lanes) acc = V::fmadd(V::load(x + i), V::load(y + i), acc);
  Real s = V::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class Real>
Real abs_diff_sum(std::size_t n, const Real* a, const Real* b) {
  using V = Vec<Real>;
  auto acc = V::zero();
  std::size_t i = 0;
  for (; i + V::lanes <= n; i += V::lanes) acc = V::add(acc, V::abs_diff(V::load(a + i), V::load(b + i)));
  Real s = V::hsum(acc);
  for (; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// Cephes-style expf: range reduction by ln 2, degree-5 polynomial, exponent
// bits assembled directly. Inputs are clamped to keep results normal.
__m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(_mm256_max_ps(x, _mm256_set1_ps(-87.0f)), _mm256_set1_ps(88.0f));
  __m256 n = _mm256_floor_ps(_mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f)));
  x = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), x);
  x = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, _mm256_set1_ps(1.0f)));
  const __m256i bits = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(bits));
}

void softmax_row_f32(std::size_t n, const float* x, float* y) {
  std::size_t i = 0;
  __m256 vmax = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
  for (; i + 8 <= n; i += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(x + i));
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, vmax);
  float peak = *std::max_element(lanes, lanes + 8);
  for (; i < n; ++i) peak = std::max(peak, x[i]);

  // The denominator is summed in double so rows add up to 1 to float precision.
  const __m256 vpeak = _mm256_set1_ps(peak);
  __m256d acc = _mm256_setzero_pd();
  for (i = 0; i + 8 <= n; i += 8) {
    const __m256 e = exp_ps(_mm256_sub_ps(_mm256_loadu_ps(x + i), vpeak));
    _mm256_storeu_ps(y + i, e);
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_castps256_ps128(e)));
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_extractf128_ps(e, 1)));
  }
  double total = Vec<double>::hsum(acc);
  for (; i < n; ++i) {
    y[i] = std::exp(x[i] - peak);
    total += y[i];
  }
  const auto inv = static_cast<float>(1.0 / total);
  const __m256 vinv = _mm256_set1_ps(inv);
  for (i = 0; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), vinv));
  for (; i < n; ++i) y[i] *= inv;
}

template <class Real>
void softmax_row(std::size_t n, const Real* x, Real* y) {
  if constexpr (std::is_same_v<Real, float>) {
    softmax_row_f32(n, x, y);
  } else {
    scalar::softmax_row(n, x, y);  // double is only used for verification
  }
}

}  // namespace

template <class Real>
const KernelTable<Real>& table() {
  static const KernelTable<Real> t{Isa::avx2, &gemm<Real>, &axpy<Real>, &dot<Real>,
                                   &abs_diff_sum<Real>, &softmax_row<Real>};
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace mvts::kernels::avx2
