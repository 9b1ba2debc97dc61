#include <algorithm>
#include <cmath>

#include "mvts/kernels.hpp"

namespace mvts::kernels::scalar {
namespace {

template <class Real>
void gemm(const GemmArgs<Real>& g) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return g.trans_a ? g.a[p * g.lda + i] : g.a[i * g.lda + p];
  };
  auto b_at = [&](std::size_t p, std::size_t j) {
    return g.trans_b ? g.b[j * g.ldb + p] : g.b[p * g.ldb + j];
  };
  for (std::size_t i = 0; i < g.m; ++i) {
    Real* c_row = g.c + i * g.ldc;
    if (!g.accumulate) std::fill(c_row, c_row + g.n, Real(0));
    for (std::size_t p = 0; p < g.k; ++p) {
      const Real a_ip = a_at(i, p);
      for (std::size_t j = 0; j < g.n; ++j) c_row[j] += a_ip * b_at(p, j);
    }
  }
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
Real dot(std::size_t n, const Real* x, const Real* y) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class Real>
Real abs_diff_sum(std::size_t n, const Real* a, const Real* b) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

}  // namespace

template <class Real>
void softmax_row(std::size_t n, const Real* x, Real* y) {
  const Real peak = *std::max_element(x, x + n);
  double total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - peak);
    total += y[j];
  }
  const auto inv = static_cast<Real>(1.0 / total);
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

template void softmax_row<float>(std::size_t, const float*, float*);
template void softmax_row<double>(std::size_t, const double*, double*);

template <class Real>
const KernelTable<Real>& table() {
  static const KernelTable<Real> t{Isa::scalar, &gemm<Real>, &axpy<Real>, &dot<Real>,
                                   &abs_diff_sum<Real>, &softmax_row<Real>};
  return t;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace mvts::kernels::scalar
