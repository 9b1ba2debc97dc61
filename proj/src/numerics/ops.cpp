#include "mvts/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mvts/error.hpp"
#include "mvts/kernels.hpp"

namespace mvts {
namespace {

template <class Real>
void require_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <class Real>
bool is_suffix(const Shape& whole, const Shape& suffix) {
  if (suffix.size() > whole.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), whole.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

}  // namespace

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t p = a.dim(a.rank() - 2);
  const std::size_t q = a.dim(a.rank() - 1);
  const std::size_t bq = transpose_b ? b.dim(b.rank() - 1) : b.dim(b.rank() - 2);
  const std::size_t r = transpose_b ? b.dim(b.rank() - 2) : b.dim(b.rank() - 1);
  const bool broadcast = b.rank() == 2;
  bool leading_ok = broadcast;
  if (!broadcast && a.rank() == b.rank()) {
    leading_ok = std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin());
  }
  if (q != bq || !leading_ok) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + (transpose_b ? " (b transposed)" : ""));
  }

  const std::size_t batches = p == 0 || q == 0 ? numel(a.shape()) : a.size() / (p * q);
  Shape out_shape = a.shape();
  out_shape.back() = r;
  std::vector<Real> out(numel(out_shape));
  const std::size_t ldb = transpose_b ? q : r;
  const auto& k = kernels::active<Real>();

  if (broadcast) {
    k.gemm({false, transpose_b, batches * p, r, q, a.data().data(), q, b.data().data(), ldb, out.data(), r,
            false});
  } else {
    for (std::size_t bi = 0; bi < batches; ++bi) {
      k.gemm({false, transpose_b, p, r, q, a.data().data() + bi * p * q, q, b.data().data() + bi * q * r, ldb,
              out.data() + bi * p * r, r, false});
    }
  }

  return Tensor<Real>::from_op(
      std::move(out_shape), std::move(out), {a, b},
      [=](TensorNode<Real>& self) {
        auto& na = *self.parents[0];
        auto& nb = *self.parents[1];
        const auto& kt = kernels::active<Real>();
        const std::size_t groups = broadcast ? 1 : batches;
        const std::size_t rows = broadcast ? batches * p : p;
        for (std::size_t g = 0; g < groups; ++g) {
          const Real* dc = self.grad.data() + g * rows * r;
          const Real* av = na.data.data() + g * rows * q;
          const Real* bv = nb.data.data() + g * q * r;
          if (na.requires_grad) {
            Real* da = na.ensure_grad().data() + g * rows * q;
            if (transpose_b) {
              kt.gemm({false, false, rows, q, r, dc, r, bv, q, da, q, true});
            } else {
              kt.gemm({false, true, rows, q, r, dc, r, bv, r, da, q, true});
            }
          }
          if (nb.requires_grad) {
            Real* db = nb.ensure_grad().data() + g * q * r;
            if (transpose_b) {
              kt.gemm({true, false, r, q, rows, dc, r, av, q, db, q, true});
            } else {
              kt.gemm({true, false, q, r, rows, av, q, dc, r, db, r, true});
            }
          }
        }
      });
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!is_suffix<Real>(a.shape(), b.shape())) {
    throw DimensionError("add: shape " + shape_string(b.shape()) + " does not broadcast onto " +
                         shape_string(a.shape()));
  }
  const std::size_t inner = b.size();
  const std::size_t outer = inner == 0 ? 0 : a.size() / inner;
  std::vector<Real> out(a.data().begin(), a.data().end());
  const auto& k = kernels::active<Real>();
  for (std::size_t o = 0; o < outer; ++o) k.axpy(inner, Real(1), b.data().data(), out.data() + o * inner);
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a, b}, [=](TensorNode<Real>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const auto& kt = kernels::active<Real>();
    if (na.requires_grad) kt.axpy(self.grad.size(), Real(1), self.grad.data(), na.ensure_grad().data());
    if (nb.requires_grad) {
      Real* db = nb.ensure_grad().data();
      for (std::size_t o = 0; o < outer; ++o) kt.axpy(inner, Real(1), self.grad.data() + o * inner, db);
    }
  });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("sub", a, b);
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a, b}, [](TensorNode<Real>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const auto& kt = kernels::active<Real>();
    if (na.requires_grad) kt.axpy(self.grad.size(), Real(1), self.grad.data(), na.ensure_grad().data());
    if (nb.requires_grad) kt.axpy(self.grad.size(), Real(-1), self.grad.data(), nb.ensure_grad().data());
  });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("mul", a, b);
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a, b}, [](TensorNode<Real>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * na.data[i];
    }
  });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a}, [factor](TensorNode<Real>& self) {
    kernels::active<Real>().axpy(self.grad.size(), factor, self.grad.data(),
                                 self.parents[0]->ensure_grad().data());
  });
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (Real v : a.data()) total += v;
  return Tensor<Real>::from_op(Shape{1}, {total}, {a}, [](TensorNode<Real>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw DimensionError("softmax_rows on empty rows " + shape_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  std::vector<Real> out(a.size());
  const auto& kt = kernels::active<Real>();
  for (std::size_t r = 0; r < rows; ++r) kt.softmax_row(width, a.data().data() + r * width, out.data() + r * width);
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a}, [width, rows](TensorNode<Real>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& kt = kernels::active<Real>();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* y = self.data.data() + r * width;
      const Real* dy = self.grad.data() + r * width;
      const Real inner = kt.dot(width, y, dy);
      Real* dx = g.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) dx[j] += y[j] * (dy[j] - inner);
    }
  });
}

template <class Real>
Tensor<Real> gelu(const Tensor<Real>& a) {
  const Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = a.data()[i];
    out[i] = Real(0.5) * x * (Real(1) + std::erf(x * inv_sqrt2));
  }
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a}, [inv_sqrt2](TensorNode<Real>& self) {
    auto& parent = *self.parents[0];
    auto& g = parent.ensure_grad();
    const Real inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<Real>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real x = parent.data[i];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(x * inv_sqrt2));
      const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <class Real>
Tensor<Real> dropout(const Tensor<Real>& a, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  const Real keep_scale = Real(1.0 / (1.0 - rate));
  // Each 64-bit draw decides two elements via its 32-bit halves.
  const auto cut = static_cast<std::uint64_t>(std::ldexp(rate, 32));
  std::vector<Real> factor(a.size());
  std::vector<Real> out(a.size());
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 2 == 0) bits = rng();
    const std::uint64_t u = (i % 2 == 0) ? (bits & 0xFFFFFFFFu) : (bits >> 32);
    factor[i] = u < cut ? Real(0) : keep_scale;
    out[i] = a.data()[i] * factor[i];
  }
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a},
                               [factor = std::move(factor)](TensorNode<Real>& self) {
                                 auto& g = self.parents[0]->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor[i];
                               });
}

template <class Real>
Tensor<Real> batch_norm(const Tensor<Real>& a, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        NormState<Real>& state, bool training, bool update_running) {
  if (a.rank() < 2) throw DimensionError("batch_norm needs rank >= 2, got " + shape_string(a.shape()));
  const std::size_t channels = a.shape().back();
  const std::size_t rows = a.size() / std::max<std::size_t>(channels, 1);
  if (gain.shape() != Shape{channels} || bias.shape() != Shape{channels} ||
      state.running_mean.size() != channels || state.running_var.size() != channels) {
    throw DimensionError("batch_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match " + std::to_string(channels) +
                         " channels");
  }
  if (training && rows < 2) {
    throw DimensionError("batch_norm in training mode needs at least 2 rows, got " + std::to_string(rows));
  }

  const Real eps = Real(state.epsilon);
  std::vector<Real> mean(channels, Real(0));
  std::vector<Real> inv_std(channels);
  const Real* x = a.data().data();
  if (training) {
    // Two-pass statistics in double for stability at float precision.
    std::vector<double> acc(channels, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) acc[c] += x[r * channels + c];
    for (std::size_t c = 0; c < channels; ++c) acc[c] /= static_cast<double>(rows);
    std::vector<double> var(channels, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = x[r * channels + c] - acc[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < channels; ++c) {
      var[c] /= static_cast<double>(rows);
      mean[c] = Real(acc[c]);
      inv_std[c] = Real(1.0 / std::sqrt(var[c] + state.epsilon));
      if (update_running) {
        const double unbiased = var[c] * static_cast<double>(rows) / static_cast<double>(rows - 1);
        state.running_mean[c] = Real((1.0 - state.momentum) * state.running_mean[c] + state.momentum * acc[c]);
        state.running_var[c] = Real((1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
      }
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = Real(1) / std::sqrt(state.running_var[c] + eps);
    }
  }

  std::vector<Real> normalized(a.size());
  std::vector<Real> out(a.size());
  const Real* g = gain.data().data();
  const Real* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      normalized[i] = (x[i] - mean[c]) * inv_std[c];
      out[i] = g[c] * normalized[i] + b[c];
    }
  }

  return Tensor<Real>::from_op(
      a.shape(), std::move(out), {a, gain, bias},
      [channels, rows, training, inv_std = std::move(inv_std),
       normalized = std::move(normalized)](TensorNode<Real>& self) {
        auto& na = *self.parents[0];
        auto& ng = *self.parents[1];
        auto& nb = *self.parents[2];
        const Real* dy = self.grad.data();
        std::vector<Real> sum_dy(channels, Real(0)), sum_dy_xhat(channels, Real(0));
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            sum_dy[c] += dy[i];
            sum_dy_xhat[c] += dy[i] * normalized[i];
          }
        if (ng.requires_grad) {
          auto& gg = ng.ensure_grad();
          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_dy_xhat[c];
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_dy[c];
        }
        if (na.requires_grad) {
          auto& gx = na.ensure_grad();
          const Real* gain_v = ng.data.data();
          if (training) {
            const Real inv_rows = Real(1) / Real(rows);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i = r * channels + c;
                gx[i] += gain_v[c] * inv_std[c] *
                         (dy[i] - inv_rows * sum_dy[c] - normalized[i] * inv_rows * sum_dy_xhat[c]);
              }
          } else {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i = r * channels + c;
                gx[i] += gain_v[c] * inv_std[c] * dy[i];
              }
          }
        }
      });
}

template <class Real>
Tensor<Real> split_heads(const Tensor<Real>& a, std::size_t heads) {
  if (a.rank() != 3 || heads == 0 || a.dim(2) % heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_string(a.shape()) + " into " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t n = a.dim(0), t = a.dim(1), width = a.dim(2) / heads;
  std::vector<Real> out(a.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(a.data().data() + (b * t + s) * heads * width + h * width, width,
                    out.data() + ((b * heads + h) * t + s) * width);
  return Tensor<Real>::from_op(Shape{n, heads, t, width}, std::move(out), {a},
                               [n, heads, t, width](TensorNode<Real>& self) {
                                 auto& g = self.parents[0]->ensure_grad();
                                 for (std::size_t b = 0; b < n; ++b)
                                   for (std::size_t h = 0; h < heads; ++h)
                                     for (std::size_t s = 0; s < t; ++s) {
                                       const Real* src = self.grad.data() + ((b * heads + h) * t + s) * width;
                                       Real* dst = g.data() + (b * t + s) * heads * width + h * width;
                                       for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                                     }
                               });
}

template <class Real>
Tensor<Real> merge_heads(const Tensor<Real>& a) {
  if (a.rank() != 4) throw DimensionError("merge_heads expects [N,H,T,d], got " + shape_string(a.shape()));
  const std::size_t n = a.dim(0), heads = a.dim(1), t = a.dim(2), width = a.dim(3);
  std::vector<Real> out(a.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(a.data().data() + ((b * heads + h) * t + s) * width, width,
                    out.data() + (b * t + s) * heads * width + h * width);
  return Tensor<Real>::from_op(Shape{n, t, heads * width}, std::move(out), {a},
                               [n, heads, t, width](TensorNode<Real>& self) {
                                 auto& g = self.parents[0]->ensure_grad();
                                 for (std::size_t b = 0; b < n; ++b)
                                   for (std::size_t h = 0; h < heads; ++h)
                                     for (std::size_t s = 0; s < t; ++s) {
                                       const Real* src = self.grad.data() + (b * t + s) * heads * width + h * width;
                                       Real* dst = g.data() + ((b * heads + h) * t + s) * width;
                                       for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
                                     }
                               });
}

template <class Real>
Tensor<Real> concat_columns(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_columns of nothing");
  const std::size_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw DimensionError("concat_columns: part " + shape_string(p.shape()) + " incompatible with " +
                           std::to_string(rows) + " rows");
    }
    offsets.push_back(cols);
    cols += p.dim(1);
  }
  std::vector<Real> out(rows * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[k].data().data() + r * w, w, out.data() + r * cols + offsets[k]);
  }
  return Tensor<Real>::from_op(Shape{rows, cols}, std::move(out), parts,
                               [rows, cols, offsets](TensorNode<Real>& self) {
                                 for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                   auto& part = *self.parents[k];
                                   if (!part.requires_grad) continue;
                                   auto& g = part.ensure_grad();
                                   const std::size_t w = part.shape[1];
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < w; ++j)
                                       g[r * w + j] += self.grad[r * cols + offsets[k] + j];
                                 }
                               });
}

template <class Real>
Tensor<Real> masked_mse(const Tensor<Real>& pred, const Tensor<Real>& target,
                        std::span<const std::uint8_t> mask) {
  require_same_shape("masked_mse", pred, target);
  if (mask.size() != pred.size()) {
    throw DimensionError("masked_mse: mask has " + std::to_string(mask.size()) + " cells for tensor " +
                         shape_string(pred.shape()));
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    total += d * d;
    ++count;
  }
  if (count == 0) throw Error(ErrorCategory::runtime, "masked_mse: mask selects no cells");
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  std::vector<Real> reference(target.data().begin(), target.data().end());
  return Tensor<Real>::from_op(
      Shape{1}, {Real(total / static_cast<double>(count))}, {pred},
      [count, keep = std::move(keep), reference = std::move(reference)](TensorNode<Real>& self) {
        auto& parent = *self.parents[0];
        auto& g = parent.ensure_grad();
        const Real factor = Real(2) * self.grad[0] / Real(count);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (keep[i]) g[i] += factor * (parent.data[i] - reference[i]);
        }
      });
}

#define MVTS_INSTANTIATE_OPS(Real)                                                                      \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&, bool);                         \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                               \
  template Tensor<Real> sum(const Tensor<Real>&);                                                       \
  template Tensor<Real> softmax_rows(const Tensor<Real>&);                                              \
  template Tensor<Real> gelu(const Tensor<Real>&);                                                      \
  template Tensor<Real> dropout(const Tensor<Real>&, double, bool, std::mt19937_64&);                   \
  template Tensor<Real> batch_norm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,       \
                                   NormState<Real>&, bool, bool);                                       \
  template Tensor<Real> split_heads(const Tensor<Real>&, std::size_t);                                  \
  template Tensor<Real> merge_heads(const Tensor<Real>&);                                               \
  template Tensor<Real> concat_columns(const std::vector<Tensor<Real>>&);                               \
  template Tensor<Real> masked_mse(const Tensor<Real>&, const Tensor<Real>&, std::span<const std::uint8_t>);

MVTS_INSTANTIATE_OPS(float)
MVTS_INSTANTIATE_OPS(double)

}  // namespace mvts
