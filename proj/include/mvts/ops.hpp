#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mvts/tensor.hpp"

namespace mvts {

/// a[..., p, q] · b[q, r] (weight broadcast over leading axes) or
/// a[..., p, q] · b[..., q, r] with identical leading axes. With
/// `transpose_b`, b is stored as [..., r, q].
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool transpose_b = false);

/// Elementwise sum. b may also match a trailing suffix of a's shape, in which
/// case it is broadcast over the leading axes.
template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a);

/// Softmax over the last axis with max subtraction.
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a);

/// x·Φ(x) with the exact Gaussian CDF.
template <class Real>
Tensor<Real> gelu(const Tensor<Real>& a);

/// Inverted dropout. Throws ParameterError unless 0 <= rate < 1.
template <class Real>
Tensor<Real> dropout(const Tensor<Real>& a, double rate, bool training, std::mt19937_64& rng);

template <class Real>
struct NormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  explicit NormState(std::size_t channels = 0)
      : running_mean(channels, Real(0)), running_var(channels, Real(1)) {}
};

/// Batch normalization over every axis except the last (features). Training
/// mode uses batch statistics and updates `state` unless `update_running` is
/// false; inference mode uses the running statistics.
template <class Real>
Tensor<Real> batch_norm(const Tensor<Real>& a, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        NormState<Real>& state, bool training, bool update_running = true);

/// [N, T, H·d] -> [N, H, T, d]
template <class Real>
Tensor<Real> split_heads(const Tensor<Real>& a, std::size_t heads);

/// [N, H, T, d] -> [N, T, H·d]
template <class Real>
Tensor<Real> merge_heads(const Tensor<Real>& a);

/// Concatenate 2-D tensors with equal row counts along columns.
template <class Real>
Tensor<Real> concat_columns(const std::vector<Tensor<Real>>& parts);

/// Σ over cells with mask != 0 of (pred − target)² divided by the number of
/// such cells. Gradient flows into `pred` only.
template <class Real>
Tensor<Real> masked_mse(const Tensor<Real>& pred, const Tensor<Real>& target,
                        std::span<const std::uint8_t> mask);

}  // namespace mvts
