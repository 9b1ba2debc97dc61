#pragma once

// Transformer autoencoder for multivariate windows: input projection plus a
// trainable positional table, post-residual transformer layers with batch
// normalization, and a per-time-point affine reconstruction head.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvts/ops.hpp"
#include "mvts/tensor.hpp"

namespace mvts {

struct ModelConfig {
  std::size_t window_length = 128;  // T
  std::size_t channels = 4;         // M
  std::size_t latent_width = 64;    // D
  std::size_t heads = 8;            // H
  std::size_t query_width = 8;      // D_q (also key width)
  std::size_t value_width = 8;      // D_v
  std::size_t layers = 3;
  std::size_t ffn_width = 256;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  /// Throws ParameterError on any out-of-range field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form trainable parameter count.
std::size_t parameter_count(const ModelConfig& config);

template <class Real>
struct HeadParams {
  Tensor<Real> w_query;  // D × D_q
  Tensor<Real> w_key;    // D × D_q
  Tensor<Real> w_value;  // D × D_v
};

template <class Real>
struct LayerParams {
  std::vector<HeadParams<Real>> heads;
  Tensor<Real> w_aggregate;  // (H·D_v) × D
  Tensor<Real> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor<Real> norm1_gain, norm1_bias, norm2_gain, norm2_bias;
  NormState<Real> norm1, norm2;
};

template <class Real>
struct ModelParams {
  ModelConfig config;
  Tensor<Real> projection;  // P: M × D
  Tensor<Real> positional;  // E: T × D
  std::vector<LayerParams<Real>> layers;
  Tensor<Real> w_out;  // D × M
  Tensor<Real> b_out;  // M

  /// Trainable tensors in a fixed order with stable names.
  std::vector<std::pair<std::string, Tensor<Real>>> named_parameters() const;

  /// Non-trainable running statistics, as (name, pointer) pairs.
  std::vector<std::pair<std::string, std::vector<Real>*>> named_buffers();
  std::vector<std::pair<std::string, const std::vector<Real>*>> named_buffers() const;
};

/// Fresh parameters: Glorot-uniform matrices, E ~ N(0, 0.02²), zero biases,
/// unit norm gains. Deterministic in config.seed.
template <class Real>
ModelParams<Real> init_params(const ModelConfig& config);

/// Deep copy into another precision.
template <class To, class From>
ModelParams<To> convert_params(const ModelParams<From>& params);

struct ForwardOptions {
  bool training = false;
  bool capture_attention = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
  bool update_norm_statistics = true;
};

template <class Real>
struct ForwardResult {
  Tensor<Real> reconstruction;                 // N × T × M
  std::vector<Tensor<Real>> attention;         // per layer, N × H × T × T (when captured)
};

template <class Real>
Tensor<Real> embed(const Tensor<Real>& x, const ModelParams<Real>& params);

template <class Real>
Tensor<Real> single_head_attention(const Tensor<Real>& z, const HeadParams<Real>& head,
                                   Tensor<Real>* attention_out = nullptr);

template <class Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& z, const LayerParams<Real>& layer,
                                  Tensor<Real>* attention_out = nullptr);

template <class Real>
Tensor<Real> transformer_layer(const Tensor<Real>& z, LayerParams<Real>& layer, double dropout_rate,
                               const ForwardOptions& options, Tensor<Real>* attention_out = nullptr);

template <class Real>
ForwardResult<Real> forward(const Tensor<Real>& x, ModelParams<Real>& params, const ForwardOptions& options);

/// Inference-mode forward on shared, read-only parameters.
template <class Real>
ForwardResult<Real> infer(const Tensor<Real>& x, const ModelParams<Real>& params, bool capture_attention = false);

}  // namespace mvts
