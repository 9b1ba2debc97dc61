#include "mvts/model.hpp"

#include <cmath>

#include "mvts/error.hpp"

namespace mvts {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ParameterError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(window_length, "window_length");
  positive(channels, "channels");
  positive(latent_width, "latent_width");
  positive(heads, "heads");
  positive(query_width, "query_width");
  positive(value_width, "value_width");
  positive(layers, "layers");
  positive(ffn_width, "ffn_width");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ParameterError("model config: dropout_rate must lie in [0, 1)");
  }
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.latent_width;
  const std::size_t per_layer = c.heads * (2 * d * c.query_width + d * c.value_width) +
                                c.heads * c.value_width * d + d * c.ffn_width + c.ffn_width +
                                c.ffn_width * d + d + 4 * d;
  return c.channels * d + c.window_length * d + c.layers * per_layer + d * c.channels + c.channels;
}

template <class Real>
std::vector<std::pair<std::string, Tensor<Real>>> ModelParams<Real>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  out.emplace_back("P", projection);
  out.emplace_back("E", positional);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      out.emplace_back(hp + "W_q", layer.heads[h].w_query);
      out.emplace_back(hp + "W_k", layer.heads[h].w_key);
      out.emplace_back(hp + "W_v", layer.heads[h].w_value);
    }
    out.emplace_back(prefix + "W_A", layer.w_aggregate);
    out.emplace_back(prefix + "ffn.W1", layer.ffn_w1);
    out.emplace_back(prefix + "ffn.b1", layer.ffn_b1);
    out.emplace_back(prefix + "ffn.W2", layer.ffn_w2);
    out.emplace_back(prefix + "ffn.b2", layer.ffn_b2);
    out.emplace_back(prefix + "norm1.gain", layer.norm1_gain);
    out.emplace_back(prefix + "norm1.bias", layer.norm1_bias);
    out.emplace_back(prefix + "norm2.gain", layer.norm2_gain);
    out.emplace_back(prefix + "norm2.bias", layer.norm2_bias);
  }
  out.emplace_back("W_o", w_out);
  out.emplace_back("b_o", b_out);
  return out;
}

template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> ModelParams<Real>::named_buffers() {
  std::vector<std::pair<std::string, std::vector<Real>*>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.emplace_back(prefix + "norm1.running_mean", &layers[l].norm1.running_mean);
    out.emplace_back(prefix + "norm1.running_var", &layers[l].norm1.running_var);
    out.emplace_back(prefix + "norm2.running_mean", &layers[l].norm2.running_mean);
    out.emplace_back(prefix + "norm2.running_var", &layers[l].norm2.running_var);
  }
  return out;
}

template <class Real>
std::vector<std::pair<std::string, const std::vector<Real>*>> ModelParams<Real>::named_buffers() const {
  std::vector<std::pair<std::string, const std::vector<Real>*>> out;
  for (auto& [name, ptr] : const_cast<ModelParams*>(this)->named_buffers()) out.emplace_back(name, ptr);
  return out;
}

namespace {

template <class Real>
Tensor<Real> glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<Real> values(fan_in * fan_out);
  for (auto& v : values) v = Real(dist(rng));
  return Tensor<Real>(Shape{fan_in, fan_out}, std::move(values), true);
}

}  // namespace

template <class Real>
ModelParams<Real> init_params(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.latent_width;
  std::mt19937_64 rng(config.seed);
  ModelParams<Real> p;
  p.config = config;
  p.projection = glorot<Real>(config.channels, d, rng);
  {
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<Real> values(config.window_length * d);
    for (auto& v : values) v = Real(dist(rng));
    p.positional = Tensor<Real>(Shape{config.window_length, d}, std::move(values), true);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerParams<Real> layer;
    for (std::size_t h = 0; h < config.heads; ++h) {
      HeadParams<Real> head;
      head.w_query = glorot<Real>(d, config.query_width, rng);
      head.w_key = glorot<Real>(d, config.query_width, rng);
      head.w_value = glorot<Real>(d, config.value_width, rng);
      layer.heads.push_back(std::move(head));
    }
    layer.w_aggregate = glorot<Real>(config.heads * config.value_width, d, rng);
    layer.ffn_w1 = glorot<Real>(d, config.ffn_width, rng);
    layer.ffn_b1 = Tensor<Real>::zeros(Shape{config.ffn_width}, true);
    layer.ffn_w2 = glorot<Real>(config.ffn_width, d, rng);
    layer.ffn_b2 = Tensor<Real>::zeros(Shape{d}, true);
    layer.norm1_gain = Tensor<Real>::full(Shape{d}, Real(1), true);
    layer.norm1_bias = Tensor<Real>::zeros(Shape{d}, true);
    layer.norm2_gain = Tensor<Real>::full(Shape{d}, Real(1), true);
    layer.norm2_bias = Tensor<Real>::zeros(Shape{d}, true);
    layer.norm1 = NormState<Real>(d);
    layer.norm2 = NormState<Real>(d);
    p.layers.push_back(std::move(layer));
  }
  p.w_out = glorot<Real>(d, config.channels, rng);
  p.b_out = Tensor<Real>::zeros(Shape{config.channels}, true);
  return p;
}

template <class To, class From>
ModelParams<To> convert_params(const ModelParams<From>& src) {
  auto cast = [](const Tensor<From>& t) {
    std::vector<To> values(t.data().begin(), t.data().end());
    return Tensor<To>(t.shape(), std::move(values), t.requires_grad());
  };
  auto cast_state = [](const NormState<From>& s) {
    NormState<To> out(s.running_mean.size());
    std::copy(s.running_mean.begin(), s.running_mean.end(), out.running_mean.begin());
    std::copy(s.running_var.begin(), s.running_var.end(), out.running_var.begin());
    out.momentum = s.momentum;
    out.epsilon = s.epsilon;
    return out;
  };
  ModelParams<To> p;
  p.config = src.config;
  p.projection = cast(src.projection);
  p.positional = cast(src.positional);
  for (const auto& layer : src.layers) {
    LayerParams<To> out;
    for (const auto& h : layer.heads) out.heads.push_back({cast(h.w_query), cast(h.w_key), cast(h.w_value)});
    out.w_aggregate = cast(layer.w_aggregate);
    out.ffn_w1 = cast(layer.ffn_w1);
    out.ffn_b1 = cast(layer.ffn_b1);
    out.ffn_w2 = cast(layer.ffn_w2);
    out.ffn_b2 = cast(layer.ffn_b2);
    out.norm1_gain = cast(layer.norm1_gain);
    out.norm1_bias = cast(layer.norm1_bias);
    out.norm2_gain = cast(layer.norm2_gain);
    out.norm2_bias = cast(layer.norm2_bias);
    out.norm1 = cast_state(layer.norm1);
    out.norm2 = cast_state(layer.norm2);
    p.layers.push_back(std::move(out));
  }
  p.w_out = cast(src.w_out);
  p.b_out = cast(src.b_out);
  return p;
}

template <class Real>
Tensor<Real> embed(const Tensor<Real>& x, const ModelParams<Real>& params) {
  const auto& c = params.config;
  if (x.rank() != 3 || x.dim(1) != c.window_length || x.dim(2) != c.channels) {
    throw DimensionError("embed: input " + shape_string(x.shape()) + " does not match [N x " +
                         std::to_string(c.window_length) + " x " + std::to_string(c.channels) + "]");
  }
  return add(matmul(x, params.projection), params.positional);
}

template <class Real>
Tensor<Real> single_head_attention(const Tensor<Real>& z, const HeadParams<Real>& head,
                                   Tensor<Real>* attention_out) {
  const Real inv_scale = Real(1) / std::sqrt(Real(head.w_query.dim(1)));
  auto q = matmul(z, head.w_query);
  auto k = matmul(z, head.w_key);
  auto v = matmul(z, head.w_value);
  auto weights = softmax_rows(scale(matmul(q, k, true), inv_scale));
  if (attention_out) *attention_out = weights;
  return matmul(weights, v);
}

template <class Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& z, const LayerParams<Real>& layer,
                                  Tensor<Real>* attention_out) {
  // All heads in one projection each for Q, K, V: [N,T,H·d] -> [N,H,T,d].
  const std::size_t heads = layer.heads.size();
  std::vector<Tensor<Real>> wq, wk, wv;
  for (const auto& h : layer.heads) {
    wq.push_back(h.w_query);
    wk.push_back(h.w_key);
    wv.push_back(h.w_value);
  }
  const Real inv_scale = Real(1) / std::sqrt(Real(layer.heads.front().w_query.dim(1)));
  auto q = split_heads(matmul(z, concat_columns(wq)), heads);
  auto k = split_heads(matmul(z, concat_columns(wk)), heads);
  auto v = split_heads(matmul(z, concat_columns(wv)), heads);
  auto weights = softmax_rows(scale(matmul(q, k, true), inv_scale));
  if (attention_out) *attention_out = weights;
  return matmul(merge_heads(matmul(weights, v)), layer.w_aggregate);
}

template <class Real>
Tensor<Real> transformer_layer(const Tensor<Real>& z, LayerParams<Real>& layer, double dropout_rate,
                               const ForwardOptions& options, Tensor<Real>* attention_out) {
  const bool stochastic = options.training && dropout_rate > 0.0;
  if (stochastic && options.rng == nullptr) {
    throw ParameterError("transformer_layer: dropout in training mode needs a generator");
  }
  std::mt19937_64 unused;
  std::mt19937_64& rng = options.rng ? *options.rng : unused;

  auto attended = dropout(multi_head_attention(z, layer, attention_out), dropout_rate, options.training, rng);
  auto z1 = batch_norm(add(attended, z), layer.norm1_gain, layer.norm1_bias, layer.norm1, options.training,
                       options.update_norm_statistics);
  auto hidden = gelu(add(matmul(z1, layer.ffn_w1), layer.ffn_b1));
  auto mixed = dropout(add(matmul(hidden, layer.ffn_w2), layer.ffn_b2), dropout_rate, options.training, rng);
  return batch_norm(add(mixed, z1), layer.norm2_gain, layer.norm2_bias, layer.norm2, options.training,
                    options.update_norm_statistics);
}

template <class Real>
ForwardResult<Real> forward(const Tensor<Real>& x, ModelParams<Real>& params, const ForwardOptions& options) {
  ForwardResult<Real> result;
  auto z = embed(x, params);
  for (auto& layer : params.layers) {
    Tensor<Real> attention;
    z = transformer_layer(z, layer, params.config.dropout_rate, options,
                          options.capture_attention ? &attention : nullptr);
    if (options.capture_attention) result.attention.push_back(std::move(attention));
  }
  result.reconstruction = add(matmul(z, params.w_out), params.b_out);
  return result;
}

template <class Real>
ForwardResult<Real> infer(const Tensor<Real>& x, const ModelParams<Real>& params, bool capture_attention) {
  // Inference mode only reads the norm running statistics.
  ForwardOptions options;
  options.capture_attention = capture_attention;
  return forward(x, const_cast<ModelParams<Real>&>(params), options);
}

#define MVTS_INSTANTIATE_MODEL(Real)                                                                      \
  template struct ModelParams<Real>;                                                                      \
  template ModelParams<Real> init_params<Real>(const ModelConfig&);                                       \
  template Tensor<Real> embed(const Tensor<Real>&, const ModelParams<Real>&);                             \
  template Tensor<Real> single_head_attention(const Tensor<Real>&, const HeadParams<Real>&, Tensor<Real>*); \
  template Tensor<Real> multi_head_attention(const Tensor<Real>&, const LayerParams<Real>&, Tensor<Real>*); \
  template Tensor<Real> transformer_layer(const Tensor<Real>&, LayerParams<Real>&, double,                \
                                          const ForwardOptions&, Tensor<Real>*);                          \
  template ForwardResult<Real> forward(const Tensor<Real>&, ModelParams<Real>&, const ForwardOptions&);       \
  template ForwardResult<Real> infer(const Tensor<Real>&, const ModelParams<Real>&, bool);

MVTS_INSTANTIATE_MODEL(float)
MVTS_INSTANTIATE_MODEL(double)

template ModelParams<double> convert_params<double, float>(const ModelParams<float>&);
template ModelParams<float> convert_params<float, double>(const ModelParams<double>&);
template ModelParams<float> convert_params<float, float>(const ModelParams<float>&);
template ModelParams<double> convert_params<double, double>(const ModelParams<double>&);

}  // namespace mvts
