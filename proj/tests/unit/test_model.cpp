#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mvts/error.hpp"
#include "mvts/gradcheck.hpp"
#include "mvts/model.hpp"
#include "test_util.hpp"

using namespace mvts;
using mvts::testing::random_tensor;
using Mat = std::vector<std::vector<double>>;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.window_length = 8;
  c.channels = 2;
  c.latent_width = 8;
  c.heads = 2;
  c.query_width = 4;
  c.value_width = 4;
  c.layers = 1;
  c.ffn_width = 16;
  c.dropout_rate = 0.0;
  c.seed = 3;
  return c;
}

// Perturb every parameter away from its structured init (zero biases, unit
// gains) so the oracles see generic values.
template <class Real>
void jitter(ModelParams<Real>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (auto& [name, t] : p.named_parameters()) {
    auto values = const_cast<Tensor<Real>&>(t).mutable_data();
    for (auto& v : values) v += Real(d(rng));
  }
}

Mat item(const Tensor<double>& t, std::size_t n) {
  const std::size_t rows = t.dim(t.rank() - 2), cols = t.dim(t.rank() - 1);
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.data()[(n * rows + i) * cols + j];
  return m;
}

Mat as_mat(const Tensor<double>& t) { return item(t, 0); }

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < b.size(); ++p)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

Mat ref_head(const Mat& z, const HeadParams<double>& h, Mat* weights = nullptr) {
  const Mat q = mm(z, as_mat(h.w_query)), k = mm(z, as_mat(h.w_key)), v = mm(z, as_mat(h.w_value));
  const double dq = double(q[0].size());
  Mat a(z.size(), std::vector<double>(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      double s = 0;
      for (std::size_t c = 0; c < q[0].size(); ++c) s += q[i][c] * k[j][c];
      a[i][j] = std::exp(s / std::sqrt(dq));
      denom += a[i][j];
    }
    for (auto& x : a[i]) x /= denom;
  }
  if (weights) *weights = a;
  return mm(a, v);
}

Mat ref_mha(const Mat& z, const LayerParams<double>& layer) {
  Mat concat(z.size());
  for (const auto& h : layer.heads) {
    const Mat o = ref_head(z, h);
    for (std::size_t t = 0; t < z.size(); ++t) concat[t].insert(concat[t].end(), o[t].begin(), o[t].end());
  }
  return mm(concat, as_mat(layer.w_aggregate));
}

// Training-mode batch norm over all rows of all items, no dropout.
void ref_norm(std::vector<Mat>& xs, const Tensor<double>& gain, const Tensor<double>& bias) {
  const std::size_t d = xs[0][0].size();
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0, var = 0, count = 0;
    for (auto& x : xs)
      for (auto& row : x) mean += row[c], ++count;
    mean /= count;
    for (auto& x : xs)
      for (auto& row : x) var += (row[c] - mean) * (row[c] - mean);
    var /= count;
    for (auto& x : xs)
      for (auto& row : x) row[c] = (row[c] - mean) / std::sqrt(var + 1e-5) * gain.data()[c] + bias.data()[c];
  }
}

std::vector<Mat> ref_layer(std::vector<Mat> zs, const LayerParams<double>& layer) {
  std::vector<Mat> z1 = zs;
  for (std::size_t n = 0; n < zs.size(); ++n) {
    const Mat a = ref_mha(zs[n], layer);
    for (std::size_t t = 0; t < a.size(); ++t)
      for (std::size_t c = 0; c < a[0].size(); ++c) z1[n][t][c] += a[t][c];
  }
  ref_norm(z1, layer.norm1_gain, layer.norm1_bias);
  std::vector<Mat> z2 = z1;
  for (std::size_t n = 0; n < zs.size(); ++n) {
    Mat h = mm(z1[n], as_mat(layer.ffn_w1));
    for (auto& row : h)
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double x = row[j] + layer.ffn_b1.data()[j];
        row[j] = 0.5 * x * std::erfc(-x / std::sqrt(2.0));
      }
    const Mat f = mm(h, as_mat(layer.ffn_w2));
    for (std::size_t t = 0; t < f.size(); ++t)
      for (std::size_t c = 0; c < f[0].size(); ++c) z2[n][t][c] += f[t][c] + layer.ffn_b2.data()[c];
  }
  ref_norm(z2, layer.norm2_gain, layer.norm2_bias);
  return z2;
}

void check_close(const Mat& expected, const Tensor<double>& actual, std::size_t n, double tol = 1e-10) {
  const Mat got = item(actual, n);
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    for (std::size_t j = 0; j < got[0].size(); ++j) CHECK(std::abs(got[i][j] - expected[i][j]) <= tol);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.heads = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = ModelConfig{};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("parameter count matches the tensors and a hand count") {
  for (auto c : {tiny_config(), ModelConfig{}}) {
    const auto p = init_params<float>(c);
    std::size_t total = 0;
    for (const auto& [name, t] : p.named_parameters()) total += t.size();
    CHECK(total == parameter_count(c));
  }
  // tiny: P 16, E 64, heads 2·(32+32+32)=192, W_A 64, W1 128, b1 16, W2 128,
  // b2 8, norms 32, W_o 16, b_o 2
  CHECK(parameter_count(tiny_config()) == 16 + 64 + 192 + 64 + 128 + 16 + 128 + 8 + 32 + 16 + 2);
}

TEST_CASE("parameter shapes and init") {
  const auto c = ModelConfig{};
  const auto p = init_params<float>(c);
  CHECK(p.projection.shape() == Shape{4, 64});
  CHECK(p.positional.shape() == Shape{128, 64});
  CHECK(p.layers.size() == 3);
  CHECK(p.layers[0].heads.size() == 8);
  CHECK(p.layers[0].heads[0].w_query.shape() == Shape{64, 8});
  CHECK(p.layers[0].w_aggregate.shape() == Shape{64, 64});
  CHECK(p.layers[2].ffn_w1.shape() == Shape{64, 256});
  CHECK(p.w_out.shape() == Shape{64, 4});
  const double limit = std::sqrt(6.0 / (64 + 256));
  for (float v : p.layers[1].ffn_w1.data()) CHECK(std::abs(v) <= limit);
  double sq = 0;
  for (float v : p.positional.data()) sq += double(v) * v;
  CHECK(std::sqrt(sq / p.positional.size()) == doctest::Approx(0.02).epsilon(0.05));
  for (float v : p.layers[0].norm1_gain.data()) CHECK(v == 1.0f);
  // same seed, same tensors
  const auto again = init_params<float>(c);
  CHECK(std::equal(p.positional.data().begin(), p.positional.data().end(), again.positional.data().begin()));
}

TEST_CASE("embed") {
  auto c = tiny_config();
  auto p = init_params<double>(c);
  jitter(p, 1);
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({3, 8, 2}, rng);

  auto zero_p = p;
  zero_p.projection = Tensor<double>::zeros({2, 8});
  auto z = embed(x, zero_p);
  for (std::size_t n = 0; n < 3; ++n) check_close(as_mat(p.positional), z, n, 0.0);

  auto zero_e = p;
  zero_e.positional = Tensor<double>::zeros({8, 8});
  auto onehot = Tensor<double>::zeros({1, 8, 2});
  for (std::size_t t = 0; t < 8; ++t) onehot.mutable_data()[t * 2 + 1] = 1.0;
  auto picked = embed(onehot, zero_e);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t d = 0; d < 8; ++d) CHECK(picked.data()[t * 8 + d] == p.projection.data()[8 + d]);

  z = embed(x, p);
  for (std::size_t n = 0; n < 3; ++n) {
    Mat expected = mm(item(x, n), as_mat(p.projection));
    const Mat e = as_mat(p.positional);
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t d = 0; d < 8; ++d) expected[t][d] += e[t][d];
    check_close(expected, z, n);
  }
  CHECK_THROWS_AS(embed(random_tensor<double>({1, 8, 3}, rng), p), DimensionError);
}

TEST_CASE("single head attention") {
  std::mt19937_64 rng(4);
  HeadParams<double> h{random_tensor<double>({4, 2}, rng), random_tensor<double>({4, 2}, rng),
                       random_tensor<double>({4, 3}, rng)};

  auto one = random_tensor<double>({2, 1, 4}, rng);
  Tensor<double> w;
  auto out = single_head_attention(one, h, &w);
  for (double v : w.data()) CHECK(v == doctest::Approx(1.0));
  for (std::size_t n = 0; n < 2; ++n) check_close(mm(item(one, n), as_mat(h.w_value)), out, n);

  auto z = random_tensor<double>({2, 3, 4}, rng);
  auto uniform = h;
  uniform.w_query = Tensor<double>::zeros({4, 2});
  out = single_head_attention(z, uniform);
  for (std::size_t n = 0; n < 2; ++n) {
    const Mat v = mm(item(z, n), as_mat(h.w_value));
    Mat expected(3, std::vector<double>(3, 0.0));
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t s = 0; s < 3; ++s) expected[t][c] += v[s][c] / 3.0;
    check_close(expected, out, n);
  }

  out = single_head_attention(z, h, &w);
  for (std::size_t n = 0; n < 2; ++n) {
    Mat weights;
    check_close(ref_head(item(z, n), h, &weights), out, n);
    check_close(weights, w, n);
  }
}

TEST_CASE("multi head attention") {
  auto c = tiny_config();
  auto p = init_params<double>(c);
  jitter(p, 5);
  std::mt19937_64 rng(6);
  auto z = random_tensor<double>({2, 8, 8}, rng);
  auto& layer = p.layers[0];
  auto out = multi_head_attention(z, layer);
  for (std::size_t n = 0; n < 2; ++n) check_close(ref_mha(item(z, n), layer), out, n);

  auto zero = layer;
  zero.w_aggregate = Tensor<double>::zeros({8, 8});
  const auto zeroed = multi_head_attention(z, zero);
  for (double v : zeroed.data()) CHECK(v == 0.0);

  // one head whose W_A embeds its D_v outputs into the first D_v features
  LayerParams<double> single = layer;
  single.heads.resize(1);
  single.w_aggregate = Tensor<double>::zeros({4, 8});
  for (std::size_t i = 0; i < 4; ++i) single.w_aggregate.mutable_data()[i * 8 + i] = 1.0;
  out = multi_head_attention(z, single);
  auto head_out = single_head_attention(z, single.heads[0]);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t d = 0; d < 8; ++d) {
        const double expected = d < 4 ? head_out.data()[(n * 8 + t) * 4 + d] : 0.0;
        CHECK(std::abs(out.data()[(n * 8 + t) * 8 + d] - expected) < 1e-12);
      }
}

TEST_CASE("transformer layer") {
  auto c = tiny_config();
  auto p = init_params<double>(c);
  jitter(p, 7);
  std::mt19937_64 rng(8);
  auto z = random_tensor<double>({3, 8, 8}, rng);
  ForwardOptions training;
  training.training = true;

  auto layer = p.layers[0];
  auto out = transformer_layer(z, layer, 0.0, training);
  CHECK(out.shape() == z.shape());
  std::vector<Mat> zs;
  for (std::size_t n = 0; n < 3; ++n) zs.push_back(item(z, n));
  const auto expected = ref_layer(zs, p.layers[0]);
  for (std::size_t n = 0; n < 3; ++n) check_close(expected[n], out, n, 1e-9);

  // residual path only: zero weights, unit gain, zero bias
  auto bare = init_params<double>(c).layers[0];
  bare.w_aggregate = Tensor<double>::zeros({8, 8});
  bare.ffn_w2 = Tensor<double>::zeros({16, 8});
  out = transformer_layer(z, bare, 0.0, training);
  std::vector<Mat> normed = zs;
  ref_norm(normed, bare.norm1_gain, bare.norm1_bias);
  ref_norm(normed, bare.norm2_gain, bare.norm2_bias);
  for (std::size_t n = 0; n < 3; ++n) check_close(normed[n], out, n, 1e-6);
}

TEST_CASE("forward output, attention rows and determinism") {
  ModelConfig c;
  c.window_length = 32;
  c.latent_width = 16;
  c.heads = 4;
  c.query_width = 4;
  c.value_width = 4;
  c.ffn_width = 32;
  c.seed = 9;
  auto p = init_params<float>(c);
  auto zeros = Tensor<float>::zeros({2, 32, 4});
  auto r0 = infer(zeros, p);
  CHECK(r0.reconstruction.shape() == Shape{2, 32, 4});
  for (float v : r0.reconstruction.data()) CHECK(std::isfinite(v));

  std::mt19937_64 rng(10);
  auto x = random_tensor<float>({3, 32, 4}, rng, -3, 3);
  auto a = infer(x, p, true);
  auto b = infer(x, p, true);
  CHECK(std::equal(a.reconstruction.data().begin(), a.reconstruction.data().end(), b.reconstruction.data().begin()));
  REQUIRE(a.attention.size() == 3);
  for (const auto& att : a.attention) {
    CHECK(att.shape() == Shape{3, 4, 32, 32});
    for (std::size_t row = 0; row < att.size() / 32; ++row) {
      double s = 0;
      for (std::size_t j = 0; j < 32; ++j) {
        CHECK(att.data()[row * 32 + j] >= 0.0f);
        s += att.data()[row * 32 + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  CHECK(infer(x, p).attention.empty());
}

TEST_CASE("forward is equivariant to batch permutations") {
  auto c = tiny_config();
  c.dropout_rate = 0.1;
  auto p = init_params<double>(c);
  jitter(p, 11);
  std::mt19937_64 rng(12);
  auto x = random_tensor<double>({5, 8, 2}, rng);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted(x.size());
  const std::size_t w = 16;
  for (std::size_t n = 0; n < 5; ++n) std::copy_n(x.data().begin() + perm[n] * w, w, permuted.begin() + n * w);
  auto xp = Tensor<double>({5, 8, 2}, permuted);

  for (bool training : {false, true}) {
    ForwardOptions opt;
    opt.training = training;
    opt.update_norm_statistics = false;
    // Dropout masks follow batch position, so compare with dropout off.
    auto q = p;
    q.config.dropout_rate = 0.0;
    auto y = forward(x, q, opt).reconstruction;
    auto yp = forward(xp, q, opt).reconstruction;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t i = 0; i < w; ++i) CHECK(std::abs(yp.data()[n * w + i] - y.data()[perm[n] * w + i]) < 1e-12);
  }
}

TEST_CASE("full forward plus masked loss passes gradient check on the tiny config") {
  auto c = tiny_config();
  auto p = init_params<double>(c);
  jitter(p, 13);
  std::mt19937_64 rng(14);
  auto x = random_tensor<double>({2, 8, 2}, rng);
  std::vector<std::uint8_t> mask(x.size());
  std::bernoulli_distribution coin(0.4);
  for (auto& m : mask) m = coin(rng);
  mask[0] = 1;
  ForwardOptions opt;
  opt.training = true;
  opt.update_norm_statistics = false;
  auto objective = [&] {
    auto masked = x.detach();
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) masked.mutable_data()[i] = 0.0;
    return masked_mse(forward(masked, p, opt).reconstruction, x, mask);
  };
  auto report = gradient_check(objective, p.named_parameters(), 1e-4);
  CHECK(report.entries.size() == p.named_parameters().size());
  for (const auto& e : report.entries) {
    INFO(e.name << " rel " << e.max_rel_error);
    CHECK(e.passed);
  }
}

TEST_CASE("precision conversion preserves values") {
  auto p = init_params<float>(tiny_config());
  auto d = convert_params<double>(p);
  auto back = convert_params<float>(d);
  auto a = p.named_parameters(), b = back.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
}
