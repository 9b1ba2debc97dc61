#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mvts/binary_io.hpp"
#include "mvts/checkpoint.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"
#include "mvts/hash.hpp"
#include "mvts/training.hpp"

using namespace mvts;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(std::uint64_t seed = 1) {
  ModelConfig c;
  c.window_length = 16;
  c.channels = 2;
  c.latent_width = 8;
  c.heads = 2;
  c.query_width = 4;
  c.value_width = 4;
  c.layers = 1;
  c.ffn_width = 16;
  c.seed = seed;
  return c;
}

WindowSet tiny_windows(std::size_t normal = 200, std::size_t anomalous = 0) {
  SynthConfig sc;
  sc.normal_segments = normal;
  sc.anomalous_segments = anomalous;
  sc.segment_length = 16;
  sc.channels = 2;
  sc.seed = 11;
  PreprocessConfig pc;
  pc.window_length = 16;
  pc.apply_filter = false;
  pc.seed = 11;
  return preprocess(synth_generate(sc), pc);
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig tc;
  tc.seed = 3;
  tc.max_epochs = epochs;
  tc.batch_size = 16;
  return tc;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mvts_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("masked_mse_value") {
  const std::vector<float> x{1, 2, 3, 4}, y{1.5f, 0, 3, 10};
  CHECK(masked_mse_value(x, y, std::vector<std::uint8_t>{1, 1, 0, 0}) == doctest::Approx((0.25 + 4.0) / 2));
  CHECK(masked_mse_value(x, y, std::vector<std::uint8_t>{0, 0, 1, 0}) == 0.0);
  CHECK(masked_mse_value(x, y, std::vector<std::uint8_t>{1, 1, 1, 1}) == doctest::Approx((0.25 + 4 + 0 + 36) / 4.0));
  CHECK_THROWS(masked_mse_value(x, y, std::vector<std::uint8_t>{0, 0, 0, 0}));
  CHECK_THROWS_AS(masked_mse_value(x, y, std::vector<std::uint8_t>{1, 0}), DimensionError);
}

TEST_CASE("training loss decreases over the first epochs") {
  const auto ws = tiny_windows();
  const auto result = train(ws, tiny_model(), tiny_train(5));
  const auto& e = result.report.epochs;
  REQUIRE(e.size() == 5);
  CHECK(e[1].train_loss < e[0].train_loss);
  CHECK(e[2].train_loss < e[1].train_loss);
  // the returned parameters are those of the best validation epoch
  const auto best = std::min_element(e.begin(), e.end(), [](auto& a, auto& b) { return a.val_loss < b.val_loss; });
  CHECK(result.report.best_epoch == best->epoch);
  CHECK(result.report.best_val_loss == best->val_loss);
  auto params = result.params;
  const auto val = ws.indices(Split::val);
  CHECK(validation_loss(params, ws, val, tiny_train(5)) == doctest::Approx(best->val_loss).epsilon(1e-9));
}

TEST_CASE("frozen training stops after patience non-improving epochs") {
  const auto ws = tiny_windows(60);
  auto tc = tiny_train(50);
  tc.patience = 2;
  tc.frozen = true;
  tc.learning_rate = 0.0;
  const auto result = train(ws, tiny_model(), tc);
  CHECK(result.report.epochs.size() == 3);
  CHECK(result.report.best_epoch == 1);
  CHECK(result.report.stop_reason == "early_stop");
  const auto initial = init_params<float>(tiny_model());
  const auto a = result.params.named_parameters(), b = initial.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
}

TEST_CASE("same seed gives byte-identical checkpoints") {
  const auto ws = tiny_windows(60);
  const auto a = serialize_checkpoint(train(ws, tiny_model(), tiny_train(2)).params);
  const auto b = serialize_checkpoint(train(ws, tiny_model(), tiny_train(2)).params);
  CHECK(sha256_hex(a) == sha256_hex(b));
  auto other = tiny_train(2);
  other.seed = 4;
  CHECK(sha256_hex(serialize_checkpoint(train(ws, tiny_model(), other).params)) != sha256_hex(a));
}

TEST_CASE("training refuses anomalous training windows") {
  auto ws = tiny_windows(60, 10);
  CHECK_NOTHROW(train(ws, tiny_model(), tiny_train(1)));
  const auto anomalous = std::find(ws.labels.begin(), ws.labels.end(), 1) - ws.labels.begin();
  ws.splits[std::size_t(anomalous)] = Split::train;
  CHECK_THROWS_WITH_AS(train(ws, tiny_model(), tiny_train(1)), doctest::Contains("anomalous"), ParameterError);

  auto wrong = tiny_model();
  wrong.window_length = 32;
  CHECK_THROWS_AS(train(tiny_windows(60), wrong, tiny_train(1)), ParameterError);
  auto bad = tiny_train(1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(tiny_windows(60), tiny_model(), bad), ParameterError);
}

TEST_CASE("checkpoint round trip and rejection") {
  auto params = init_params<float>(tiny_model(7));
  std::mt19937_64 rng(2);
  std::normal_distribution<float> d;
  for (auto& [name, buf] : params.named_buffers())
    for (auto& v : *buf) v = d(rng);
  const auto dir = scratch("ckpt");
  save_checkpoint(params, dir / "a.ckpt");
  auto back = load_checkpoint(dir / "a.ckpt", tiny_model(7));
  CHECK(back.config == params.config);
  const auto a = params.named_parameters(), b = back.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.shape() == b[i].second.shape());
    CHECK(std::memcmp(a[i].second.data().data(), b[i].second.data().data(), a[i].second.size() * sizeof(float)) == 0);
  }
  auto ba = params.named_buffers(), bb = back.named_buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].second == *bb[i].second);
  CHECK(serialize_checkpoint(back) == read_file_bytes(dir / "a.ckpt"));

  const auto bytes = read_file_bytes(dir / "a.ckpt");
  auto expect_rejected = [&](std::vector<unsigned char> b, const std::string& needle,
                             const std::optional<ModelConfig>& expected = std::nullopt) {
    std::ofstream(dir / "bad.ckpt", std::ios::binary).write(reinterpret_cast<const char*>(b.data()), b.size());
    try {
      load_checkpoint(dir / "bad.ckpt", expected);
      FAIL("accepted a malformed checkpoint: " << needle);
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  auto magic = bytes;
  magic[1] = 'X';
  expect_rejected(magic, "offset 0");
  auto version = bytes;
  version[4] = 2;
  expect_rejected(version, "version");
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  expect_rejected(truncated, "offset");
  auto trailing = bytes;
  trailing.push_back(0);
  expect_rejected(trailing, "offset");
  auto deeper = tiny_model(7);
  deeper.layers = 2;
  expect_rejected(bytes, "config mismatch", deeper);
  CHECK_NOTHROW(load_checkpoint(dir / "a.ckpt", tiny_model(8)));  // seed is not architecture
  fs::remove_all(dir);
}
