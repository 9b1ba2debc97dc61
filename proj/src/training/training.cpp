#include "mvts/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mvts/error.hpp"
#include "mvts/hash.hpp"
#include "mvts/kernels.hpp"
#include "mvts/ops.hpp"
#include "mvts/threads.hpp"

namespace mvts {

namespace {
constexpr std::uint64_t kMaskStream = 0x4D41534B;
constexpr std::uint64_t kValidationStream = 0x56414C;
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kDropoutStream = 0x44524F50;
}  // namespace

void TrainConfig::validate() const {
  mask.validate();
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (!(learning_rate > 0.0) && !frozen) throw ParameterError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ParameterError("optimizer betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ParameterError("optimizer epsilon must be > 0");
  if (patience < 1) throw ParameterError("patience must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"mask",
       {{"strategy", to_string(mask.strategy)},
        {"ratio", mask.ratio},
        {"mean_masked_run", mask.mean_masked_run},
        {"mean_unmasked_run", mask.mean_unmasked_run()}}},
      {"batch_size", batch_size},
      {"max_epochs", max_epochs},
      {"learning_rate", learning_rate},
      {"beta1", beta1},
      {"beta2", beta2},
      {"epsilon", epsilon},
      {"patience", patience},
      {"seed", seed},
      {"precision", precision == Precision::f32 ? "f32" : "f64"},
      {"frozen", frozen},
  };
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return {{"epochs", epochs_json},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"stop_reason", stop_reason},
          {"wall_seconds", wall_seconds}};
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"window_length", c.window_length}, {"channels", c.channels}, {"latent_width", c.latent_width},
          {"heads", c.heads},                 {"query_width", c.query_width}, {"value_width", c.value_width},
          {"layers", c.layers},               {"ffn_width", c.ffn_width},     {"dropout_rate", c.dropout_rate},
          {"seed", c.seed},                   {"parameter_count", parameter_count(c)}};
}

std::uint64_t training_mask_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t window_index) {
  return derive_seed(derive_seed(run_seed, kMaskStream), epoch, window_index);
}

std::uint64_t validation_mask_seed(std::uint64_t run_seed, std::size_t window_index) {
  return derive_seed(run_seed, kValidationStream, window_index);
}

double masked_mse_value(std::span<const float> x, std::span<const float> x_hat, std::span<const std::uint8_t> mask) {
  if (x.size() != x_hat.size() || x.size() != mask.size()) {
    throw DimensionError("masked_mse: window, reconstruction and mask sizes differ");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(x[i]) - static_cast<double>(x_hat[i]);
    total += d * d;
    ++count;
  }
  if (count == 0) throw Error(ErrorCategory::runtime, "masked_mse: mask selects no cells");
  return total / static_cast<double>(count);
}

namespace {

template <class Real>
struct Batch {
  Tensor<Real> input;   // masked
  Tensor<Real> target;  // original
  std::vector<std::uint8_t> mask;
};

template <class Real>
Batch<Real> assemble(const WindowSet& ws, std::span<const std::size_t> indices, const MaskSpec& spec,
                     const std::function<std::uint64_t(std::size_t)>& seed_for) {
  const std::size_t cells = ws.window_size();
  Batch<Real> batch;
  std::vector<Real> input(indices.size() * cells), target(indices.size() * cells);
  batch.mask.resize(indices.size() * cells);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::mt19937_64 rng(seed_for(indices[b]));
    const Mask mask = draw_mask(ws.length, ws.channels, spec, rng);
    const auto window = ws.window(indices[b]);
    for (std::size_t i = 0; i < cells; ++i) {
      target[b * cells + i] = Real(window[i]);
      input[b * cells + i] = mask.bits[i] ? Real(0) : Real(window[i]);
      batch.mask[b * cells + i] = mask.bits[i];
    }
  }
  const Shape shape{indices.size(), ws.length, ws.channels};
  batch.input = Tensor<Real>(shape, std::move(input));
  batch.target = Tensor<Real>(shape, std::move(target));
  return batch;
}

template <class Real>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor<Real>>> params, const TrainConfig& config)
      : params_(std::move(params)), config_(config) {
    for (const auto& [name, t] : params_) {
      first_.emplace_back(t.size(), 0.0);
      second_.emplace_back(t.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& t = params_[k].second;
      if (!t.has_grad()) continue;
      auto values = t.mutable_data();
      const auto grad = t.grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grad[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        values[i] = Real(values[i] - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> params_;
  TrainConfig config_;
  std::vector<std::vector<double>> first_, second_;
  std::size_t steps_ = 0;
};

template <class Real>
ModelParams<Real> snapshot(const ModelParams<Real>& params) {
  return convert_params<Real, Real>(params);
}

template <class Real>
TrainResult train_impl(const WindowSet& ws, const ModelConfig& model_config, const TrainConfig& config,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::size_t> train_idx = ws.indices(Split::train);
  for (std::size_t i : train_idx) {
    if (ws.labels[i] != 0) {
      throw ParameterError("training split contains anomalous window " + std::to_string(i) +
                           "; unsupervised training accepts label-0 windows only");
    }
  }
  const std::vector<std::size_t> val_idx = ws.indices(Split::val, 0);
  if (train_idx.empty()) throw ParameterError("training split is empty");
  if (val_idx.empty()) throw ParameterError("validation split has no label-0 windows");

  ModelParams<Real> params = init_params<Real>(model_config);
  Adam<Real> optimizer(params.named_parameters(), config);
  ModelParams<Real> best = snapshot(params);

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  report.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    std::mt19937_64 dropout_rng(derive_seed(config.seed, kDropoutStream, epoch));

    double epoch_sq = 0.0;
    std::size_t epoch_cells = 0;
    for (std::size_t begin = 0; begin < train_idx.size(); begin += config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), begin + config.batch_size);
      const std::span<const std::size_t> chunk(train_idx.data() + begin, end - begin);
      auto batch = assemble<Real>(ws, chunk, config.mask,
                                  [&](std::size_t w) { return training_mask_seed(config.seed, epoch, w); });
      ForwardOptions options;
      options.training = true;
      options.rng = &dropout_rng;
      options.update_norm_statistics = !config.frozen;
      auto result = forward(batch.input, params, options);
      auto loss = masked_mse(result.reconstruction, batch.target, batch.mask);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw Error(ErrorCategory::runtime, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                ", batch starting " + std::to_string(begin));
      }
      const std::size_t masked = static_cast<std::size_t>(
          std::count_if(batch.mask.begin(), batch.mask.end(), [](auto b) { return b != 0; }));
      epoch_sq += value * static_cast<double>(masked);
      epoch_cells += masked;
      if (!config.frozen) {
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
      }
    }

    EpochRecord record{epoch, epoch_sq / static_cast<double>(epoch_cells),
                       validation_loss(params, ws, val_idx, config)};
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_loss < report.best_val_loss) {
      report.best_val_loss = record.val_loss;
      report.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else if (++stale >= config.patience) {
      report.stop_reason = "early_stop";
      break;
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  TrainResult out;
  if constexpr (std::is_same_v<Real, float>) {
    out.params = std::move(best);
  } else {
    out.params = convert_params<float, Real>(best);
  }
  out.report = std::move(report);
  return out;
}

}  // namespace

template <class Real>
double validation_loss(ModelParams<Real>& params, const WindowSet& ws, std::span<const std::size_t> indices,
                       const TrainConfig& config) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t cells = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += config.batch_size) {
    const std::size_t end = std::min(indices.size(), begin + config.batch_size);
    auto batch = assemble<Real>(ws, indices.subspan(begin, end - begin), config.mask,
                                [&](std::size_t w) { return validation_mask_seed(config.seed, w); });
    auto recon = forward(batch.input, params, ForwardOptions{}).reconstruction;
    for (std::size_t i = 0; i < batch.mask.size(); ++i) {
      if (!batch.mask[i]) continue;
      const double d = static_cast<double>(recon.data()[i]) - static_cast<double>(batch.target.data()[i]);
      total += d * d;
      ++cells;
    }
  }
  if (cells == 0) throw Error(ErrorCategory::runtime, "validation: no masked cells");
  return total / static_cast<double>(cells);
}

template double validation_loss(ModelParams<float>&, const WindowSet&, std::span<const std::size_t>,
                                const TrainConfig&);
template double validation_loss(ModelParams<double>&, const WindowSet&, std::span<const std::size_t>,
                                const TrainConfig&);

TrainResult train(const WindowSet& windows, const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  model_config.validate();
  config.validate();
  if (windows.length != model_config.window_length || windows.channels != model_config.channels) {
    throw ParameterError("windows are " + std::to_string(windows.length) + "x" + std::to_string(windows.channels) +
                         " but the model expects " + std::to_string(model_config.window_length) + "x" +
                         std::to_string(model_config.channels));
  }
  return config.precision == Precision::f32 ? train_impl<float>(windows, model_config, config, on_epoch)
                                            : train_impl<double>(windows, model_config, config, on_epoch);
}

nlohmann::json run_manifest(const ModelConfig& model_config, const TrainConfig& config, const TrainReport& report,
                            const std::string& checkpoint_sha256) {
  return {{"model", to_json(model_config)},
          {"train", config.to_json()},
          {"seed", config.seed},
          {"threads", 1},
          {"available_threads", worker_threads()},
          {"kernel_isa", std::string(kernels::isa_name(kernels::active_isa()))},
          {"report", report.to_json()},
          {"checkpoint_sha256", checkpoint_sha256}};
}

GradCheckReport masked_loss_gradient_check(ModelConfig config, std::uint64_t seed, double tolerance,
                                           std::size_t batch) {
  config.dropout_rate = 0.0;
  config.validate();
  auto params = init_params<double>(config);
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (auto& [name, t] : params.named_parameters())
    for (auto& v : const_cast<Tensor<double>&>(t).mutable_data()) v += jitter(rng);

  const std::size_t cells = batch * config.window_length * config.channels;
  std::normal_distribution<double> normal;
  std::vector<double> values(cells);
  for (auto& v : values) v = normal(rng);
  const Tensor<double> x({batch, config.window_length, config.channels}, values);
  std::vector<std::uint8_t> mask(cells);
  std::bernoulli_distribution coin(0.4);
  for (auto& m : mask) m = coin(rng);
  mask[0] = 1;
  std::vector<double> masked_values = values;
  for (std::size_t i = 0; i < cells; ++i)
    if (mask[i]) masked_values[i] = 0.0;
  const Tensor<double> masked({batch, config.window_length, config.channels}, masked_values);

  ForwardOptions options;
  options.training = true;
  options.update_norm_statistics = false;
  auto objective = [&] { return masked_mse(forward(masked, params, options).reconstruction, x, mask); };
  return gradient_check(objective, params.named_parameters(), tolerance);
}

}  // namespace mvts
