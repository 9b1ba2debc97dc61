#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/gradcheck.hpp"
#include "mvts/masking.hpp"
#include "mvts/model.hpp"

namespace mvts {

enum class Precision { f32, f64 };

struct TrainConfig {
  MaskSpec mask;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  // Diagnostic: skip every parameter and running-statistic update.
  bool frozen = false;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::string stop_reason;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  ModelParams<float> params;
  TrainReport report;
};

/// Seed streams for per-window dynamic masks and other per-epoch randomness.
std::uint64_t training_mask_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t window_index);
std::uint64_t validation_mask_seed(std::uint64_t run_seed, std::size_t window_index);

/// Scalar masked MSE of one window (or batch): Σ over masked cells of
/// (x − x̂)² / |masked cells|.
double masked_mse_value(std::span<const float> x, std::span<const float> x_hat, std::span<const std::uint8_t> mask);

/// Validation loss pooled over all masked cells of the listed windows, in
/// inference mode with masks from validation_mask_seed.
template <class Real>
double validation_loss(ModelParams<Real>& params, const WindowSet& windows, std::span<const std::size_t> indices,
                       const TrainConfig& config);

/// Masked-reconstruction training on the label-0 train split, selecting the
/// parameters with the lowest validation loss over label-0 val windows.
/// Throws ParameterError if any train-split window has label 1.
TrainResult train(const WindowSet& windows, const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Configs, seed, threads, ISA, per-epoch losses and the checkpoint hash.
nlohmann::json run_manifest(const ModelConfig& model_config, const TrainConfig& config, const TrainReport& report,
                            const std::string& checkpoint_sha256);

nlohmann::json to_json(const ModelConfig& config);

/// Reverse-mode gradients of the masked loss for every parameter tensor
/// against central differences, in 64-bit with dropout off. Parameters are
/// jittered away from their initial values so gains and biases are generic.
GradCheckReport masked_loss_gradient_check(ModelConfig config, std::uint64_t seed, double tolerance = 1e-4,
                                           std::size_t batch = 2);

}  // namespace mvts
