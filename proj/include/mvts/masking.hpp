#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mvts/tensor.hpp"

namespace mvts {

enum class MaskStrategy { geometric, bernoulli };

std::string to_string(MaskStrategy strategy);
MaskStrategy parse_mask_strategy(const std::string& name);

struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::geometric;
  double ratio = 0.15;            // r
  double mean_masked_run = 3.0;   // l_m (geometric only)
  std::uint64_t seed = 0;

  /// l_u = (1 − r)/r · l_m
  double mean_unmasked_run() const;
  void validate() const;
};

/// T×M booleans, row-major by time; nonzero = masked.
struct Mask {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> bits;

  bool at(std::size_t t, std::size_t m) const { return bits[t * channels + m] != 0; }
  std::size_t masked_count() const;
};

struct MaskStats {
  double masked_fraction = 0.0;
  double mean_masked_run = 0.0;
  double mean_unmasked_run = 0.0;
  std::size_t masked_runs = 0;
  std::size_t unmasked_runs = 0;
};

/// Run statistics per channel (runs truncated by the window edge included).
MaskStats mask_stats(const Mask& mask);

/// Number of redraws before an all-unmasked result is repaired by forcing a
/// single random cell.
inline constexpr int kMaskRedraws = 16;

Mask geometric_mask(std::size_t length, std::size_t channels, const MaskSpec& spec, std::mt19937_64& rng);
Mask bernoulli_mask(std::size_t length, std::size_t channels, double ratio, std::mt19937_64& rng);

/// Dispatch on spec.strategy.
Mask draw_mask(std::size_t length, std::size_t channels, const MaskSpec& spec, std::mt19937_64& rng);

/// Masked cells zeroed; input untouched.
template <class Real>
Tensor<Real> apply_mask(const Tensor<Real>& x, const Mask& mask);

template <class Real>
void apply_mask_into(std::span<const Real> x, const Mask& mask, std::span<Real> out);

}  // namespace mvts
