#include "mvts/masking.hpp"

#include <algorithm>
#include <cmath>

#include "mvts/error.hpp"

namespace mvts {

std::string to_string(MaskStrategy strategy) {
  return strategy == MaskStrategy::geometric ? "geometric" : "bernoulli";
}

MaskStrategy parse_mask_strategy(const std::string& name) {
  if (name == "geometric") return MaskStrategy::geometric;
  if (name == "bernoulli") return MaskStrategy::bernoulli;
  throw ParameterError("unknown mask strategy '" + name + "' (expected geometric or bernoulli)");
}

double MaskSpec::mean_unmasked_run() const { return (1.0 - ratio) / ratio * mean_masked_run; }

void MaskSpec::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  if (strategy == MaskStrategy::geometric) {
    if (!(mean_masked_run >= 1.0)) {
      throw ParameterError("mean masked run length must be >= 1, got " + std::to_string(mean_masked_run));
    }
    if (mean_unmasked_run() < 1.0) {
      throw ParameterError("mask ratio " + std::to_string(ratio) + " with mean masked run " +
                           std::to_string(mean_masked_run) + " implies a mean unmasked run below 1");
    }
  }
}

std::size_t Mask::masked_count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

MaskStats mask_stats(const Mask& mask) {
  MaskStats stats;
  if (mask.bits.empty()) return stats;
  std::size_t masked_cells = 0, masked_total = 0, unmasked_total = 0;
  for (std::size_t m = 0; m < mask.channels; ++m) {
    std::size_t t = 0;
    while (t < mask.length) {
      const bool state = mask.at(t, m);
      std::size_t run = 0;
      while (t < mask.length && mask.at(t, m) == state) {
        ++run;
        ++t;
      }
      if (state) {
        masked_cells += run;
        masked_total += run;
        ++stats.masked_runs;
      } else {
        unmasked_total += run;
        ++stats.unmasked_runs;
      }
    }
  }
  stats.masked_fraction = static_cast<double>(masked_cells) / static_cast<double>(mask.bits.size());
  if (stats.masked_runs) stats.mean_masked_run = static_cast<double>(masked_total) / stats.masked_runs;
  if (stats.unmasked_runs) stats.mean_unmasked_run = static_cast<double>(unmasked_total) / stats.unmasked_runs;
  return stats;
}

namespace {

void fill_geometric(Mask& mask, const MaskSpec& spec, std::mt19937_64& rng) {
  // Geometric on {1, 2, ...}: 1 + failures before the first success.
  std::geometric_distribution<std::size_t> masked_run(1.0 / spec.mean_masked_run);
  std::geometric_distribution<std::size_t> unmasked_run(1.0 / spec.mean_unmasked_run());
  std::bernoulli_distribution start_masked(spec.ratio);
  for (std::size_t m = 0; m < mask.channels; ++m) {
    bool masked = start_masked(rng);
    std::size_t t = 0;
    while (t < mask.length) {
      const std::size_t run = 1 + (masked ? masked_run(rng) : unmasked_run(rng));
      const std::size_t end = std::min(mask.length, t + run);
      for (; t < end; ++t) mask.bits[t * mask.channels + m] = masked ? 1 : 0;
      masked = !masked;
    }
  }
}

void fill_bernoulli(Mask& mask, double ratio, std::mt19937_64& rng) {
  std::bernoulli_distribution masked(ratio);
  for (auto& b : mask.bits) b = masked(rng) ? 1 : 0;
}

template <class Fill>
Mask draw_nonempty(std::size_t length, std::size_t channels, std::mt19937_64& rng, Fill&& fill) {
  if (length == 0 || channels == 0) throw ParameterError("mask dimensions must be >= 1");
  Mask mask{length, channels, std::vector<std::uint8_t>(length * channels, 0)};
  for (int attempt = 0; attempt < kMaskRedraws; ++attempt) {
    fill(mask);
    if (mask.masked_count() > 0) return mask;
  }
  std::uniform_int_distribution<std::size_t> cell(0, mask.bits.size() - 1);
  mask.bits[cell(rng)] = 1;
  return mask;
}

}  // namespace

Mask geometric_mask(std::size_t length, std::size_t channels, const MaskSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  return draw_nonempty(length, channels, rng, [&](Mask& m) { fill_geometric(m, spec, rng); });
}

Mask bernoulli_mask(std::size_t length, std::size_t channels, double ratio, std::mt19937_64& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  return draw_nonempty(length, channels, rng, [&](Mask& m) { fill_bernoulli(m, ratio, rng); });
}

Mask draw_mask(std::size_t length, std::size_t channels, const MaskSpec& spec, std::mt19937_64& rng) {
  return spec.strategy == MaskStrategy::geometric ? geometric_mask(length, channels, spec, rng)
                                                  : bernoulli_mask(length, channels, spec.ratio, rng);
}

template <class Real>
void apply_mask_into(std::span<const Real> x, const Mask& mask, std::span<Real> out) {
  if (x.size() != mask.bits.size() || out.size() != x.size()) {
    throw DimensionError("apply_mask: window of " + std::to_string(x.size()) + " cells vs mask " +
                         std::to_string(mask.length) + "x" + std::to_string(mask.channels));
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mask.bits[i] ? Real(0) : x[i];
}

template <class Real>
Tensor<Real> apply_mask(const Tensor<Real>& x, const Mask& mask) {
  if (x.rank() != 2 || x.dim(0) != mask.length || x.dim(1) != mask.channels) {
    throw DimensionError("apply_mask: tensor " + shape_string(x.shape()) + " vs mask " +
                         std::to_string(mask.length) + "x" + std::to_string(mask.channels));
  }
  std::vector<Real> out(x.size());
  apply_mask_into<Real>(x.data(), mask, out);
  return Tensor<Real>(x.shape(), std::move(out));
}

template Tensor<float> apply_mask(const Tensor<float>&, const Mask&);
template Tensor<double> apply_mask(const Tensor<double>&, const Mask&);
template void apply_mask_into<float>(std::span<const float>, const Mask&, std::span<float>);
template void apply_mask_into<double>(std::span<const double>, const Mask&, std::span<double>);

}  // namespace mvts
