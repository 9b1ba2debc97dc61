#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"
#include "mvts/hash.hpp"

namespace mvts {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNoiseSigma = 0.3;

// One cycle of a spike-and-slow-wave complex, phase in [0, 1): a narrow
// positive spike followed by a broad negative wave. The wave carries most of
// the energy so the fundamental dominates the harmonics.
double spike_wave(double phase) {
  const double spike = std::exp(-std::pow((phase - 0.12) / 0.06, 2.0));
  const double wave = phase >= 0.25 ? -1.5 * std::sin(std::numbers::pi * (phase - 0.25) / 0.75) : 0.0;
  return spike + wave;
}

// Returns the largest component amplitude.
double add_background(Recording& rec, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> component_count(2, 3);
  std::uniform_real_distribution<double> freq(8.0, 14.0);
  std::uniform_real_distribution<double> amplitude(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::uniform_real_distribution<double> drift_depth(0.0, 0.5);
  std::uniform_real_distribution<double> drift_rate(0.1, 0.5);
  std::normal_distribution<double> noise(0.0, kNoiseSigma);

  const int components = component_count(rng);
  std::vector<double> freqs, amps;
  for (int k = 0; k < components; ++k) {
    freqs.push_back(freq(rng));
    amps.push_back(amplitude(rng));
  }
  const std::size_t channels = rec.channel_count;
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> offsets;
    for (int k = 0; k < components; ++k) offsets.push_back(phase(rng));
    const double depth = drift_depth(rng);
    const double rate = drift_rate(rng);
    const double drift_phase = phase(rng);
    for (std::size_t t = 0; t < rec.length(); ++t) {
      const double time = static_cast<double>(t) / rec.sampling_rate_hz;
      const double drift = depth * std::sin(kTwoPi * rate * time + drift_phase);
      double v = 0.0;
      for (int k = 0; k < components; ++k) v += amps[k] * std::sin(kTwoPi * freqs[k] * time + offsets[k] + drift);
      rec.samples[t * channels + c] = v + noise(rng);
    }
  }
  return *std::max_element(amps.begin(), amps.end());
}

void add_discharge(Recording& rec, double background_amp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(3.0, 5.0);
  std::uniform_real_distribution<double> amplitude(2.0, 4.0);
  std::uniform_real_distribution<double> channel_gain(0.85, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> lag(0.0, 0.05);

  const double f = freq(rng);
  const double amp = amplitude(rng) * background_amp;
  const double start_phase = unit(rng);
  const std::size_t channels = rec.channel_count;
  for (std::size_t c = 0; c < channels; ++c) {
    const double gain = amp * channel_gain(rng);
    const double channel_lag = lag(rng);
    for (std::size_t t = 0; t < rec.length(); ++t) {
      const double time = static_cast<double>(t) / rec.sampling_rate_hz;
      double cycle = f * time + start_phase - channel_lag;
      cycle -= std::floor(cycle);
      rec.samples[t * channels + c] += gain * spike_wave(cycle);
    }
  }
}

}  // namespace

std::vector<Recording> synth_generate(const SynthConfig& config) {
  if (config.segment_length == 0 || config.channels == 0 || !(config.rate_hz > 0.0)) {
    throw ParameterError("synth: segment length, channels and rate must be positive");
  }
  const std::size_t total = config.normal_segments + config.anomalous_segments;
  std::vector<std::uint8_t> kinds(total, 0);
  std::fill(kinds.begin() + static_cast<std::ptrdiff_t>(config.normal_segments), kinds.end(), 1);
  std::mt19937_64 order_rng(derive_seed(config.seed, 0xA11CE));
  std::shuffle(kinds.begin(), kinds.end(), order_rng);

  std::vector<Recording> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, i + 1));
    Recording rec;
    char id[32];
    std::snprintf(id, sizeof id, "seg%06zu", i);
    rec.id = id;
    rec.channel_count = config.channels;
    rec.sampling_rate_hz = config.rate_hz;
    rec.samples.assign(config.segment_length * config.channels, 0.0);
    for (std::size_t c = 0; c < config.channels; ++c) rec.channel_names.push_back("ch" + std::to_string(c));
    const double background_amp = add_background(rec, rng);
    if (kinds[i]) {
      add_discharge(rec, background_amp, rng);
      rec.anomaly_intervals.push_back({0.0, rec.duration_s()});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mvts
