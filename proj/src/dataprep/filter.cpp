#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"

namespace mvts {

void FilterSpec::validate(double rate_hz) const {
  if (order != 4) throw ParameterError("bandpass order must be 4 (2nd-order high-pass + 2nd-order low-pass)");
  const double nyquist = rate_hz / 2.0;
  if (!(low_hz > 0.0 && low_hz < high_hz)) {
    throw ParameterError("bandpass edges must satisfy 0 < low < high, got " + std::to_string(low_hz) + " / " +
                         std::to_string(high_hz));
  }
  if (high_hz >= nyquist) {
    throw ParameterError("bandpass high edge " + std::to_string(high_hz) + " Hz is not below Nyquist " +
                         std::to_string(nyquist) + " Hz");
  }
}

namespace {

// Bilinear transform of the 2nd-order Butterworth prototype with the cutoff
// prewarped; denominators shared between the low- and high-pass forms.
struct Prewarped {
  double k, k2, norm;
};

Prewarped prewarp(double cutoff_hz, double rate_hz) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
  const double k2 = k * k;
  return {k, k2, 1.0 / (1.0 + std::numbers::sqrt2 * k + k2)};
}

double dc_gain(const Biquad& s) { return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2); }

void run_section(const Biquad& s, std::span<double> x, double initial_input) {
  // Steady-state state for a constant input equal to the first sample.
  const double y0 = dc_gain(s) * initial_input;
  double z2 = s.b2 * initial_input - s.a2 * y0;
  double z1 = s.b1 * initial_input - s.a1 * y0 + z2;
  for (double& v : x) {
    const double in = v;
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    v = out;
  }
}

void run_cascade(const Biquad& hp, const Biquad& lp, std::span<double> x) {
  if (x.empty()) return;
  run_section(hp, x, x.front());
  run_section(lp, x, x.front());
}

}  // namespace

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz) {
  const auto p = prewarp(cutoff_hz, rate_hz);
  Biquad s;
  s.b0 = p.k2 * p.norm;
  s.b1 = 2.0 * s.b0;
  s.b2 = s.b0;
  s.a1 = 2.0 * (p.k2 - 1.0) * p.norm;
  s.a2 = (1.0 - std::numbers::sqrt2 * p.k + p.k2) * p.norm;
  return s;
}

Biquad butterworth_highpass(double cutoff_hz, double rate_hz) {
  const auto p = prewarp(cutoff_hz, rate_hz);
  Biquad s;
  s.b0 = p.norm;
  s.b1 = -2.0 * p.norm;
  s.b2 = p.norm;
  s.a1 = 2.0 * (p.k2 - 1.0) * p.norm;
  s.a2 = (1.0 - std::numbers::sqrt2 * p.k + p.k2) * p.norm;
  return s;
}

void filter_channel(const Biquad& section, std::span<double> signal) {
  if (!signal.empty()) run_section(section, signal, 0.0);
}

Recording butterworth_bandpass(const Recording& rec, const FilterSpec& spec) {
  spec.validate(rec.sampling_rate_hz);
  const Biquad hp = butterworth_highpass(spec.low_hz, rec.sampling_rate_hz);
  const Biquad lp = butterworth_lowpass(spec.high_hz, rec.sampling_rate_hz);

  Recording out = rec;
  const std::size_t length = rec.length();
  if (length == 0) return out;
  // Odd extension at both ends, as in the usual forward-backward scheme.
  const std::size_t pad = spec.zero_phase ? std::min<std::size_t>(15, length - 1) : 0;
  std::vector<double> buffer(length + 2 * pad);
  for (std::size_t c = 0; c < rec.channel_count; ++c) {
    const double first = rec.at(0, c);
    const double last = rec.at(length - 1, c);
    for (std::size_t i = 0; i < pad; ++i) buffer[i] = 2.0 * first - rec.at(pad - i, c);
    for (std::size_t t = 0; t < length; ++t) buffer[pad + t] = rec.at(t, c);
    for (std::size_t i = 0; i < pad; ++i) buffer[pad + length + i] = 2.0 * last - rec.at(length - 2 - i, c);

    run_cascade(hp, lp, buffer);
    if (spec.zero_phase) {
      std::reverse(buffer.begin(), buffer.end());
      run_cascade(hp, lp, buffer);
      std::reverse(buffer.begin(), buffer.end());
    }
    for (std::size_t t = 0; t < length; ++t) out.samples[t * rec.channel_count + c] = buffer[pad + t];
  }
  return out;
}

Recording resample(const Recording& rec, double target_hz) {
  if (!(target_hz > 0.0)) throw ParameterError("resample target must be positive");
  if (target_hz > rec.sampling_rate_hz * (1.0 + 1e-12)) {
    throw ParameterError("resample: target " + std::to_string(target_hz) + " Hz exceeds source rate " +
                         std::to_string(rec.sampling_rate_hz) + " Hz (no upsampling)");
  }
  if (std::abs(target_hz - rec.sampling_rate_hz) <= 1e-12 * rec.sampling_rate_hz) return rec;

  const double ratio = rec.sampling_rate_hz / target_hz;
  const double rounded = std::round(ratio);
  const std::size_t length = rec.length();
  const std::size_t channels = rec.channel_count;
  Recording out = rec;
  out.sampling_rate_hz = target_hz;
  out.samples.clear();

  if (std::abs(ratio - rounded) < 1e-9) {
    const auto k = static_cast<std::size_t>(rounded);
    const std::size_t out_length = (length + k - 1) / k;
    out.samples.reserve(out_length * channels);
    for (std::size_t i = 0; i < out_length; ++i)
      for (std::size_t c = 0; c < channels; ++c) out.samples.push_back(rec.at(i * k, c));
    return out;
  }

  if (length == 0) return out;
  const auto out_length = static_cast<std::size_t>(std::floor(static_cast<double>(length - 1) / ratio)) + 1;
  out.samples.reserve(out_length * channels);
  for (std::size_t i = 0; i < out_length; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto left = std::min(static_cast<std::size_t>(pos), length - 1);
    const std::size_t right = std::min(left + 1, length - 1);
    const double frac = pos - static_cast<double>(left);
    for (std::size_t c = 0; c < channels; ++c) {
      out.samples.push_back((1.0 - frac) * rec.at(left, c) + frac * rec.at(right, c));
    }
  }
  return out;
}

Recording align_channels(const Recording& rec, std::size_t target_channels) {
  if (rec.channel_count == 0) throw ParameterError("align_channels: recording '" + rec.id + "' has no channels");
  if (rec.channel_count > target_channels) {
    throw ParameterError("align_channels: recording '" + rec.id + "' has " + std::to_string(rec.channel_count) +
                         " channels, more than the target " + std::to_string(target_channels));
  }
  if (rec.channel_count == target_channels) return rec;
  Recording out = rec;
  out.channel_count = target_channels;
  out.samples.assign(rec.length() * target_channels, 0.0);
  out.channel_names.clear();
  for (std::size_t c = 0; c < target_channels; ++c) {
    const std::size_t source = c % rec.channel_count;
    const std::size_t copy = c / rec.channel_count;
    std::string name = source < rec.channel_names.size() ? rec.channel_names[source] : "ch" + std::to_string(source);
    if (copy > 0) name += "#" + std::to_string(copy);
    out.channel_names.push_back(std::move(name));
    for (std::size_t t = 0; t < rec.length(); ++t) out.samples[t * target_channels + c] = rec.at(t, source);
  }
  return out;
}

}  // namespace mvts
