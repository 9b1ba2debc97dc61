#pragma once

// Recording preprocessing: resample-rate discovery, Butterworth bandpass,
// resampling, channel alignment, overlapping windows, stratified splits and
// dataset-level normalization. Also the CSV+JSON dataset format, the binary
// window container and a synthetic EEG-like generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mvts {

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
  bool operator==(const Interval&) const = default;
};

struct Recording {
  std::string id;
  std::vector<double> samples;  // length × channels, row-major by time
  std::size_t channel_count = 0;
  double sampling_rate_hz = 0.0;
  std::vector<std::string> channel_names;
  std::vector<Interval> anomaly_intervals;

  std::size_t length() const { return channel_count ? samples.size() / channel_count : 0; }
  double at(std::size_t t, std::size_t c) const { return samples[t * channel_count + c]; }
  double duration_s() const { return static_cast<double>(length()) / sampling_rate_hz; }

  /// Throws FormatError on NaN samples, bad rate, or malformed intervals.
  void validate() const;
};

// ---------------------------------------------------------------- filtering

struct FilterSpec {
  int order = 4;  // total: 2nd-order high-pass cascaded with 2nd-order low-pass
  double low_hz = 0.5;
  double high_hz = 50.0;
  bool zero_phase = true;

  void validate(double rate_hz) const;
};

/// Direct-form II transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz);
Biquad butterworth_highpass(double cutoff_hz, double rate_hz);

/// In-place causal filtering of one strided channel, zero initial state.
void filter_channel(const Biquad& section, std::span<double> signal);

Recording butterworth_bandpass(const Recording& rec, const FilterSpec& spec);

// ---------------------------------------------------------------- resampling

/// Integer ratio: keep every k-th sample (ceil(L/k) samples). Otherwise
/// linear interpolation onto the target grid. Throws on upsampling.
Recording resample(const Recording& rec, double target_hz);

/// Cycle channels 1..m until M_target exist; copies get a "#k" suffix.
Recording align_channels(const Recording& rec, std::size_t target_channels);

// ---------------------------------------------------------------- windows

struct WindowRef {
  std::size_t start = 0;
  bool anomalous = false;
};

/// Windows of `length` samples starting at 0, stride, 2·stride, ... where
/// stride = length − round(length·overlap). Label 1 iff the window's overlap
/// with the anomaly intervals exceeds `label_fraction` of its duration.
std::vector<WindowRef> extract_windows(const Recording& rec, std::size_t length, double overlap = 0.5,
                                       double label_fraction = 0.5);

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };
std::string to_string(Split split);

struct SplitRatios {
  double train = 0.6, val = 0.2, test = 0.2;
};

/// Per-label shuffled partition. In unsupervised mode label-1 windows never
/// go to train: their train share is divided evenly between val and test.
std::vector<Split> stratified_split(std::span<const std::uint8_t> labels, const SplitRatios& ratios,
                                    std::uint64_t seed, bool unsupervised = true);

enum class NormalizationScope { train_only, all_windows };

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
  NormalizationScope scope = NormalizationScope::train_only;
  bool applied = false;
};

struct WindowProvenance {
  std::string recording;
  std::size_t start = 0;
};

struct WindowSet {
  std::size_t length = 0;    // T
  std::size_t channels = 0;  // M
  std::vector<float> values; // N × T × M
  std::vector<std::uint8_t> labels;
  std::vector<Split> splits;
  std::vector<WindowProvenance> provenance;
  NormalizationStats normalization;

  std::size_t count() const { return labels.size(); }
  std::size_t window_size() const { return length * channels; }
  std::span<const float> window(std::size_t i) const {
    return {values.data() + i * window_size(), window_size()};
  }
  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(Split split, std::uint8_t label) const;
  void validate() const;
};

inline constexpr double kStdFloor = 1e-8;

/// Global scalar mean/std from the chosen scope, applied to every window.
void normalize(WindowSet& ws, NormalizationScope scope = NormalizationScope::train_only);

struct PreprocessConfig {
  std::size_t window_length = 128;
  std::optional<double> target_hz;  // default: smallest rate across recordings
  FilterSpec filter;
  bool apply_filter = true;
  std::size_t channels = 0;  // default: largest channel count across recordings
  double overlap = 0.5;
  double label_fraction = 0.5;
  SplitRatios ratios;
  bool unsupervised = true;
  NormalizationScope normalization = NormalizationScope::train_only;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Full pipeline in fixed order: rate discovery → bandpass → resample →
/// align channels → window → split → normalize.
WindowSet preprocess(const std::vector<Recording>& recordings, const PreprocessConfig& config);

// ---------------------------------------------------------------- formats

/// Reads every `<name>.csv` with its `<name>.meta.json` sidecar.
std::vector<Recording> ingest(const std::filesystem::path& directory);
Recording read_recording(const std::filesystem::path& csv_path);
void write_recording(const Recording& rec, const std::filesystem::path& directory);

inline constexpr char kWindowsMagic[4] = {'M', 'V', 'T', 'W'};
inline constexpr std::uint16_t kWindowsVersion = 1;

void save_windows(const WindowSet& ws, const std::filesystem::path& path);
WindowSet load_windows(const std::filesystem::path& path);
nlohmann::json windows_manifest(const WindowSet& ws);

// ---------------------------------------------------------------- synthetic

struct SynthConfig {
  std::size_t normal_segments = 0;
  std::size_t anomalous_segments = 0;
  std::size_t segment_length = 128;
  std::size_t channels = 4;
  double rate_hz = 64.0;
  std::uint64_t seed = 0;
};

/// One recording per segment. Normal: 2–3 sinusoids in 8–14 Hz plus
/// N(0, 0.3²) noise with slowly drifting per-channel phase. Anomalous: the
/// same background plus a 3–5 Hz spike-and-slow-wave train at 2–4× the
/// strongest background component, labeled over the whole segment. Normal
/// and anomalous segments are interleaved in a seeded random order.
std::vector<Recording> synth_generate(const SynthConfig& config);

}  // namespace mvts
