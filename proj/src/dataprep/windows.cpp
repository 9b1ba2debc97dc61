#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"
#include "mvts/hash.hpp"
#include "mvts/log.hpp"

namespace mvts {

void Recording::validate() const {
  const std::string where = "recording '" + id + "'";
  if (!(sampling_rate_hz > 0.0) || !std::isfinite(sampling_rate_hz)) {
    throw FormatError(where + ": sampling rate must be positive");
  }
  if (channel_count == 0 || samples.size() % channel_count != 0) {
    throw FormatError(where + ": sample matrix is not length x channels");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw FormatError(where + ": non-finite sample at row " + std::to_string(i / channel_count) +
                        ", column " + std::to_string(i % channel_count));
    }
  }
  const double duration = duration_s();
  for (const auto& iv : anomaly_intervals) {
    if (!(iv.start_s < iv.end_s)) throw FormatError(where + ": anomaly interval end must exceed start");
    if (iv.start_s < 0.0 || iv.end_s > duration + 1e-9) {
      throw FormatError(where + ": anomaly interval [" + std::to_string(iv.start_s) + ", " +
                        std::to_string(iv.end_s) + "] outside [0, " + std::to_string(duration) + "]");
    }
  }
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

std::vector<WindowRef> extract_windows(const Recording& rec, std::size_t length, double overlap,
                                       double label_fraction) {
  if (length == 0) throw ParameterError("window length must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ParameterError("window overlap must lie in [0, 1)");
  const auto overlapping = static_cast<std::size_t>(std::llround(static_cast<double>(length) * overlap));
  const std::size_t stride = length - overlapping;
  if (stride == 0) throw ParameterError("window overlap leaves a zero stride");
  if (overlap == 0.5 && length % 2 != 0) warn("odd window length: stride is not exactly half a window");

  std::vector<WindowRef> out;
  const std::size_t total = rec.length();
  if (total < length) {
    warn("recording '" + rec.id + "' shorter than one window (" + std::to_string(total) + " < " +
         std::to_string(length) + ")");
    return out;
  }

  // Merge intervals so overlaps are not double counted.
  auto intervals = rec.anomaly_intervals;
  std::sort(intervals.begin(), intervals.end(), [](auto& a, auto& b) { return a.start_s < b.start_s; });
  std::vector<Interval> merged;
  for (const auto& iv : intervals) {
    if (!merged.empty() && iv.start_s <= merged.back().end_s) {
      merged.back().end_s = std::max(merged.back().end_s, iv.end_s);
    } else {
      merged.push_back(iv);
    }
  }

  const double rate = rec.sampling_rate_hz;
  const double window_s = static_cast<double>(length) / rate;
  for (std::size_t start = 0; start + length <= total; start += stride) {
    const double begin = static_cast<double>(start) / rate;
    const double end = begin + window_s;
    double covered = 0.0;
    for (const auto& iv : merged) covered += std::max(0.0, std::min(end, iv.end_s) - std::max(begin, iv.start_s));
    out.push_back({start, covered > label_fraction * window_s});
  }
  return out;
}

std::vector<Split> stratified_split(std::span<const std::uint8_t> labels, const SplitRatios& ratios,
                                    std::uint64_t seed, bool unsupervised) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<Split> out(labels.size(), Split::train);
  for (std::uint8_t label : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) members.push_back(i);
    if (members.empty()) continue;
    if (members.size() < 3) {
      warn("class " + std::to_string(label) + " has only " + std::to_string(members.size()) +
           " windows; split is best effort");
    }
    std::mt19937_64 rng(derive_seed(seed, label));
    std::shuffle(members.begin(), members.end(), rng);

    double train_share = ratios.train, val_share = ratios.val;
    if (unsupervised && label == 1) {
      val_share += ratios.train / 2.0;
      train_share = 0.0;
    }
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::floor(n * train_share + 0.5));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::floor(n * val_share + 0.5)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      out[members[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    }
  }
  return out;
}

std::vector<std::size_t> WindowSet::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

std::vector<std::size_t> WindowSet::indices(Split split, std::uint8_t label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count(); ++i)
    if (splits[i] == split && labels[i] == label) out.push_back(i);
  return out;
}

void WindowSet::validate() const {
  if (values.size() != count() * window_size() || splits.size() != count()) {
    throw FormatError("window set arrays disagree with N x T x M = " + std::to_string(count()) + " x " +
                      std::to_string(length) + " x " + std::to_string(channels));
  }
  for (auto l : labels)
    if (l > 1) throw FormatError("window label must be 0 or 1");
  for (auto s : splits)
    if (static_cast<std::uint8_t>(s) > 2) throw FormatError("window split code must be 0, 1 or 2");
}

void normalize(WindowSet& ws, NormalizationScope scope) {
  const std::size_t cells = ws.window_size();
  double sum = 0.0;
  std::size_t n = 0;
  auto in_scope = [&](std::size_t i) { return scope == NormalizationScope::all_windows || ws.splits[i] == Split::train; };
  for (std::size_t i = 0; i < ws.count(); ++i) {
    if (!in_scope(i)) continue;
    for (float v : ws.window(i)) sum += v;
    n += cells;
  }
  if (n == 0) throw ParameterError("normalize: no windows in the statistics split");
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < ws.count(); ++i) {
    if (!in_scope(i)) continue;
    for (float v : ws.window(i)) sq += (v - mean) * (v - mean);
  }
  const double std = std::max(std::sqrt(sq / static_cast<double>(n)), kStdFloor);
  for (auto& v : ws.values) v = static_cast<float>((v - mean) / std);
  ws.normalization = {mean, std, scope, true};
}

nlohmann::json PreprocessConfig::to_json() const {
  return {
      {"window_length", window_length},
      {"target_hz", target_hz ? nlohmann::json(*target_hz) : nlohmann::json(nullptr)},
      {"filter",
       {{"apply", apply_filter},
        {"order", filter.order},
        {"low_hz", filter.low_hz},
        {"high_hz", filter.high_hz},
        {"zero_phase", filter.zero_phase}}},
      {"channels", channels},
      {"overlap", overlap},
      {"label_fraction", label_fraction},
      {"ratios", {ratios.train, ratios.val, ratios.test}},
      {"unsupervised", unsupervised},
      {"normalization", normalization == NormalizationScope::train_only ? "train_only" : "all_windows"},
      {"seed", seed},
  };
}

WindowSet preprocess(const std::vector<Recording>& recordings, const PreprocessConfig& config) {
  if (recordings.empty()) throw ParameterError("preprocess: no recordings");
  double target = std::numeric_limits<double>::infinity();
  std::size_t channels = 0;
  for (const auto& rec : recordings) {
    rec.validate();
    target = std::min(target, rec.sampling_rate_hz);
    channels = std::max(channels, rec.channel_count);
  }
  if (config.target_hz) target = *config.target_hz;
  if (config.channels) channels = config.channels;

  WindowSet ws;
  ws.length = config.window_length;
  ws.channels = channels;
  for (const auto& raw : recordings) {
    Recording rec = config.apply_filter ? butterworth_bandpass(raw, config.filter) : raw;
    rec = resample(rec, target);
    rec = align_channels(rec, channels);
    for (const auto& w : extract_windows(rec, config.window_length, config.overlap, config.label_fraction)) {
      const std::size_t begin = w.start * channels;
      const std::size_t end = begin + config.window_length * channels;
      for (std::size_t i = begin; i < end; ++i) ws.values.push_back(static_cast<float>(rec.samples[i]));
      ws.labels.push_back(w.anomalous ? 1 : 0);
      ws.provenance.push_back({rec.id, w.start});
    }
  }
  ws.splits = stratified_split(ws.labels, config.ratios, config.seed, config.unsupervised);
  if (!ws.labels.empty()) normalize(ws, config.normalization);
  return ws;
}

}  // namespace mvts
