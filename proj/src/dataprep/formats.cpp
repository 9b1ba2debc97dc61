#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mvts/binary_io.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"

namespace mvts {
namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    cells.push_back(line.substr(begin, comma == std::string_view::npos ? std::string_view::npos : comma - begin));
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

fs::path sidecar_path(const fs::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace

Recording read_recording(const fs::path& csv_path) {
  const std::string file = csv_path.string();
  const fs::path meta_path = sidecar_path(csv_path);
  if (!fs::exists(meta_path)) throw FormatError(file + ": missing sidecar " + meta_path.string());

  Recording rec;
  rec.id = csv_path.stem().string();

  nlohmann::json meta;
  try {
    std::ifstream in(meta_path);
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": invalid JSON: " + e.what());
  }
  if (!meta.contains("sampling_rate_hz") || !meta["sampling_rate_hz"].is_number()) {
    throw FormatError(meta_path.string() + ": missing numeric sampling_rate_hz");
  }
  rec.sampling_rate_hz = meta["sampling_rate_hz"].get<double>();
  if (!(rec.sampling_rate_hz > 0.0)) throw FormatError(meta_path.string() + ": sampling_rate_hz must be > 0");
  if (meta.contains("anomaly_intervals")) {
    const auto& list = meta["anomaly_intervals"];
    if (!list.is_array()) throw FormatError(meta_path.string() + ": anomaly_intervals must be an array");
    for (const auto& iv : list) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number()) {
        throw FormatError(meta_path.string() + ": each anomaly interval must be [start_s, end_s]");
      }
      const Interval interval{iv[0].get<double>(), iv[1].get<double>()};
      if (!(interval.start_s < interval.end_s)) {
        throw FormatError(meta_path.string() + ": anomaly interval end must exceed start");
      }
      rec.anomaly_intervals.push_back(interval);
    }
  }

  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open " + file);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file + ": empty file (expected a header row)");
  for (auto name : split_csv_line(line)) rec.channel_names.emplace_back(trim(name));
  rec.channel_count = rec.channel_names.size();

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != rec.channel_count) {
      throw FormatError(file + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " columns, header has " + std::to_string(rec.channel_count));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto cell = trim(cells[c]);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw FormatError(file + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) + " ('" +
                          rec.channel_names[c] + "'): not a finite number: '" + std::string(cell) + "'");
      }
      rec.samples.push_back(value);
    }
  }
  rec.validate();
  return rec;
}

std::vector<Recording> ingest(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw FormatError(directory.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError(directory.string() + ": no .csv recordings");
  std::vector<Recording> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_recording(f));
  return out;
}

void write_recording(const Recording& rec, const fs::path& directory) {
  fs::create_directories(directory);
  const fs::path csv_path = directory / (rec.id + ".csv");
  {
    std::ofstream out(csv_path);
    if (!out) throw Error(ErrorCategory::runtime, "cannot write " + csv_path.string());
    for (std::size_t c = 0; c < rec.channel_count; ++c) {
      if (c) out << ',';
      out << (c < rec.channel_names.size() ? rec.channel_names[c] : "ch" + std::to_string(c));
    }
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < rec.length(); ++t) {
      for (std::size_t c = 0; c < rec.channel_count; ++c) {
        if (c) out << ',';
        const auto res = std::to_chars(buf, buf + sizeof buf, rec.at(t, c));
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    }
  }
  nlohmann::json meta;
  meta["sampling_rate_hz"] = rec.sampling_rate_hz;
  meta["anomaly_intervals"] = nlohmann::json::array();
  for (const auto& iv : rec.anomaly_intervals) meta["anomaly_intervals"].push_back({iv.start_s, iv.end_s});
  std::ofstream meta_out(sidecar_path(csv_path));
  meta_out << meta.dump(2) << '\n';
}

void save_windows(const WindowSet& ws, const fs::path& path) {
  ws.validate();
  ByteWriter w;
  w.raw(std::string_view(kWindowsMagic, 4));
  w.u16(kWindowsVersion);
  w.u64(ws.count());
  w.u64(ws.length);
  w.u64(ws.channels);
  for (auto l : ws.labels) w.u8(l);
  for (auto s : ws.splits) w.u8(static_cast<std::uint8_t>(s));
  for (float v : ws.values) w.f32(v);
  w.write_file(path);
}

WindowSet load_windows(const fs::path& path) {
  auto r = ByteReader::from_file(path);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kWindowsMagic)) {
    throw FormatError(path.string() + ": bad magic (expected MVTW) at offset 0");
  }
  const auto version = r.u16("version");
  if (version != kWindowsVersion) r.fail("unsupported windows container version " + std::to_string(version));
  WindowSet ws;
  const auto count = r.u64("N");
  ws.length = r.u64("T");
  ws.channels = r.u64("M");
  const std::uint64_t cells = count * ws.length * ws.channels;
  if (ws.length && ws.channels && cells / (ws.length * ws.channels) != count) r.fail("N x T x M overflows");
  if (r.remaining() != 2 * count + 4 * cells) {
    if (r.remaining() < 2 * count + 4 * cells) {
      throw FormatError(path.string() + ": truncated body at offset " + std::to_string(r.offset()) + " (need " +
                        std::to_string(2 * count + 4 * cells) + " bytes, have " + std::to_string(r.remaining()) +
                        ")");
    }
    r.fail("trailing bytes after window payload");
  }
  ws.labels.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto label = r.u8("label");
    if (label > 1) r.fail("label byte must be 0 or 1");
    ws.labels.push_back(label);
  }
  ws.splits.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto code = r.u8("split");
    if (code > 2) r.fail("split byte must be 0, 1 or 2");
    ws.splits.push_back(static_cast<Split>(code));
  }
  ws.values.reserve(cells);
  for (std::uint64_t i = 0; i < cells; ++i) ws.values.push_back(r.f32("values"));
  ws.provenance.resize(count);
  return ws;
}

nlohmann::json windows_manifest(const WindowSet& ws) {
  nlohmann::json j;
  j["count"] = ws.count();
  j["window_length"] = ws.length;
  j["channels"] = ws.channels;
  j["normalization"] = {
      {"applied", ws.normalization.applied},
      {"mean", ws.normalization.mean},
      {"std", ws.normalization.std},
      {"scope", ws.normalization.scope == NormalizationScope::train_only ? "train_only" : "all_windows"},
  };
  nlohmann::json counts = nlohmann::json::object();
  for (Split s : {Split::train, Split::val, Split::test}) {
    counts[to_string(s)] = {{"label0", ws.indices(s, 0).size()}, {"label1", ws.indices(s, 1).size()}};
  }
  j["counts"] = counts;
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& p : ws.provenance) prov.push_back({{"recording", p.recording}, {"start", p.start}});
  j["provenance"] = prov;
  return j;
}

}  // namespace mvts
