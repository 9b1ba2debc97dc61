// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   mvts_acceptance [--only 1,4,7] [--seeds N] [--epochs E] [--work DIR]
//
// Criteria 9-11 drive the mvts binary the same way a user would.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvts/binary_io.hpp"
#include "mvts/checkpoint.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/hash.hpp"
#include "mvts/log.hpp"
#include "mvts/masking.hpp"
#include "mvts/scoring.hpp"
#include "mvts/threads.hpp"
#include "mvts/training.hpp"

namespace fs = std::filesystem;
using namespace mvts;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Options {
  std::size_t seeds = 5;
  std::size_t epochs = 3;
  fs::path work;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs the CLI with output captured in `log`; returns the exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MVTS_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// ------------------------------------------------------------------ 1

Outcome gradient_fidelity() {
  ModelConfig c;
  c.window_length = 8;
  c.channels = 2;
  c.latent_width = 8;
  c.heads = 2;
  c.query_width = 4;
  c.value_width = 4;
  c.layers = 1;
  c.ffn_width = 16;
  const auto start = Clock::now();
  const auto report = masked_loss_gradient_check(c, 1, 1e-4);
  const double elapsed = seconds_since(start);
  double worst = 0;
  std::string worst_name;
  for (const auto& e : report.entries)
    if (e.max_rel_error >= worst) worst = e.max_rel_error, worst_name = e.name;
  const bool ok = report.passed() && report.entries.size() == init_params<double>(c).named_parameters().size() &&
                  elapsed < 60.0;
  return {ok, fmt("%zu tensors, worst relative error %.2e (%s), %.1f s", report.entries.size(), worst,
                  worst_name.c_str(), elapsed)};
}

// ------------------------------------------------------------------ 2

Outcome masking_statistics() {
  bool ok = true;
  std::string detail;
  for (double r : {0.15, 0.25, 0.5}) {
    MaskSpec spec;
    spec.ratio = r;
    spec.mean_masked_run = 3.0;
    std::mt19937_64 rng(derive_seed(7, std::uint64_t(r * 100)));
    const std::size_t length = 10000, channels = 100;  // 10^6 cells
    const auto mask = geometric_mask(length, channels, spec, rng);
    std::size_t masked = 0, runs = 0;
    for (std::size_t m = 0; m < channels; ++m) {
      bool previous = false;
      for (std::size_t t = 0; t < length; ++t) {
        const bool cur = mask.bits[t * channels + m] != 0;
        masked += cur;
        runs += cur && !previous;
        previous = cur;
      }
    }
    const double fraction = double(masked) / double(length * channels);
    const double mean_run = double(masked) / double(runs);
    const bool lu_exact = spec.mean_unmasked_run() == (1.0 - r) / r * 3.0;
    const bool this_ok = std::abs(fraction - r) <= 0.01 && std::abs(mean_run - 3.0) <= 0.05 * 3.0 && lu_exact;
    ok = ok && this_ok;
    detail += fmt("%sr=%.2f: fraction %.4f, run %.3f, l_u %.4f%s", detail.empty() ? "" : "; ", r, fraction, mean_run,
                  spec.mean_unmasked_run(), lu_exact ? "" : " (l_u mismatch)");
  }
  return {ok, detail};
}

// ------------------------------------------------------------------ 3

Outcome auc_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::size_t agree = 0;
  const std::size_t trials = 1000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t m = size(rng), n = size(rng);
    // Coarse integer scores in a third of the trials force many ties.
    std::uniform_int_distribution<int> coarse(0, 6);
    std::normal_distribution<double> fine;
    const bool tied = trial % 3 == 0;
    ScoreSet s;
    for (std::size_t i = 0; i < m + n; ++i) {
      s.push_back({i, tied ? double(coarse(rng)) : fine(rng) + (i < m ? 0.5 : 0.0), std::uint8_t(i < m)});
    }
    std::shuffle(s.begin(), s.end(), rng);
    // Pair counting in half units keeps the oracle exact.
    std::size_t halves = 0;
    for (const auto& a : s)
      for (const auto& b : s)
        if (a.label == 1 && b.label == 0) halves += a.score > b.score ? 2 : a.score == b.score ? 1 : 0;
    const double brute = double(halves) / double(2 * m * n);
    agree += auc(s) == brute;
  }
  return {agree == trials, fmt("%zu/%zu instances identical", agree, trials)};
}

// ------------------------------------------------------------------ 4

Outcome ci_formulas() {
  // Hanley–McNeil at A = 0.5, m = n = 10: Q1 = Q2 = 1/3,
  // σ² = (0.25 + 9·(1/3 − 1/4) + 9·(1/3 − 1/4)) / 100 = 0.0175.
  const double var = auc_variance(0.5, 10, 10);
  const double ci = auc_ci(0.5, 10, 10);
  bool perfect_zero = true;
  for (std::size_t m : {1, 5, 40})
    for (std::size_t n : {1, 7, 100}) perfect_zero = perfect_zero && auc_ci(1.0, m, n) == 0.0;
  const double half = proportion_ci(0.9, 40, 60);
  const bool ok = std::abs(var - 0.0175) < 1e-12 && std::abs(ci - 1.96 * std::sqrt(0.0175)) < 1e-12 && perfect_zero &&
                  std::abs(half - 0.0588) <= 1e-4;
  return {ok, fmt("var(0.5,10,10)=%.6f, ci=%.5f, ci(A=1)=0 %s, proportion half-width %.5f", var, ci,
                  perfect_zero ? "yes" : "no", half)};
}

// ------------------------------------------------------------------ 5

Outcome threshold_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(2, 100);
  std::size_t agree = 0, with_ties = 0;
  const std::size_t trials = 1000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t total = size(rng);
    std::bernoulli_distribution label(0.3);
    std::uniform_int_distribution<int> coarse(0, 8);
    std::normal_distribution<double> fine;
    const bool tied = trial % 2 == 0;
    ScoreSet s;
    for (std::size_t i = 0; i < total; ++i) {
      const std::uint8_t y = i == 0 ? 1 : i == 1 ? 0 : std::uint8_t(label(rng));
      s.push_back({i, tied ? double(coarse(rng)) : fine(rng) + y, y});
    }
    std::vector<double> distinct;
    for (const auto& w : s) distinct.push_back(w.score);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    with_ties += distinct.size() < s.size();

    // Every cut: below all, between neighbours, above all. G-mean ordering
    // equals tp·tn ordering, which is exact in integers.
    std::vector<double> cuts{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(0.5 * (distinct[i] + distinct[i + 1]));
    cuts.push_back(std::numeric_limits<double>::infinity());
    double best_cut = cuts.front();
    std::size_t best = 0;
    bool first = true;
    for (double c : cuts) {
      std::size_t tp = 0, tn = 0;
      for (const auto& w : s) tp += w.label == 1 && w.score > c, tn += w.label == 0 && !(w.score > c);
      if (first || tp * tn > best) best = tp * tn, best_cut = c, first = false;
    }
    agree += select_threshold(s).threshold == best_cut;
  }
  return {agree == trials, fmt("%zu/%zu instances identical (%zu with tied scores)", agree, trials, with_ties)};
}

// ------------------------------------------------------------------ 6

Outcome filter_response() {
  constexpr double kPi = std::numbers::pi;
  const double rate = 256.0;
  const std::size_t length = 8192;
  auto tone = [&](double f) {
    Recording r;
    r.id = "tone";
    r.sampling_rate_hz = rate;
    r.channel_count = 1;
    r.channel_names = {"x"};
    for (std::size_t t = 0; t < length; ++t) r.samples.push_back(f == 0.0 ? 1.0 : std::sin(2 * kPi * f * t / rate));
    return butterworth_bandpass(r, FilterSpec{});
  };
  // Least-squares amplitude at f over the middle half (steady state).
  auto amplitude = [&](const Recording& r, double f) {
    double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
    for (std::size_t t = length / 4; t < 3 * length / 4; ++t) {
      const double s = std::sin(2 * kPi * f * t / rate), c = std::cos(2 * kPi * f * t / rate), x = r.samples[t];
      ss += s * s, cc += c * c, sc += s * c, xs += x * s, xc += x * c;
    }
    const double det = ss * cc - sc * sc;
    return std::hypot((xs * cc - xc * sc) / det, (xc * ss - xs * sc) / det);
  };
  // Bilinear Butterworth, 2nd-order low-pass × 2nd-order high-pass, applied
  // forward and backward: |H|⁴ in power, |H|² in amplitude.
  auto analytic_db = [&](double f) {
    const double w = std::tan(kPi * f / rate);
    const double lp = 1.0 / (1.0 + std::pow(w / std::tan(kPi * 50.0 / rate), 4));
    const double hp = 1.0 / (1.0 + std::pow(std::tan(kPi * 0.5 / rate) / w, 4));
    return 20.0 * std::log10(lp * hp);
  };
  const double g10 = 20.0 * std::log10(amplitude(tone(10.0), 10.0));
  const double g60 = 20.0 * std::log10(amplitude(tone(60.0), 60.0));
  const auto dc = tone(0.0);
  double dc_residue = 0;
  for (std::size_t t = 3 * length / 4; t < length; ++t) dc_residue = std::max(dc_residue, std::abs(dc.samples[t]));
  const bool ok = std::abs(g10 - analytic_db(10.0)) <= 1.0 && std::abs(g60 - analytic_db(60.0)) <= 1.0 &&
                  dc_residue < 1e-3;
  return {ok, fmt("10 Hz %.3f dB (analytic %.3f), 60 Hz %.3f dB (analytic %.3f), DC residue %.1e", g10,
                  analytic_db(10.0), g60, analytic_db(60.0), dc_residue)};
}

// ------------------------------------------------------------------ 7, 8

struct BenchmarkRun {
  double auc = 0, balanced_accuracy = 0, seconds = 0;
};

struct Benchmark {
  std::vector<BenchmarkRun> geometric, bernoulli;
  double geometric_seconds = 0;
  fs::path checkpoint, windows;  // seed-1 geometric artifacts for criterion 11
  std::string error;
};

BenchmarkRun benchmark_run(std::uint64_t seed, MaskStrategy strategy, const Options& opt, Benchmark* keep) {
  const auto start = Clock::now();
  SynthConfig sc;
  sc.normal_segments = 2000;
  sc.anomalous_segments = 400;
  sc.segment_length = 128;
  sc.channels = 4;
  sc.rate_hz = 64.0;
  sc.seed = seed;
  PreprocessConfig pc;
  pc.window_length = 128;
  pc.apply_filter = false;  // the 50 Hz edge is above the 32 Hz Nyquist
  pc.seed = seed;
  const auto ws = preprocess(synth_generate(sc), pc);

  ModelConfig mc;
  mc.window_length = 128;
  mc.channels = 4;
  mc.seed = seed;
  TrainConfig tc;
  tc.seed = seed;
  tc.max_epochs = opt.epochs;
  tc.mask.strategy = strategy;
  tc.mask.seed = seed;
  const auto result = train(ws, mc, tc);

  const auto threads = worker_threads();
  const auto calibration = score_set(result.params, ws, ws.indices(Split::val), threads);
  const auto test = score_set(result.params, ws, ws.indices(Split::test), threads);
  const auto report = evaluate(calibration, test, ThresholdPolicy::calibration);
  if (keep) {
    keep->checkpoint = opt.work / "benchmark.ckpt";
    keep->windows = opt.work / "benchmark.mvtw";
    save_checkpoint(result.params, keep->checkpoint);
    save_windows(ws, keep->windows);
  }
  return {report.auc.value, report.balanced_accuracy.value, seconds_since(start)};
}

std::string describe(const std::vector<BenchmarkRun>& runs) {
  std::string s;
  for (const auto& r : runs) s += fmt("%s%.4f/%.3f", s.empty() ? "" : " ", r.auc, r.balanced_accuracy);
  return s;
}

std::vector<double> aucs(const std::vector<BenchmarkRun>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.auc);
  return out;
}

Outcome synthetic_benchmark(Benchmark& bench, const Options& opt) {
  const auto start = Clock::now();
  for (std::uint64_t seed = 1; seed <= opt.seeds; ++seed) {
    bench.geometric.push_back(benchmark_run(seed, MaskStrategy::geometric, opt, seed == 1 ? &bench : nullptr));
    std::fprintf(stderr, "  benchmark seed %llu geometric: AUC %.4f BA %.4f (%.0f s)\n", (unsigned long long)seed,
                 bench.geometric.back().auc, bench.geometric.back().balanced_accuracy, bench.geometric.back().seconds);
  }
  bench.geometric_seconds = seconds_since(start);
  std::vector<double> ba;
  for (const auto& r : bench.geometric) ba.push_back(r.balanced_accuracy);
  const double med_auc = median(aucs(bench.geometric)), med_ba = median(ba);
  const bool ok = med_auc >= 0.90 && med_ba >= 0.85 && bench.geometric_seconds <= 15 * 60;
  return {ok, fmt("median AUC %.4f, median balanced accuracy %.4f over %zu seeds [AUC/BA: %s], %.0f s, %zu threads",
                  med_auc, med_ba, bench.geometric.size(), describe(bench.geometric).c_str(),
                  bench.geometric_seconds, worker_threads())};
}

Outcome masking_direction(Benchmark& bench, const Options& opt) {
  for (std::uint64_t seed = 1; seed <= opt.seeds; ++seed) {
    bench.bernoulli.push_back(benchmark_run(seed, MaskStrategy::bernoulli, opt, nullptr));
    std::fprintf(stderr, "  benchmark seed %llu bernoulli: AUC %.4f BA %.4f (%.0f s)\n", (unsigned long long)seed,
                 bench.bernoulli.back().auc, bench.bernoulli.back().balanced_accuracy, bench.bernoulli.back().seconds);
  }
  const double g = median(aucs(bench.geometric)), b = median(aucs(bench.bernoulli));
  return {g >= b, fmt("median AUC geometric %.6f vs bernoulli %.6f (r=0.15) [bernoulli AUC/BA: %s]", g, b,
                      describe(bench.bernoulli).c_str())};
}

// ------------------------------------------------------------------ 9

const char* kTinyModel =
    "latent-width=8\nheads=2\nquery-width=4\nvalue-width=4\nlayers=1\nffn-width=16\nepochs=2\nbatch-size=16\n";

Outcome determinism(const Options& opt) {
  std::vector<std::string> ckpt, scores;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = opt.work / ("determinism" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "model.cfg") << kTinyModel;
    const std::string d = "\"" + dir.string() + "/";
    const fs::path log = dir / "log.txt";
    const bool ok =
        run_cli("synth --output " + d + "data\" --normal 60 --anomalous 20 --length 64 --channels 2 --seed 9", log) ==
            0 &&
        run_cli("preprocess --input " + d + "data\" --output " + d + "w.mvtw\" --window-len 32 --no-filter --seed 9",
                log) == 0 &&
        run_cli("train --windows " + d + "w.mvtw\" --output " + d + "m.ckpt\" --config " + d +
                    "model.cfg\" --seed 9 --quiet",
                log) == 0 &&
        run_cli("score --windows " + d + "w.mvtw\" --checkpoint " + d + "m.ckpt\" --output " + d + "s.csv\"", log) ==
            0;
    if (!ok) return {false, "pipeline failed: " + slurp(log)};
    ckpt.push_back(sha256_file(dir / "m.ckpt"));
    scores.push_back(sha256_file(dir / "s.csv"));
  }
  const bool ok = ckpt[0] == ckpt[1] && scores[0] == scores[1];
  return {ok, fmt("checkpoint %s…, scores %s… (%s)", ckpt[0].substr(0, 12).c_str(), scores[0].substr(0, 12).c_str(),
                  ok ? "identical across runs" : "runs differ")};
}

// ------------------------------------------------------------------ 10

Outcome format_round_trips(const Options& opt) {
  const fs::path dir = opt.work / "formats";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> problems;

  // Checkpoint: random parameters and running statistics.
  ModelConfig mc;
  mc.window_length = 16;
  mc.channels = 3;
  mc.latent_width = 8;
  mc.heads = 2;
  mc.query_width = 4;
  mc.value_width = 4;
  mc.layers = 2;
  mc.ffn_width = 12;
  auto params = init_params<float>(mc);
  std::mt19937_64 rng(10);
  std::normal_distribution<float> normal;
  for (auto& [name, t] : params.named_parameters())
    for (auto& v : const_cast<Tensor<float>&>(t).mutable_data()) v = normal(rng);
  for (auto& [name, buf] : params.named_buffers())
    for (auto& v : *buf) v = std::abs(normal(rng));
  save_checkpoint(params, dir / "m.ckpt");
  auto loaded = load_checkpoint(dir / "m.ckpt", mc);
  const auto a = params.named_parameters(), b = loaded.named_parameters();
  bool ckpt_exact = a.size() == b.size();
  for (std::size_t i = 0; ckpt_exact && i < a.size(); ++i) {
    ckpt_exact = a[i].second.shape() == b[i].second.shape() &&
                 std::memcmp(a[i].second.data().data(), b[i].second.data().data(), a[i].second.size() * 4) == 0;
  }
  auto ba = params.named_buffers(), bb = loaded.named_buffers();
  for (std::size_t i = 0; ckpt_exact && i < ba.size(); ++i) ckpt_exact = *ba[i].second == *bb[i].second;
  if (!ckpt_exact) problems.push_back("checkpoint round trip not bit-exact");

  // Windows container.
  SynthConfig sc;
  sc.normal_segments = 12;
  sc.anomalous_segments = 4;
  sc.segment_length = 64;
  sc.channels = 3;
  sc.seed = 10;
  PreprocessConfig pc;
  pc.window_length = 16;
  pc.apply_filter = false;
  const auto ws = preprocess(synth_generate(sc), pc);
  save_windows(ws, dir / "w.mvtw");
  const auto back = load_windows(dir / "w.mvtw");
  const bool windows_exact = back.length == ws.length && back.channels == ws.channels && back.labels == ws.labels &&
                             back.splits == ws.splits && back.values.size() == ws.values.size() &&
                             std::memcmp(back.values.data(), ws.values.data(), ws.values.size() * 4) == 0;
  if (!windows_exact) problems.push_back("windows round trip not bit-exact");

  // Malformed inputs through the CLI must exit with code 2.
  const auto ckpt_bytes = read_file_bytes(dir / "m.ckpt");
  const auto win_bytes = read_file_bytes(dir / "w.mvtw");
  auto mutate = [](std::vector<unsigned char> bytes, auto&& f) {
    f(bytes);
    return bytes;
  };
  write_bytes(dir / "trunc.ckpt", mutate(ckpt_bytes, [](auto& v) { v.resize(v.size() - 5); }));
  write_bytes(dir / "magic.ckpt", mutate(ckpt_bytes, [](auto& v) { v[0] = 'X'; }));
  write_bytes(dir / "version.ckpt", mutate(ckpt_bytes, [](auto& v) { v[4] = 0x7f; }));
  write_bytes(dir / "trunc.mvtw", mutate(win_bytes, [](auto& v) { v.resize(v.size() / 2); }));
  write_bytes(dir / "magic.mvtw", mutate(win_bytes, [](auto& v) { v[1] = 'Z'; }));
  std::ofstream(dir / "bad_scores.csv") << "window_id,score,label\n0,0.5,1\n1,abc,0\n";
  fs::create_directories(dir / "nosidecar");
  std::ofstream(dir / "nosidecar" / "r.csv") << "a,b\n1,2\n";
  fs::create_directories(dir / "nancell");
  std::ofstream(dir / "nancell" / "r.csv") << "a,b\n1,2\n3,nan\n";
  std::ofstream(dir / "nancell" / "r.meta.json") << R"({"sampling_rate_hz": 4})";

  const std::string d = "\"" + dir.string() + "/";
  const std::vector<std::pair<std::string, std::string>> cases{
      {"truncated checkpoint", "score --windows " + d + "w.mvtw\" --checkpoint " + d + "trunc.ckpt\" --output " + d +
                                   "x.csv\""},
      {"checkpoint bad magic", "attn --windows " + d + "w.mvtw\" --checkpoint " + d + "magic.ckpt\" --output " + d +
                                   "attn\""},
      {"checkpoint bad version", "score --windows " + d + "w.mvtw\" --checkpoint " + d + "version.ckpt\" --output " +
                                     d + "x.csv\""},
      {"truncated windows", "train --windows " + d + "trunc.mvtw\" --output " + d + "x.ckpt\" --seed 1"},
      {"windows bad magic", "score --windows " + d + "magic.mvtw\" --checkpoint " + d + "m.ckpt\" --output " + d +
                                "x.csv\""},
      {"malformed scores", "evaluate --scores " + d + "bad_scores.csv\" --policy test --output " + d + "r.json\""},
      {"missing sidecar", "preprocess --input " + d + "nosidecar\" --output " + d + "x.mvtw\""},
      {"non-numeric cell", "preprocess --input " + d + "nancell\" --output " + d + "x.mvtw\""},
  };
  std::size_t rejected = 0;
  for (const auto& [what, args] : cases) {
    const fs::path log = dir / "log.txt";
    const int code = run_cli(args, log);
    const std::string out = slurp(log);
    if (code == 2 && out.find("error[input]") != std::string::npos) {
      ++rejected;
    } else {
      problems.push_back(what + " gave exit " + std::to_string(code));
    }
  }
  std::string detail = fmt("checkpoint %s, windows %s, %zu/%zu malformed files exit 2",
                           ckpt_exact ? "bit-exact" : "DIFFERS", windows_exact ? "bit-exact" : "DIFFERS", rejected,
                           cases.size());
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// ------------------------------------------------------------------ 11

Outcome attention_sanity(const Benchmark& bench, const Options& opt) {
  fs::path ckpt = bench.checkpoint, windows = bench.windows;
  if (ckpt.empty()) {
    // Criterion 7 was skipped: train a default-shaped model for one epoch.
    Options quick = opt;
    quick.epochs = 1;
    Benchmark b;
    benchmark_run(1, MaskStrategy::geometric, quick, &b);
    ckpt = b.checkpoint;
    windows = b.windows;
  }
  const auto params = load_checkpoint(ckpt);
  const std::size_t t_len = params.config.window_length, layers = params.config.layers, heads = params.config.heads;
  const fs::path out = opt.work / "attention";
  fs::remove_all(out);
  const fs::path log = opt.work / "attn_log.txt";
  const int code = run_cli("attn --windows \"" + windows.string() + "\" --checkpoint \"" + ckpt.string() +
                               "\" --window 5 --output \"" + out.string() + "\"",
                           log);
  if (code != 0) return {false, "attn exited " + std::to_string(code) + ": " + slurp(log)};

  std::size_t files = 0, bad_shape = 0, rows = 0;
  double worst = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) {
      std::ifstream in(out / ("layer" + std::to_string(l) + "_head" + std::to_string(h) + ".csv"));
      if (!in) continue;
      ++files;
      std::string line;
      std::size_t r = 0;
      while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::size_t cols = 0;
        double sum = 0;
        while (std::getline(ss, cell, ',')) sum += std::stod(cell), ++cols;
        bad_shape += cols != t_len;
        worst = std::max(worst, std::abs(sum - 1.0));
        ++r;
      }
      bad_shape += r != t_len;
      rows += r;
    }
  }
  const bool has_channel = slurp(log).find("max_error_channel=") != std::string::npos;
  const bool ok = files == layers * heads && bad_shape == 0 && worst <= 1e-6 && has_channel;
  return {ok, fmt("%zu/%zu heatmaps of %zux%zu, %zu rows, worst |row sum - 1| %.1e", files, layers * heads, t_len,
                  t_len, rows, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  set_warnings_enabled(false);
  CLI::App app{"mvts acceptance criteria"};
  std::string only;
  Options opt;
  opt.work = fs::temp_directory_path() / "mvts_acceptance";
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--seeds", opt.seeds, "Benchmark seeds per strategy");
  app.add_option("--epochs", opt.epochs, "Benchmark epoch budget");
  app.add_option("--work", opt.work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (!only.empty()) {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ',')) selected.insert(std::stoi(item));
  }
  fs::create_directories(opt.work);

  Benchmark bench;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"masking statistics", masking_statistics},
      {"AUC oracle", auc_oracle},
      {"CI formulas", ci_formulas},
      {"threshold oracle", threshold_oracle},
      {"filter response", filter_response},
      {"synthetic benchmark", [&] { return synthetic_benchmark(bench, opt); }},
      {"masking-strategy direction", [&] { return masking_direction(bench, opt); }},
      {"determinism", [&] { return determinism(opt); }},
      {"format round-trips", [&] { return format_round_trips(opt); }},
      {"attention sanity", [&] { return attention_sanity(bench, opt); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = int(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    if (number == 8 && bench.geometric.empty()) {
      // needs the geometric runs of criterion 7
      synthetic_benchmark(bench, opt);
    }
    Outcome outcome;
    const auto start = Clock::now();
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.passed;
    std::printf("%s  %2d %-27s %s [%.1f s]\n", outcome.passed ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                outcome.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
