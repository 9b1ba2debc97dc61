// mvts: command-line front end for the masked transformer anomaly detector.
//
//   synth → preprocess → train → score → evaluate
//   plus maskdemo, gradcheck and attn for inspection.
//
// Every subcommand takes --config FILE with flat key=value lines naming the
// same long options (without dashes). Command-line flags win over the file.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvts/checkpoint.hpp"
#include "mvts/dataprep.hpp"
#include "mvts/error.hpp"
#include "mvts/gradcheck.hpp"
#include "mvts/hash.hpp"
#include "mvts/kernels.hpp"
#include "mvts/masking.hpp"
#include "mvts/model.hpp"
#include "mvts/scoring.hpp"
#include "mvts/threads.hpp"
#include "mvts/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvts;

namespace {

// ------------------------------------------------------------------ config

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  return s.substr(begin, s.find_last_not_of(" \t\r") - begin + 1);
}

// key=value lines as "--key=value" tokens. '#' starts a comment line.
std::vector<std::string> config_tokens(const fs::path& path, const CLI::App& command) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open config file");
  std::vector<std::string> tokens;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || command.get_option_no_throw("--" + key) == nullptr) {
      throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "' for " +
                           command.get_name());
    }
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// Moves "--config FILE" out of the arguments and splices the file's tokens in
// right after the subcommand name, ahead of the user's own flags.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
  if (args.empty()) return args;
  const CLI::App* command = nullptr;
  for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    if (sub->get_name() == args[0]) command = sub;
  if (command == nullptr) return args;

  std::optional<std::string> config;
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ParameterError("--config needs a file");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> out{args[0]};
  if (config) {
    auto tokens = config_tokens(*config, *command);
    out.insert(out.end(), tokens.begin(), tokens.end());
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// Effective value of every option on the subcommand, for manifests.
json effective_options(const CLI::App& command) {
  json out = json::object();
  for (const auto* opt : command.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      out[name] = opt->as<std::string>();
    } else if (!opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    } else {
      out[name] = nullptr;
    }
  }
  return out;
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::runtime, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path manifest_path(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

json invocation(const CLI::App& command) {
  return {{"command", command.get_name()},
          {"options", effective_options(command)},
          {"kernel_isa", std::string(kernels::isa_name(kernels::active_isa()))}};
}

// Enum flags are parsed as strings so manifests echo the name, not the value.
template <class T>
T lookup(const std::map<std::string, T>& table, const std::string& name) {
  return table.at(name);
}

template <class T>
CLI::IsMember names(const std::map<std::string, T>& table) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : table) keys.push_back(k);
  return CLI::IsMember(keys);
}

const std::map<std::string, MaskStrategy> kStrategies{{"geometric", MaskStrategy::geometric},
                                                      {"bernoulli", MaskStrategy::bernoulli}};
const std::map<std::string, Precision> kPrecisions{{"f32", Precision::f32}, {"f64", Precision::f64}};
const std::map<std::string, NormalizationScope> kScopes{{"train", NormalizationScope::train_only},
                                                        {"all", NormalizationScope::all_windows}};
const std::map<std::string, ThresholdPolicy> kPolicies{{"calibration", ThresholdPolicy::calibration},
                                                       {"test", ThresholdPolicy::test}};

void add_model_options(CLI::App* cmd, ModelConfig& m) {
  cmd->add_option("--latent-width", m.latent_width, "D");
  cmd->add_option("--heads", m.heads, "H");
  cmd->add_option("--query-width", m.query_width, "D_q (also key width)");
  cmd->add_option("--value-width", m.value_width, "D_v");
  cmd->add_option("--layers", m.layers);
  cmd->add_option("--ffn-width", m.ffn_width);
  cmd->add_option("--dropout", m.dropout_rate);
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  SynthConfig config;
  fs::path output;
};

void run_synth(const SynthArgs& a, const CLI::App& cmd) {
  const auto recordings = synth_generate(a.config);
  fs::create_directories(a.output);
  std::size_t anomalous = 0;
  for (const auto& r : recordings) {
    write_recording(r, a.output);
    anomalous += r.anomaly_intervals.empty() ? 0 : 1;
  }
  json manifest = invocation(cmd);
  manifest["seed"] = a.config.seed;
  manifest["recordings"] = recordings.size();
  manifest["anomalous"] = anomalous;
  write_json(manifest, a.output / "manifest.json");
  std::printf("wrote %zu recordings (%zu anomalous) to %s\n", recordings.size(), anomalous, a.output.c_str());
}

// ------------------------------------------------------------------ preprocess

struct PreprocessArgs {
  PreprocessConfig config;
  fs::path input, output;
  double target_hz = 0.0;
  bool no_filter = false;
  bool supervised = false;
  std::string normalize = "train";
};

void run_preprocess(PreprocessArgs a, const CLI::App& cmd) {
  if (a.target_hz > 0.0) a.config.target_hz = a.target_hz;
  a.config.apply_filter = !a.no_filter;
  a.config.unsupervised = !a.supervised;
  a.config.normalization = lookup(kScopes, a.normalize);
  const auto ws = preprocess(ingest(a.input), a.config);
  save_windows(ws, a.output);

  json manifest = invocation(cmd);
  manifest["seed"] = a.config.seed;
  manifest["preprocess"] = a.config.to_json();
  manifest["windows"] = windows_manifest(ws);
  manifest["windows_sha256"] = sha256_file(a.output);
  write_json(manifest, manifest_path(a.output));

  std::printf("%zu windows of %zux%zu\n", ws.count(), ws.length, ws.channels);
  for (Split s : {Split::train, Split::val, Split::test}) {
    std::printf("  %-5s label0=%zu label1=%zu\n", to_string(s).c_str(), ws.indices(s, 0).size(),
                ws.indices(s, 1).size());
  }
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  ModelConfig model;
  TrainConfig train;
  fs::path windows, output;
  std::string strategy = "geometric", precision = "f32";
  bool quiet = false;
};

void run_train(TrainArgs a, const CLI::App& cmd) {
  const auto ws = load_windows(a.windows);
  a.model.window_length = ws.length;
  a.model.channels = ws.channels;
  a.model.seed = a.train.seed;
  a.train.mask.seed = a.train.seed;
  a.train.mask.strategy = lookup(kStrategies, a.strategy);
  a.train.precision = lookup(kPrecisions, a.precision);
  auto result = train(ws, a.model, a.train, [&](const EpochRecord& e) {
    if (!a.quiet) std::printf("epoch %zu train %.6f val %.6f\n", e.epoch, e.train_loss, e.val_loss);
    std::fflush(stdout);
  });
  save_checkpoint(result.params, a.output);
  json manifest = run_manifest(a.model, a.train, result.report, sha256_file(a.output));
  manifest["invocation"] = invocation(cmd);
  manifest["windows_sha256"] = sha256_file(a.windows);
  write_json(manifest, manifest_path(a.output));
  std::printf("best epoch %zu val %.6f (%s)\n", result.report.best_epoch, result.report.best_val_loss,
              result.report.stop_reason.c_str());
}

// ------------------------------------------------------------------ score

struct ScoreArgs {
  fs::path windows, checkpoint, output;
  std::string split = "test";
};

void run_score(const ScoreArgs& a, const CLI::App& cmd) {
  const auto ws = load_windows(a.windows);
  ModelConfig expected = load_checkpoint(a.checkpoint).config;
  if (expected.window_length != ws.length || expected.channels != ws.channels) {
    throw FormatError(a.checkpoint.string() + ": model expects " + std::to_string(expected.window_length) + "x" +
                      std::to_string(expected.channels) + " windows, " + a.windows.string() + " has " +
                      std::to_string(ws.length) + "x" + std::to_string(ws.channels));
  }
  const auto params = load_checkpoint(a.checkpoint, expected);
  std::vector<std::size_t> indices;
  if (a.split == "all") {
    indices.resize(ws.count());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    indices = ws.indices(a.split == "train" ? Split::train : a.split == "val" ? Split::val : Split::test);
  }
  const auto scores = score_set(params, ws, indices, worker_threads());
  write_scores_csv(scores, a.output);

  json manifest = invocation(cmd);
  manifest["seed"] = params.config.seed;
  manifest["count"] = scores.size();
  manifest["checkpoint_sha256"] = sha256_file(a.checkpoint);
  manifest["windows_sha256"] = sha256_file(a.windows);
  manifest["scores_sha256"] = sha256_file(a.output);
  write_json(manifest, manifest_path(a.output));
  std::printf("scored %zu %s windows\n", scores.size(), a.split.c_str());
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  fs::path scores, calibration, output;
  std::string policy = "calibration";
};

void run_evaluate(const EvaluateArgs& a, const CLI::App& cmd) {
  const auto policy = lookup(kPolicies, a.policy);
  const auto test = read_scores_csv(a.scores);
  ScoreSet calibration;
  if (policy == ThresholdPolicy::calibration) {
    if (a.calibration.empty()) throw ParameterError("--policy calibration needs --calibration SCORES");
    calibration = read_scores_csv(a.calibration);
  }
  const auto report = evaluate(calibration, test, policy);
  json out = report.to_json();
  out["config"] = invocation(cmd);
  out["scores_sha256"] = sha256_file(a.scores);
  if (!a.calibration.empty()) out["calibration_sha256"] = sha256_file(a.calibration);
  write_json(out, a.output);
  std::printf("AUC %.4f ± %.4f  balanced accuracy %.4f ± %.4f  threshold %g\n", report.auc.value, report.auc.ci,
              report.balanced_accuracy.value, report.balanced_accuracy.ci, report.threshold);
}

// ------------------------------------------------------------------ maskdemo

struct MaskDemoArgs {
  std::size_t length = 128, channels = 4;
  MaskSpec spec;
  std::string strategy = "geometric";
  fs::path output;
};

void run_maskdemo(MaskDemoArgs a) {
  a.spec.strategy = lookup(kStrategies, a.strategy);
  std::mt19937_64 rng(a.spec.seed);
  const auto mask = draw_mask(a.length, a.channels, a.spec, rng);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!a.output.empty()) {
    file.open(a.output);
    if (!file) throw Error(ErrorCategory::runtime, "cannot write " + a.output.string());
    out = &file;
  }
  for (std::size_t t = 0; t < mask.length; ++t) {
    for (std::size_t m = 0; m < mask.channels; ++m) *out << (m ? "," : "") << int(mask.at(t, m));
    *out << '\n';
  }
  const auto stats = mask_stats(mask);
  std::fprintf(a.output.empty() ? stderr : stdout,
               "strategy=%s masked_fraction=%.6f mean_masked_run=%.4f mean_unmasked_run=%.4f "
               "expected_unmasked_run=%.4f\n",
               to_string(a.spec.strategy).c_str(), stats.masked_fraction, stats.mean_masked_run,
               stats.mean_unmasked_run, a.spec.mean_unmasked_run());
}

// ------------------------------------------------------------------ gradcheck

struct GradcheckArgs {
  ModelConfig model;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto report = masked_loss_gradient_check(a.model, a.seed, a.tolerance);
  for (const auto& e : report.entries) {
    std::printf("%-28s %6zu  rel %.3e  %s\n", e.name.c_str(), e.elements, e.max_rel_error, e.passed ? "ok" : "FAIL");
  }
  std::printf("%s (tolerance %g)\n", report.passed() ? "passed" : "FAILED", report.tolerance);
  require_passed(report);
  return 0;
}

// ------------------------------------------------------------------ attn

struct AttnArgs {
  fs::path windows, checkpoint, output;
  std::size_t window = 0;
  bool ppm = false;
};

void write_ppm(std::span<const float> matrix, std::size_t n, const fs::path& path) {
  const float peak = std::max(*std::max_element(matrix.begin(), matrix.end()), 1e-12f);
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << n << ' ' << n << "\n255\n";
  for (float v : matrix) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * v / peak))));
}

void run_attn(const AttnArgs& a, const CLI::App& cmd) {
  const auto ws = load_windows(a.windows);
  const auto params = load_checkpoint(a.checkpoint);
  if (params.config.window_length != ws.length || params.config.channels != ws.channels) {
    throw FormatError(a.checkpoint.string() + ": model shape does not match " + a.windows.string());
  }
  if (a.window >= ws.count()) {
    throw ParameterError("--window " + std::to_string(a.window) + " out of range (" + std::to_string(ws.count()) +
                         " windows)");
  }
  const auto x_view = ws.window(a.window);
  const Tensor<float> x({1, ws.length, ws.channels}, std::vector<float>(x_view.begin(), x_view.end()));
  const auto result = infer(x, params, true);

  const std::size_t t_len = ws.length, heads = params.config.heads;
  fs::create_directories(a.output);
  json files = json::array();
  for (std::size_t l = 0; l < result.attention.size(); ++l) {
    const auto data = result.attention[l].data();
    for (std::size_t h = 0; h < heads; ++h) {
      const std::span<const float> matrix = data.subspan(h * t_len * t_len, t_len * t_len);
      const std::string stem = "layer" + std::to_string(l) + "_head" + std::to_string(h);
      std::ofstream csv(a.output / (stem + ".csv"));
      char buf[32];
      for (std::size_t i = 0; i < t_len; ++i) {
        for (std::size_t j = 0; j < t_len; ++j) {
          std::snprintf(buf, sizeof buf, "%.9g", double(matrix[i * t_len + j]));
          csv << (j ? "," : "") << buf;
        }
        csv << '\n';
      }
      if (a.ppm) write_ppm(matrix, t_len, a.output / (stem + ".ppm"));
      files.push_back(stem + ".csv");
    }
  }

  std::vector<double> channel_error(ws.channels, 0.0);
  const auto x_hat = result.reconstruction.data();
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t m = 0; m < ws.channels; ++m)
      channel_error[m] += std::abs(double(x_view[t * ws.channels + m]) - double(x_hat[t * ws.channels + m])) / t_len;
  const auto worst = std::size_t(std::max_element(channel_error.begin(), channel_error.end()) - channel_error.begin());

  json manifest = invocation(cmd);
  manifest["window"] = a.window;
  manifest["label"] = ws.labels[a.window];
  manifest["layers"] = result.attention.size();
  manifest["heads"] = heads;
  manifest["files"] = files;
  manifest["channel_errors"] = channel_error;
  manifest["max_error_channel"] = worst;
  manifest["checkpoint_sha256"] = sha256_file(a.checkpoint);
  write_json(manifest, a.output / "attention.json");
  std::printf("wrote %zu heatmaps to %s\nmax_error_channel=%zu\n", files.size(), a.output.c_str(), worst);
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Masked transformer autoencoder for multivariate time-series anomaly detection"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic EEG-like corpus");
  synth_cmd->add_option("--output", synth.output, "Dataset directory")->required();
  synth_cmd->add_option("--normal", synth.config.normal_segments);
  synth_cmd->add_option("--anomalous", synth.config.anomalous_segments);
  synth_cmd->add_option("--length", synth.config.segment_length, "Samples per segment");
  synth_cmd->add_option("--channels", synth.config.channels);
  synth_cmd->add_option("--rate-hz", synth.config.rate_hz);
  synth_cmd->add_option("--seed", synth.config.seed)->required();

  PreprocessArgs prep;
  auto* prep_cmd = app.add_subcommand("preprocess", "Filter, resample, window, split and normalize a dataset");
  prep_cmd->add_option("--input", prep.input, "Dataset directory of CSV + .meta.json pairs")->required();
  prep_cmd->add_option("--output", prep.output, "Windows container")->required();
  prep_cmd->add_option("--window-len", prep.config.window_length);
  prep_cmd->add_option("--target-hz", prep.target_hz, "Default: lowest rate in the dataset");
  prep_cmd->add_option("--low", prep.config.filter.low_hz);
  prep_cmd->add_option("--high", prep.config.filter.high_hz);
  prep_cmd->add_option("--order", prep.config.filter.order);
  prep_cmd->add_flag("--no-filter", prep.no_filter, "Skip the bandpass");
  prep_cmd->add_option("--overlap", prep.config.overlap);
  prep_cmd->add_option("--label-fraction", prep.config.label_fraction);
  prep_cmd->add_option("--channels", prep.config.channels, "Default: most channels in the dataset");
  prep_cmd->add_option("--train-frac", prep.config.ratios.train);
  prep_cmd->add_option("--val-frac", prep.config.ratios.val);
  prep_cmd->add_option("--test-frac", prep.config.ratios.test);
  prep_cmd->add_flag("--supervised-split", prep.supervised, "Allow anomalous windows in the train split");
  prep_cmd->add_option("--normalize", prep.normalize, "Statistics from train or all windows")->check(names(kScopes));
  prep_cmd->add_option("--seed", prep.config.seed);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Masked-reconstruction training on normal windows");
  train_cmd->add_option("--windows", tr.windows)->required();
  train_cmd->add_option("--output", tr.output, "Checkpoint path")->required();
  add_model_options(train_cmd, tr.model);
  train_cmd->add_option("--batch-size", tr.train.batch_size);
  train_cmd->add_option("--epochs", tr.train.max_epochs);
  train_cmd->add_option("--learning-rate", tr.train.learning_rate);
  train_cmd->add_option("--beta1", tr.train.beta1);
  train_cmd->add_option("--beta2", tr.train.beta2);
  train_cmd->add_option("--epsilon", tr.train.epsilon);
  train_cmd->add_option("--patience", tr.train.patience);
  train_cmd->add_option("--mask-ratio", tr.train.mask.ratio, "r");
  train_cmd->add_option("--mask-run", tr.train.mask.mean_masked_run, "l_m");
  train_cmd->add_option("--mask-strategy", tr.strategy)->check(names(kStrategies));
  train_cmd->add_option("--precision", tr.precision)->check(names(kPrecisions));
  train_cmd->add_flag("--frozen", tr.train.frozen, "Diagnostic: never update parameters");
  train_cmd->add_flag("--quiet", tr.quiet);
  train_cmd->add_option("--seed", tr.train.seed)->required();

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "Reconstruction-error anomaly scores");
  score_cmd->add_option("--windows", sc.windows)->required();
  score_cmd->add_option("--checkpoint", sc.checkpoint)->required();
  score_cmd->add_option("--output", sc.output, "scores.csv")->required();
  score_cmd->add_option("--split", sc.split)->check(CLI::IsMember({"train", "val", "test", "all"}));

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Threshold and metrics with confidence intervals");
  eval_cmd->add_option("--scores", ev.scores, "Test scores")->required();
  eval_cmd->add_option("--calibration", ev.calibration, "Scores the threshold is chosen on");
  eval_cmd->add_option("--policy", ev.policy)->check(names(kPolicies));
  eval_cmd->add_option("--output", ev.output, "report.json")->required();

  MaskDemoArgs md;
  auto* mask_cmd = app.add_subcommand("maskdemo", "Draw one mask as CSV and report its statistics");
  mask_cmd->add_option("--length", md.length);
  mask_cmd->add_option("--channels", md.channels);
  mask_cmd->add_option("--ratio", md.spec.ratio);
  mask_cmd->add_option("--run", md.spec.mean_masked_run);
  mask_cmd->add_option("--strategy", md.strategy)->check(names(kStrategies));
  mask_cmd->add_option("--seed", md.spec.seed);
  mask_cmd->add_option("--output", md.output, "CSV path (default stdout)");

  GradcheckArgs gc;
  gc.model.window_length = 8;
  gc.model.channels = 2;
  gc.model.latent_width = 8;
  gc.model.heads = 2;
  gc.model.query_width = 4;
  gc.model.value_width = 4;
  gc.model.layers = 1;
  gc.model.ffn_width = 16;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  grad_cmd->add_option("--window-len", gc.model.window_length);
  grad_cmd->add_option("--channels", gc.model.channels);
  add_model_options(grad_cmd, gc.model);
  grad_cmd->add_option("--tolerance", gc.tolerance);
  grad_cmd->add_option("--seed", gc.seed);

  AttnArgs at;
  auto* attn_cmd = app.add_subcommand("attn", "Export attention heatmaps for one window");
  attn_cmd->add_option("--windows", at.windows)->required();
  attn_cmd->add_option("--checkpoint", at.checkpoint)->required();
  attn_cmd->add_option("--window", at.window, "Window index");
  attn_cmd->add_option("--output", at.output, "Directory")->required();
  attn_cmd->add_flag("--ppm", at.ppm, "Also write grayscale PPM images");

  auto fail = [](ErrorCategory category, const std::string& message) {
    std::fflush(stdout);
    std::fprintf(stderr, "error[%s]: %s\n", category_name(category), message.c_str());
    return static_cast<int>(category);
  };

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args), app);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      return fail(ErrorCategory::config, e.what());
    }

    if (*synth_cmd) run_synth(synth, *synth_cmd);
    if (*prep_cmd) run_preprocess(prep, *prep_cmd);
    if (*train_cmd) run_train(tr, *train_cmd);
    if (*score_cmd) run_score(sc, *score_cmd);
    if (*eval_cmd) run_evaluate(ev, *eval_cmd);
    if (*mask_cmd) run_maskdemo(md);
    if (*grad_cmd) return run_gradcheck(gc);
    if (*attn_cmd) run_attn(at, *attn_cmd);
    return 0;
  } catch (const Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ErrorCategory::input, e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCategory::runtime, e.what());
  }
}
