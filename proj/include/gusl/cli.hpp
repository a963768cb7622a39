#pragma once

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gusl/dcp.hpp"
#include "gusl/error.hpp"
#include "gusl/harness.hpp"
#include "gusl/image_io.hpp"
#include "gusl/model_io.hpp"
#include "gusl/parallel.hpp"
#include "gusl/ushape.hpp"

namespace gusl::cli {

namespace fs = std::filesystem;

inline std::string format(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

// Flat key=value lines; '#' starts a comment. Keys are flag names without
// the leading dashes.
inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    if (key.empty()) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

inline const std::set<std::string>& subcommand_names() {
  static const std::set<std::string> names{"synth", "train", "dehaze", "eval", "inspect"};
  return names;
}

// Config entries become ordinary flags placed ahead of the user's own, so
// with last-value-wins parsing the command line overrides the file.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty()) return args;
  static const std::set<std::string> global{"seed", "threads", "verbose"};
  std::vector<std::string> before, after;
  for (const auto& [k, v] : read_config(config)) {
    if (k == "config") continue;
    (global.count(k) ? before : after).push_back("--" + k + "=" + v);
  }
  std::vector<std::string> out;
  std::size_t sub = args.size();
  for (std::size_t i = 0; i < args.size(); ++i)
    if (subcommand_names().count(args[i])) {
      sub = i;
      break;
    }
  out.insert(out.end(), before.begin(), before.end());
  for (std::size_t i = 0; i < args.size(); ++i) {
    out.push_back(args[i]);
    if (i == sub) out.insert(out.end(), after.begin(), after.end());
  }
  if (sub == args.size()) out.insert(out.end(), after.begin(), after.end());
  return out;
}

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  int threads = 0;
  bool verbose = false;
};

class Logger {
 public:
  Logger(std::ostream& err, bool on) : err_(err), on_(on), start_(std::chrono::steady_clock::now()) {}
  void operator()(const std::string& msg) const {
    if (!on_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    err_ << format("[%8.2fs] ", s) << msg << '\n';
  }

 private:
  std::ostream& err_;
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

struct SynthOptions {
  std::string input;
  int procedural = 0;
  int size = 128;
  std::string output;
  SynthesisRanges ranges;
};

inline int cmd_synth(const SynthOptions& o, const Globals& g, std::ostream& out, const Logger& log) {
  detail::require(o.input.empty() != (o.procedural == 0), "synth: give exactly one of --input or --procedural");
  o.ranges.validate();
  std::vector<ImageBuffer> clears;
  std::vector<std::string> clear_paths;
  const fs::path out_dir(o.output);
  std::error_code ec;
  fs::create_directories(out_dir / "hazy", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "hazy").string() + "'");

  if (!o.input.empty()) {
    if (!fs::is_directory(o.input)) throw IoError("input directory '" + o.input + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.input))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IntegrityError("no images found in '" + o.input + "'");
    clears.resize(files.size());
    parallel_for(files.size(), [&](std::size_t i) { clears[i] = load_image(files[i].string()); });
    for (const auto& f : files) clear_paths.push_back(fs::proximate(f, out_dir).generic_string());
  } else {
    detail::require(o.procedural > 0 && o.size >= 8, "synth: --procedural must be > 0 and --size >= 8");
    fs::create_directories(out_dir / "clear", ec);
    if (ec) throw IoError("cannot create '" + (out_dir / "clear").string() + "'");
    clears.resize(static_cast<std::size_t>(o.procedural));
    parallel_for(clears.size(), [&](std::size_t i) {
      clears[i] = procedural_scene(o.size, mix_seed(g.seed, 0xc1ea7000ULL + i));
      save_image(clears[i], (out_dir / "clear" / format("%05zu.png", i)).string());
    });
    for (std::size_t i = 0; i < clears.size(); ++i) clear_paths.push_back("clear/" + format("%05zu.png", i));
  }
  log(format("synthesizing %zu pairs", clears.size()));

  const auto pairs = make_synthetic_set(clears, o.ranges, g.seed);
  std::vector<PairEntry> entries(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const std::string name = format("hazy/%05zu.png", i);
    save_image(pairs[i].hazy, (out_dir / name).string());
    entries[i].clear = clear_paths[i];
    entries[i].hazy = name;
    entries[i].beta = pairs[i].beta;
    entries[i].airlight = pairs[i].airlight;
  });
  const std::string manifest = (out_dir / "manifest.txt").string();
  write_manifest(manifest, entries);
  out << "wrote " << entries.size() << " pairs to " << manifest << '\n';
  return 0;
}

struct TrainOptions {
  std::string manifest;
  std::string output;
  std::string split = "train";
  double train_fraction = 0.8;
  TrainConfig cfg;
  bool no_omega = false;
  bool ablation = false;
  std::string report;
};

inline nlohmann::json train_report_json(const TrainResult& r) {
  nlohmann::json j;
  j["train_pairs"] = r.report.train_indices.size();
  j["validation_pairs"] = r.report.val_indices.size();
  j["omega_labels"] = r.report.omega_labels;
  for (const auto& l : r.report.levels) {
    nlohmann::json lj;
    lj["resolution"] = l.resolution;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& ch = l.channels[c];
      lj["channels"].push_back({{"channel", std::string(1, "RGB"[c])},
                                {"train_mse", ch.train_mse},
                                {"val_mse_base", ch.val_mse_base},
                                {"val_mse_model", ch.val_mse_model},
                                {"val_mse_raw", ch.val_mse_raw},
                                {"val_mse_lnt", ch.val_mse_lnt},
                                {"val_mse_combined", ch.val_mse_combined},
                                {"selected", ch.selected},
                                {"level2_dim", ch.level2_dim},
                                {"blend", ch.blend},
                                {"active", ch.active}});
    }
    j["levels"].push_back(lj);
  }
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write report '" + path + "'");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("cannot write report '" + path + "'");
}

inline int cmd_train(TrainOptions o, const Globals& g, std::ostream& out, const Logger& log) {
  o.cfg.seed = g.seed;
  o.cfg.fit_omega = !o.no_omega;
  o.cfg.validate();
  const PairSet set = load_pair_set(o.manifest, g.seed, o.train_fraction);
  const auto idx = split_indices(set, o.split);
  log(format("loading %zu pairs", idx.size()));
  if (idx.size() < 8) throw IntegrityError(format("train: split '%s' has %zu pairs; at least 8 are required", o.split.c_str(), idx.size()));
  const auto pairs = load_pairs(set, idx);
  log("training");
  const TrainResult r = train_pipeline(pairs, o.cfg);
  save_model(r.model, o.output);
  log("model written to " + o.output);

  // Mean squared error on the 8-bit scale.
  constexpr double k8 = 255.0 * 255.0;
  out << format("pairs: %zu train, %zu validation\n", r.report.train_indices.size(), r.report.val_indices.size());
  out << format("%-7s %-3s %12s %12s %12s\n", "level", "ch", "train MSE", "val MSE", "val base");
  for (const auto& l : r.report.levels)
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& ch = l.channels[c];
      out << format("%-7s %-3c %12.4f %12.4f %12.4f\n", format("%dx%d", l.resolution, l.resolution).c_str(), "RGB"[c],
                    ch.train_mse * k8, ch.val_mse_model * k8, ch.val_mse_base * k8);
    }
  if (o.ablation) {
    out << "\nvalidation residual MSE by feature set (finest level first)\n";
    out << format("%-7s %-3s %12s %12s %12s\n", "level", "ch", "Raw", "L2", "Raw+L1+L2");
    for (auto it = r.report.levels.rbegin(); it != r.report.levels.rend(); ++it)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto& ch = it->channels[c];
        out << format("%-7s %-3c %12.4f %12.4f %12.4f\n", format("%dx%d", it->resolution, it->resolution).c_str(),
                      "RGB"[c], ch.val_mse_raw * k8, ch.val_mse_lnt * k8, ch.val_mse_combined * k8);
      }
  }
  if (!o.report.empty()) write_json(o.report, train_report_json(r));
  out << "model written to " << o.output << '\n';
  return 0;
}

struct DehazeOptions {
  std::string model;
  std::vector<std::string> inputs;
  std::string output;
  bool dcp_only = false;
  double omega = 0.95;
};

inline int cmd_dehaze(const DehazeOptions& o, const Globals&, std::ostream& out, const Logger& log) {
  detail::require(!o.inputs.empty(), "dehaze: no input images");
  detail::require(!o.model.empty() || o.dcp_only, "dehaze: --model is required unless --dcp-only is given");
  std::optional<UShapeModel> model;
  if (!o.model.empty()) model = load_model(o.model);
  DcpParams fixed;
  fixed.omega = o.omega;

  const bool to_dir = o.inputs.size() > 1 || fs::is_directory(o.output) || o.output.empty() ||
                      (!o.output.empty() && o.output.back() == '/');
  std::vector<std::string> targets;
  for (const auto& in : o.inputs) {
    if (!to_dir) {
      targets.push_back(o.output);
      continue;
    }
    const fs::path dir = o.output.empty() ? fs::path(".") : fs::path(o.output);
    targets.push_back((dir / (fs::path(in).stem().string() + "_dehazed.png")).string());
  }
  if (to_dir && !o.output.empty()) {
    std::error_code ec;
    fs::create_directories(o.output, ec);
  }
  std::set<std::string> unique(targets.begin(), targets.end());
  detail::require(unique.size() == targets.size(), "dehaze: two inputs map to the same output file");

  for (std::size_t i = 0; i < o.inputs.size(); ++i) {
    const ImageBuffer img = load_image(o.inputs[i]);
    ImageBuffer result;
    if (o.dcp_only)
      result = model ? infer_dcp_only(img, *model) : dehaze_dcp(img, fixed);
    else
      result = infer(img, *model);
    save_image(result, targets[i]);
    log(o.inputs[i] + " -> " + targets[i]);
    out << targets[i] << '\n';
  }
  return 0;
}

struct EvalOptions {
  std::string model;
  std::string manifest;
  std::string split = "test";
  double train_fraction = 0.8;
  std::string report;
};

inline nlohmann::json score_report_json(const ScoreReport& r) {
  nlohmann::json j;
  j["split"] = r.split;
  j["count"] = r.images.size();
  j["mean"] = {{"model", {{"psnr", r.model_psnr}, {"ssim", r.model_ssim}}},
               {"dcp", {{"psnr", r.dcp_psnr}, {"ssim", r.dcp_ssim}}},
               {"hazy", {{"psnr", r.hazy_psnr}, {"ssim", r.hazy_ssim}}}};
  j["images"] = nlohmann::json::array();
  for (const auto& s : r.images)
    j["images"].push_back({{"name", s.name},
                           {"model", {{"psnr", s.model_psnr}, {"ssim", s.model_ssim}}},
                           {"dcp", {{"psnr", s.dcp_psnr}, {"ssim", s.dcp_ssim}}},
                           {"hazy", {{"psnr", s.hazy_psnr}, {"ssim", s.hazy_ssim}}}});
  return j;
}

inline int cmd_eval(const EvalOptions& o, const Globals& g, std::ostream& out, const Logger& log) {
  const UShapeModel model = load_model(o.model);
  const PairSet set = load_pair_set(o.manifest, g.seed, o.train_fraction);
  log("evaluating split " + o.split);
  const ScoreReport r = evaluate(model, set, o.split);
  if (g.verbose)
    for (const auto& s : r.images)
      out << format("%-40s model %7.3f/%.4f  dcp %7.3f/%.4f  hazy %7.3f/%.4f\n", s.name.c_str(), s.model_psnr,
                    s.model_ssim, s.dcp_psnr, s.dcp_ssim, s.hazy_psnr, s.hazy_ssim);
  out << format("split %s: %zu images\n", r.split.c_str(), r.images.size());
  out << format("%-10s %10s %8s\n", "method", "PSNR", "SSIM");
  out << format("%-10s %10.4f %8.4f\n", "model", r.model_psnr, r.model_ssim);
  out << format("%-10s %10.4f %8.4f\n", "dcp-only", r.dcp_psnr, r.dcp_ssim);
  out << format("%-10s %10.4f %8.4f\n", "hazy", r.hazy_psnr, r.hazy_ssim);
  if (!o.report.empty()) write_json(o.report, score_report_json(r));
  return 0;
}

inline int cmd_inspect(const std::string& path, std::ostream& out) {
  const UShapeModel model = load_model(path);
  const ParameterReport p = report_parameters(model);
  out << "format version " << model.version << '\n';
  out << "input size " << model.input_size << ", " << model.levels.size() << " levels, omega "
      << (model.omega_model ? "regressed" : format("fixed %.3f", model.dcp.omega)) << '\n';
  out << format("%-10s %10s %10s %10s %12s %12s\n", "level", "saab", "rft", "lnt", "trees", "total");
  for (const auto& l : p.levels)
    out << format("%-10s %10zu %10zu %10zu %12zu %12zu\n", format("%dx%d", l.resolution, l.resolution).c_str(), l.saab,
                  l.rft, l.lnt, l.trees, l.total());
  out << format("%-10s %12zu\n", "omega", p.omega_forest);
  out << format("%-10s %12zu\n", "dcp", p.dcp);
  out << format("%-10s %12zu\n", "total", p.total());
  return 0;
}

// Exit codes: 0 success, 1 usage, 2 IO, 3 data or model integrity.
inline int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dehazing with a DCP front end and coarse-to-fine tree regressors", "gusl-dehaze"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed for splits, sampling and synthesis");
  app.add_option("--config", g.config, "key=value file; entries act as flags, command line wins");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose,-v", g.verbose, "Progress messages on stderr");

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Make hazy/clear pairs and a manifest");
  synth->add_option("--input", so.input, "Directory of clear images");
  synth->add_option("--procedural", so.procedural, "Generate this many clear scenes instead of reading --input");
  synth->add_option("--size", so.size, "Side of procedural scenes")->capture_default_str();
  synth->add_option("--output,-o", so.output, "Output directory")->required();
  synth->add_option("--beta-min", so.ranges.beta_min)->capture_default_str();
  synth->add_option("--beta-max", so.ranges.beta_max)->capture_default_str();
  synth->add_option("--airlight-min", so.ranges.airlight_min)->capture_default_str();
  synth->add_option("--airlight-max", so.ranges.airlight_max)->capture_default_str();
  synth->add_option("--airlight-jitter", so.ranges.chroma_jitter)->capture_default_str();

  TrainOptions to;
  auto* train = app.add_subcommand("train", "Fit the omega regressor and the coarse-to-fine model");
  train->add_option("--manifest,-m", to.manifest, "Pair manifest")->required();
  train->add_option("--output,-o", to.output, "Model file to write")->required();
  train->add_option("--split", to.split, "Manifest split used for training (train, test, all)")->capture_default_str();
  train->add_option("--train-fraction", to.train_fraction, "Share of clear images in the train split")->capture_default_str();
  train->add_option("--size", to.cfg.input_size, "Working resolution")->capture_default_str();
  train->add_option("--levels", to.cfg.levels, "Pyramid levels")->capture_default_str();
  train->add_option("--rounds", to.cfg.gbt.rounds, "Boosting rounds per regressor")->capture_default_str();
  train->add_option("--depth", to.cfg.gbt.max_depth, "Tree depth")->capture_default_str();
  train->add_option("--eta", to.cfg.gbt.eta, "Learning rate")->capture_default_str();
  train->add_option("--lambda", to.cfg.gbt.lambda, "Leaf L2 penalty")->capture_default_str();
  train->add_option("--gamma", to.cfg.gbt.gamma, "Split penalty")->capture_default_str();
  train->add_option("--min-child-weight", to.cfg.gbt.min_child_weight)->capture_default_str();
  train->add_option("--subsample", to.cfg.pixel_subsample, "Fraction of pixels per image used as rows")->capture_default_str();
  train->add_option("--rft-keep", to.cfg.rft_keep, "Saab channels kept by the feature test")->capture_default_str();
  train->add_option("--rft-bins", to.cfg.rft_bins)->capture_default_str();
  train->add_option("--lnt-bins", to.cfg.lnt_bins, "Target bins for Level-2 features")->capture_default_str();
  train->add_option("--val-fraction", to.cfg.val_fraction, "Share of training pairs held out for blending")->capture_default_str();
  train->add_option("--max-patches", to.cfg.max_patches_per_image, "Saab fitting patches per image (0 = all)")->capture_default_str();
  train->add_option("--omega", to.cfg.dcp.omega, "Fixed omega when the regressor is off")->capture_default_str();
  train->add_flag("--no-omega", to.no_omega, "Use the fixed omega instead of fitting the regressor");
  train->add_flag("--ablation", to.ablation, "Print validation MSE for Raw, L2 and Raw+L1+L2 features");
  train->add_option("--report", to.report, "Write the training report as JSON");

  DehazeOptions dopt;
  auto* dehaze = app.add_subcommand("dehaze", "Dehaze images");
  dehaze->add_option("--model", dopt.model, "Model file");
  dehaze->add_option("--output,-o", dopt.output, "Output file, or directory for several inputs");
  dehaze->add_flag("--dcp-only", dopt.dcp_only, "Run the DCP stage alone");
  dehaze->add_option("--omega", dopt.omega, "Omega for --dcp-only without a model")->capture_default_str();
  dehaze->add_option("inputs", dopt.inputs, "Input images")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "Score a model against a manifest split");
  eval->add_option("--model", eo.model, "Model file")->required();
  eval->add_option("--manifest,-m", eo.manifest, "Pair manifest")->required();
  eval->add_option("--split", eo.split, "train, test or all")->capture_default_str();
  eval->add_option("--train-fraction", eo.train_fraction)->capture_default_str();
  eval->add_option("--report", eo.report, "Write the scores as JSON");

  std::string inspect_model;
  auto* inspect = app.add_subcommand("inspect", "Print model version and parameter counts");
  inspect->add_option("--model", inspect_model, "Model file")->required();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
    set_thread_count(g.threads);
    const Logger log(err, g.verbose);
    if (synth->parsed()) return cmd_synth(so, g, out, log);
    if (train->parsed()) return cmd_train(to, g, out, log);
    if (dehaze->parsed()) return cmd_dehaze(dopt, g, out, log);
    if (eval->parsed()) return cmd_eval(eo, g, out, log);
    if (inspect->parsed()) return cmd_inspect(inspect_model, out);
    return 1;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const IntegrityError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gusl::cli
