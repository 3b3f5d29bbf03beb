#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "sickfuse/errors.hpp"
#include "sickfuse/image.hpp"
#include "sickfuse/ingest.hpp"
#include "sickfuse/labeling.hpp"
#include "sickfuse/model.hpp"
#include "sickfuse/rng.hpp"
#include "sickfuse/stats.hpp"
#include "sickfuse/synth.hpp"
#include "sickfuse/trainer.hpp"
#include "sickfuse/window_cache.hpp"

namespace sickfuse::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// One `--key value` flag per config key; the seed key is driven by --seed instead.
class KeyFlags {
 public:
  KeyFlags(CLI::App* app, const std::string& default_text, const std::string& group) {
    std::istringstream in(default_text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(line.substr(0, eq));
      if (key == "seed") continue;
      auto& slot = values_[key];
      options_[key] = app->add_option("--" + key, slot, "default: " + trim(line.substr(eq + 1)))->group(group);
    }
  }

  /// Replaces the lines of `text` whose key was given on the command line.
  std::string apply(const std::string& text) const {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      const std::string key = eq == std::string::npos ? std::string() : trim(line.substr(0, eq));
      auto it = options_.find(key);
      if (it != options_.end() && it->second->count() > 0) {
        out << key << " = " << values_.at(key) << '\n';
      } else {
        out << line << '\n';
      }
    }
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
};

ModelConfig preset_config(const std::string& name, Task task) {
  if (name == "paper") {
    ModelConfig c;
    c.task = task;
    return c;
  }
  if (name == "toy") return ModelConfig::toy(task);
  if (name == "tiny") return ModelConfig::tiny(task);
  throw ConfigError("unknown preset '" + name + "' (paper|toy|tiny)");
}

struct ModelArgs {
  std::string file;
  std::string preset = "paper";
  std::unique_ptr<KeyFlags> flags;

  void add(CLI::App* app) {
    app->add_option("--model-config", file, "model config file (key = value)");
    app->add_option("--preset", preset, "base model config: paper|toy|tiny")->capture_default_str();
    flags = std::make_unique<KeyFlags>(app, ModelConfig{}.to_text(), "Model config");
  }

  /// preset, then file, then flags. The task key may come from any of them.
  ModelConfig resolve() const {
    ModelConfig base = preset_config(preset, Task::Classification);
    if (!file.empty()) base = parse_model_config(read_file(file), base);
    return parse_model_config(flags->apply(base.to_text()), base);
  }
};

struct TrainArgs {
  std::string file;
  bool desk = false;
  std::unique_ptr<KeyFlags> flags;

  void add(CLI::App* app) {
    app->add_option("--train-config", file, "training config file (key = value)");
    app->add_flag("--desk", desk, "start from desk-scale defaults (batch 32, 50 epochs)");
    flags = std::make_unique<KeyFlags>(app, TrainConfig{}.to_text(), "Training config");
  }

  TrainConfig resolve(const std::optional<std::uint64_t>& seed) const {
    TrainConfig base = desk ? TrainConfig::desk() : TrainConfig{};
    if (!file.empty()) base = parse_train_config(read_file(file), base);
    TrainConfig c = parse_train_config(flags->apply(base.to_text()), base);
    if (seed) c.seed = derive_seed(*seed, "train");
    return c;
  }
};

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args,
                           const std::optional<std::uint64_t>& seed) {
  RunManifest m;
  m.command = command;
  m.argv = args;
  m.master_seed = seed;
  m.started = utc_now();
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& root) {
  m.finished = utc_now();
  m.checksum_tree(root);
  m.write(root);
}

std::vector<const WindowData*> pointers(const std::vector<WindowData>& v) {
  std::vector<const WindowData*> out;
  for (const auto& w : v) out.push_back(&w);
  return out;
}

std::vector<WindowData> load_cache(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / "windows.csv")) throw IoError("no windows.csv in " + dir);
  auto windows = read_window_cache(dir);
  if (windows.empty()) throw EmptyError("window cache " + dir + " holds no windows");
  return windows;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// ---- commands ---------------------------------------------------------------------

int cmd_synth(const std::string& profile_file, KeyFlags& flags, const Common& c, const std::vector<std::string>& args,
              std::ostream& out) {
  SynthProfile base = profile_file.empty() ? SynthProfile{} : load_profile(profile_file);
  SynthProfile p = parse_profile(flags.apply(base.to_text()));
  if (c.seed) p.seed = derive_seed(*c.seed, "synth");
  RunManifest m = start_manifest("synth", args, c.seed);
  m.seeds["synth"] = p.seed;
  m.config["profile"] = p.to_text();
  if (!profile_file.empty()) m.inputs["profile"] = profile_file;
  const auto dirs = generate_dataset(p, c.out);
  m.outputs["dataset"] = c.out;
  finish_manifest(m, c.out);
  out << "wrote " << dirs.size() << " sessions to " << c.out << "\n";
  return kExitOk;
}

int cmd_preprocess(const std::string& data_dir, const ModelArgs& model_args, const Common& c,
                   const std::vector<std::string>& args, std::ostream& out) {
  const ModelConfig mc = model_args.resolve();
  const InputOptions options = mc.input_options();
  std::vector<fs::path> sessions;
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "eye.csv")) sessions.push_back(e.path());
  }
  std::sort(sessions.begin(), sessions.end());
  if (sessions.empty()) throw EmptyError("no session directories under " + data_dir);

  RunManifest m = start_manifest("preprocess", args, c.seed);
  m.config["model"] = mc.to_text();
  m.inputs["data"] = data_dir;
  const fs::path cache = c.out;
  fs::create_directories(cache / "windows");

  std::vector<WindowIndexRow> index;
  std::size_t kept = 0, segments = 0;
  ParseOptions parse;
  parse.frame_size = mc.frame_size;
  for (const auto& dir : sessions) {
    auto session = std::make_shared<const SessionRecord>(align_streams(parse_session(dir, parse)));
    const WindowSet set = build_windows(session);
    for (const auto& w : set.windows) {
      write_window_file(materialize(w, options), window_file(cache, w.id()));
      index.push_back({session->id(), w.t_report, w.fms, std::nullopt, false, ""});
    }
    for (const auto& d : set.dropped) index.push_back({session->id(), d.t_report, d.fms, std::nullopt, true, d.reason});
    kept += set.windows.size();
    segments += count_segments(set.windows);
  }
  // Severity in the index uses thresholds over the whole cache; training refits per fold.
  std::vector<double> scores;
  for (const auto& r : index) {
    if (!r.dropped) scores.push_back(r.fms);
  }
  if (scores.size() >= 4) {
    const QuantileThresholds q = compute_fms_quantiles(scores);
    for (auto& r : index) {
      if (!r.dropped) r.severity = classify_severity(r.fms, q);
    }
  }
  write_window_index(index, cache / "windows.csv");
  m.outputs["cache"] = cache.string();
  finish_manifest(m, cache);
  out << kept << " windows (" << index.size() - kept << " dropped), " << segments << " one-second segments from "
      << sessions.size() << " sessions\n";
  return kExitOk;
}

int cmd_train(const std::string& cache, const ModelArgs& model_args, const TrainArgs& train_args, const Common& c,
              const std::vector<std::string>& args, std::ostream& out) {
  const ModelConfig mc = model_args.resolve();
  const TrainConfig tc = train_args.resolve(c.seed);
  const auto windows = load_cache(cache);
  RunManifest m = start_manifest("train", args, c.seed);
  m.seeds["train"] = tc.seed;
  m.config["model"] = mc.to_text();
  m.config["train"] = tc.to_text();
  m.inputs["cache"] = cache;
  const fs::path root = c.out;
  fs::create_directories(root);
  TrainHooks hooks;
  hooks.on_epoch = [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss " << r.train_loss;
    if (r.val_loss) out << " val_loss " << *r.val_loss;
    out << "\n";
  };
  TrainedModel tm = train_on_all(windows, mc, tc, hooks);
  save_model(tm.model, tm.normalizer, tm.quantiles, root / "model.sfm");
  write_history_csv(tm.history, root / "history.csv");
  m.outputs["checkpoint"] = (root / "model.sfm").string();
  m.outputs["history"] = (root / "history.csv").string();
  finish_manifest(m, root);
  out << "stopped at epoch " << tm.history.stop_epoch << ", best epoch " << tm.history.best_epoch << "\n";
  return kExitOk;
}

int cmd_cv(const std::string& cache, const ModelArgs& model_args, const TrainArgs& train_args, const Common& c,
           const std::vector<std::string>& args, std::ostream& out) {
  const ModelConfig mc = model_args.resolve();
  const TrainConfig tc = train_args.resolve(c.seed);
  const auto windows = load_cache(cache);
  RunManifest m = start_manifest("cv", args, c.seed);
  m.seeds["train"] = tc.seed;
  m.config["model"] = mc.to_text();
  m.config["train"] = tc.to_text();
  m.inputs["cache"] = cache;
  const fs::path root = c.out;
  fs::create_directories(root);
  const EvalReport report = run_cv(windows, mc, tc);
  report.write_csv(root / "eval_report.csv");
  for (const auto& f : report.folds) {
    write_history_csv(f.history, root / ("history_fold" + std::to_string(f.fold) + ".csv"));
  }
  const std::string summary = report.summary();
  std::ofstream(root / "summary.txt") << summary;
  m.outputs["report"] = (root / "eval_report.csv").string();
  m.outputs["summary"] = (root / "summary.txt").string();
  finish_manifest(m, root);
  out << summary;
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& cache, const std::vector<std::string>& window_ids,
                const std::vector<std::string>& session_ids, const Common& c, const std::vector<std::string>& args,
                std::ostream& out) {
  ModelBundle bundle = load_model(checkpoint);
  const auto windows = load_cache(cache);
  const std::set<std::string> want_w(window_ids.begin(), window_ids.end());
  const std::set<std::string> want_s(session_ids.begin(), session_ids.end());
  std::vector<const WindowData*> chosen;
  std::set<std::string> found;
  for (const auto& w : windows) {
    const bool all = want_w.empty() && want_s.empty();
    if (all || want_w.count(w.id) || want_s.count(w.session_id)) {
      chosen.push_back(&w);
      found.insert(w.id);
      found.insert(w.session_id);
    }
  }
  for (const auto& id : want_w) {
    if (!found.count(id)) throw ConfigError("window '" + id + "' not in cache");
  }
  for (const auto& id : want_s) {
    if (!found.count(id)) throw ConfigError("session '" + id + "' not in cache");
  }

  RunManifest m = start_manifest("predict", args, c.seed);
  m.config["model"] = bundle.model.config().to_text();
  m.inputs["checkpoint"] = checkpoint;
  m.inputs["cache"] = cache;
  const fs::path root = c.out;
  fs::create_directories(root);
  std::ofstream csv(root / "predictions.csv");
  csv << "window,session,t_report,fms,severity,p_none,p_low,p_medium,p_high,fms_hat\n";
  const InputOptions options = bundle.model.config().input_options();
  const bool classification = bundle.model.config().task == Task::Classification;
  for (const WindowData* w : chosen) {
    const Prediction p = predict(bundle.model, to_model_inputs(*w, bundle.normalizer, options));
    csv << w->id << ',' << w->session_id << ',' << fmt(w->t_report) << ',' << fmt(w->fms) << ',';
    if (p.severity) csv << to_string(*p.severity);
    for (std::size_t k = 0; k < kSeverityClasses; ++k) {
      csv << ',';
      if (classification) csv << fmt(p.probabilities[k]);
    }
    csv << ',';
    if (!classification) csv << fmt(p.fms_hat);
    csv << '\n';
  }
  csv.close();
  if (!csv) throw IoError("failed writing predictions.csv");
  m.outputs["predictions"] = (root / "predictions.csv").string();
  finish_manifest(m, root);
  out << chosen.size() << " predictions written to " << (root / "predictions.csv").string() << "\n";
  return kExitOk;
}

int cmd_stats(const std::string& cache, double threshold, const Common& c, const std::vector<std::string>& args,
              std::ostream& out) {
  const auto windows = load_cache(cache);
  const auto ptrs = pointers(windows);
  RunManifest m = start_manifest("stats", args, c.seed);
  m.config["stats"] = "threshold = " + fmt(threshold) + "\n";
  m.inputs["cache"] = cache;
  const fs::path root = c.out;
  fs::create_directories(root);
  std::set<Simulation> sims;
  for (const auto& w : windows) sims.insert(w.simulation);
  for (Simulation sim : sims) {
    const auto rows = analyze_simulation(ptrs, sim, threshold);
    const std::string name = "stats_" + std::string(to_string(sim)) + ".csv";
    write_stats_csv(rows, root / name);
    m.outputs[std::string(to_string(sim))] = (root / name).string();
    out << to_string(sim) << ":\n";
    for (const auto& r : rows) {
      out << "  " << r.feature;
      if (r.result) {
        out << " nonsick " << r.result->mean_a << " sick " << r.result->mean_b << " t " << r.result->t << " p "
            << r.result->p;
      } else {
        out << " " << r.note;
      }
      out << "\n";
    }
  }
  finish_manifest(m, root);
  return kExitOk;
}

int cmd_heatmap(const std::string& cache, const std::string& simulation, const std::string& participant,
                double threshold, std::size_t grid, const Common& c, const std::vector<std::string>& args,
                std::ostream& out) {
  if (grid < 2) throw ConfigError("grid must be >= 2");
  const auto windows = load_cache(cache);
  const Simulation sim = parse_simulation(simulation);
  std::vector<const WindowData*> chosen;
  for (const auto& w : windows) {
    if (w.simulation == sim && (participant.empty() || w.participant == participant)) chosen.push_back(&w);
  }
  if (chosen.empty()) throw EmptyError("no windows for " + simulation + (participant.empty() ? "" : "/" + participant));
  RunManifest m = start_manifest("heatmap", args, c.seed);
  m.config["heatmap"] = "simulation = " + simulation + "\nparticipant = " + participant +
                        "\nthreshold = " + fmt(threshold) + "\ngrid = " + std::to_string(grid) + "\n";
  m.inputs["cache"] = cache;
  const fs::path root = c.out;
  fs::create_directories(root);
  const GazeSplit split = split_gaze(chosen, threshold);
  write_pgm(root / "nonsick.pgm", gaze_heatmap(split.nonsick, grid));
  write_pgm(root / "sick.pgm", gaze_heatmap(split.sick, grid));
  m.outputs["nonsick"] = (root / "nonsick.pgm").string();
  m.outputs["sick"] = (root / "sick.pgm").string();
  finish_manifest(m, root);
  out << "gaze samples: nonsick " << split.nonsick.size() << ", sick " << split.sick.size() << "\n";
  if (split.sick.empty() || split.nonsick.empty()) out << "warning: one group is empty; its heatmap is blank\n";
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::Divergence:
      return kExitDivergence;
    case ErrorKind::Parse:
    case ErrorKind::Order:
    case ErrorKind::Gap:
    case ErrorKind::MissingStream:
    case ErrorKind::ShortWindow:
    case ErrorKind::Range:
    case ErrorKind::Empty:
    case ErrorKind::ZeroVariance:
    case ErrorKind::Shape:
    case ErrorKind::Io:
    case ErrorKind::Degenerate:
    case ErrorKind::DegenerateBatch:
      return kExitData;
    case ErrorKind::Contract:
      return kExitOther;
  }
  return kExitOther;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal cybersickness prediction pipeline", "sickfuse"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand help for every command");

  Common common;
  auto add_common = [&](CLI::App* sub, const std::string& out_help) {
    sub->add_option("--seed", common.seed, "master seed, fanned out per purpose");
    sub->add_option("--out", common.out, out_help)->required();
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string profile_file;
  synth->add_option("--profile", profile_file, "profile file (key = value)");
  KeyFlags synth_flags(synth, SynthProfile{}.to_text(), "Profile");
  add_common(synth, "dataset directory");

  auto* prep = app.add_subcommand("preprocess", "parse sessions and write the window cache");
  std::string data_dir;
  prep->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ModelArgs prep_model;
  prep_model.add(prep);
  add_common(prep, "cache directory");

  auto* train = app.add_subcommand("train", "train one model on the whole cache");
  auto* cv = app.add_subcommand("cv", "k-fold cross validation");
  std::string cache;
  ModelArgs train_model, cv_model;
  TrainArgs train_train, cv_train;
  for (auto [sub, margs, targs] : {std::tuple{train, &train_model, &train_train}, std::tuple{cv, &cv_model, &cv_train}}) {
    sub->add_option("--cache", cache, "window cache directory")->required()->check(CLI::ExistingDirectory);
    margs->add(sub);
    targs->add(sub);
    add_common(sub, "run directory");
  }

  auto* pred = app.add_subcommand("predict", "predict windows with a trained checkpoint");
  std::string checkpoint;
  std::vector<std::string> window_ids, session_ids;
  pred->add_option("--checkpoint", checkpoint, "model.sfm from train")->required()->check(CLI::ExistingFile);
  pred->add_option("--cache", cache, "window cache directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--window", window_ids, "window id (repeatable)");
  pred->add_option("--session", session_ids, "session id, e.g. P01_RoadSide (repeatable)");
  add_common(pred, "run directory");

  double threshold = kSicknessThreshold;
  auto* stats = app.add_subcommand("stats", "paired t-tests of eye and head features per simulation");
  stats->add_option("--cache", cache, "window cache directory")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--threshold", threshold, "FMS above which a window counts as sick")->capture_default_str();
  add_common(stats, "run directory");

  auto* heat = app.add_subcommand("heatmap", "gaze heatmaps for sick and non-sick windows");
  std::string simulation, participant;
  std::size_t grid = 64;
  heat->add_option("--cache", cache, "window cache directory")->required()->check(CLI::ExistingDirectory);
  heat->add_option("--simulation", simulation, "simulation name")->required();
  heat->add_option("--participant", participant, "restrict to one participant");
  heat->add_option("--threshold", threshold, "FMS above which a window counts as sick")->capture_default_str();
  heat->add_option("--grid", grid, "heatmap resolution")->capture_default_str();
  add_common(heat, "run directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[config]: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(profile_file, synth_flags, common, args, out);
    if (prep->parsed()) return cmd_preprocess(data_dir, prep_model, common, args, out);
    if (train->parsed()) return cmd_train(cache, train_model, train_train, common, args, out);
    if (cv->parsed()) return cmd_cv(cache, cv_model, cv_train, common, args, out);
    if (pred->parsed()) return cmd_predict(checkpoint, cache, window_ids, session_ids, common, args, out);
    if (stats->parsed()) return cmd_stats(cache, threshold, common, args, out);
    if (heat->parsed()) return cmd_heatmap(cache, simulation, participant, threshold, grid, common, args, out);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace sickfuse::cli
