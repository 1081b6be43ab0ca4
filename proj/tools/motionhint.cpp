// motionhint: fixture generation, PPnet training, next-pose prediction, motion-hint refinement
// and trajectory evaluation from the command line.
//
// Verbosity is read from MOTIONHINT_LOG (error, warn, info, debug; default warn).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "motionhint/config.hpp"
#include "motionhint/metrics.hpp"
#include "motionhint/motion_supervision.hpp"
#include "motionhint/ppnet.hpp"
#include "motionhint/synth_vo.hpp"
#include "motionhint/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace motionhint;

namespace {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("MOTIONHINT_LOG");
    const std::string v = env ? env : "";
    if (v == "error") return Level::kError;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

void log(Level l, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (l <= log_level()) std::cerr << "[" << names[static_cast<int>(l)] << "] " << msg << '\n';
}

// Exit codes: 1 runtime failure, 2 bad configuration, 3 numeric abort.
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json header(const std::string& kind, const RunConfig& cfg) {
  return json{{"schema_version", kSchemaVersion}, {"kind", kind}, {"seed", cfg.seed}};
}

std::vector<double> vec(const Pose6d& p) {
  const Vector6d v = p.vector();
  return {v.data(), v.data() + 6};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

// JSON Lines sink: a file when a path is given, stdout otherwise.
class LineWriter {
 public:
  explicit LineWriter(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error("cannot write '" + path + "'");
    }
  }
  void write(const json& j) { out() << j.dump() << '\n'; }
  void finish() {
    out().flush();
    if (!out()) throw Error("failed writing output");
  }

 private:
  std::ostream& out() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  std::ofstream file_;
};

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw Error("output directory '" + parent.string() + "' does not exist");
  }
}

void ensure_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error("input file '" + path + "' does not exist");
}

std::string meta_path(const std::string& model) { return model + ".json"; }

// Run options bound to flags; a flag given on the command line overrides the config file.
struct Options {
  RunConfig flags;
  std::string config_path;
  std::vector<std::function<void(RunConfig&)>> overrides;

  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*member,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(name, flags.*member, help);
    overrides.push_back([this, opt, member](RunConfig& c) {
      if (opt->count() > 0) c.*member = flags.*member;
    });
    return opt;
  }
  CLI::Option* add_switch(CLI::App* app, const std::string& name, bool RunConfig::*member,
                          bool value, const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    overrides.push_back([opt, member, value](RunConfig& c) {
      if (opt->count() > 0) c.*member = value;
    });
    return opt;
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    for (const auto& o : overrides) o(cfg);
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "JSON config file; flags take precedence")
      ->check(CLI::ExistingFile);
  o.add(app, "--seed", &RunConfig::seed, "Random seed, echoed into every output header");
}

void add_model_flags(CLI::App* app, Options& o) {
  o.add(app, "--window", &RunConfig::window, "PPnet input window length W");
}

void add_train_flags(CLI::App* app, Options& o) {
  o.add(app, "--gamma", &RunConfig::gamma, "Weight of the log-uncertainty term");
  o.add(app, "--k", &RunConfig::k, "Exponent of the weighted squared residual");
  o.add(app, "--scale-min", &RunConfig::scale_min, "Lower bound of scale augmentation");
  o.add(app, "--scale-max", &RunConfig::scale_max, "Upper bound of scale augmentation");
  o.add(app, "--epochs", &RunConfig::epochs, "Training epochs");
  o.add(app, "--batch-size", &RunConfig::batch_size, "Mini-batch size");
  o.add(app, "--lr", &RunConfig::learning_rate, "Adam learning rate");
  o.add(app, "--validation-fraction", &RunConfig::validation_fraction,
        "Held-out tail fraction when no --val files are given");
  o.add(app, "--train-sigma-t", &RunConfig::train_sigma_t,
        "Translation noise added to training steps");
  o.add(app, "--train-sigma-r", &RunConfig::train_sigma_r,
        "Rotation noise added to training steps");
  o.add(app, "--tau-percentile", &RunConfig::tau_percentile,
        "Validation uncertainty percentile stored as the gate threshold");
  o.add_switch(app, "--no-centralize", &RunConfig::centralize, false,
               "Disable pose centralization (ablation)");
  o.add_switch(app, "--no-scale-augment", &RunConfig::scale_augment, false,
               "Disable scale augmentation (ablation)");
}

void add_refine_flags(CLI::App* app, Options& o) {
  o.add(app, "--lambda", &RunConfig::lambda, "Rebalancing exponent");
  o.add(app, "--mlra-period", &RunConfig::mlra_period, "Supervised frames per rebalancing");
  o.add(app, "--mlra-max-updates", &RunConfig::mlra_max_updates, "Rebalancing updates allowed");
  o.add(app, "--tau", &RunConfig::tau, "Gate threshold; defaults to the model metadata");
  o.add(app, "--alpha", &RunConfig::alpha, "Confidence scale, c = exp(-alpha * U)");
  o.add(app, "--iterations", &RunConfig::iterations, "Optimizer steps");
  o.add(app, "--segment-length", &RunConfig::segment_length, "Frames per corrector segment");
  o.add(app, "--refine-lr", &RunConfig::refine_learning_rate, "Adam learning rate");
  o.add(app, "--origin-floor", &RunConfig::origin_floor,
        "Floor on the origin loss fed to rebalancing");
  o.add_switch(app, "--no-motion", &RunConfig::no_motion, true,
               "Disable the motion loss (weights fixed to 1, 0)");
  o.add_switch(app, "--no-uncertainty", &RunConfig::no_uncertainty, true,
               "Ignore uncertainty: c = 1 and no gate");
}

CLI::Option* add_align(CLI::App* app, Options& o, std::string& storage) {
  auto* opt = app->add_option("--align", storage, "Alignment: sim3 or se3")
                  ->check(CLI::IsMember({"sim3", "se3"}));
  o.overrides.push_back([opt, &storage](RunConfig& c) {
    if (opt->count() > 0) c.align = parse_align_mode(storage);
  });
  return opt;
}

double resolve_tau(const RunConfig& cfg, const std::string& model_path) {
  if (!std::isnan(cfg.tau)) return cfg.tau;
  const std::string meta = meta_path(model_path);
  if (fs::is_regular_file(meta)) {
    const json j = read_json_file(meta);
    if (j.contains("tau") && j["tau"].is_number()) return j["tau"].get<double>();
  }
  log(Level::kWarn, "no gate threshold given or stored with the model; gating disabled");
  return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------------------------

struct GenArgs {
  std::string out_dir;
  std::string suite_path;
  std::string dump_suite;
  std::string training;
  std::size_t count = 10;
  std::size_t frames = 300;
  double speed_min = 0.8;
  double speed_max = 1.2;
};

int cmd_gen(const RunConfig& cfg, const GenArgs& a) {
  if (!fs::is_directory(a.out_dir)) throw Error("output directory '" + a.out_dir + "' missing");
  json manifest = header("gen", cfg);

  if (!a.training.empty()) {
    std::vector<Trajectory> data;
    if (a.training == "families") {
      data = training_trajectories(a.count, a.frames, cfg.seed);
    } else if (a.training == "constant-velocity") {
      data = constant_velocity_trajectories(a.count, a.frames, a.speed_min, a.speed_max, cfg.seed);
    } else {
      throw InvalidArgumentError("unknown training set '" + a.training + "'");
    }
    json files = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "train_%03zu.txt", i);
      write_kitti_file((fs::path(a.out_dir) / name).string(), data[i]);
      files.push_back(name);
    }
    manifest["training"] = a.training;
    manifest["files"] = files;
    write_json((fs::path(a.out_dir) / "manifest.json").string(), manifest);
    log(Level::kInfo, "wrote " + std::to_string(data.size()) + " training trajectories");
    return 0;
  }

  const std::vector<FixtureSpec> suite =
      a.suite_path.empty() ? standard_suite() : load_suite_file(a.suite_path);
  if (!a.dump_suite.empty()) write_json(a.dump_suite, suite_to_json(suite));

  json fixtures = json::array();
  for (const FixtureSpec& spec : suite) {
    const Fixture f = build_fixture(spec);
    const std::string gt = spec.name + "_gt.txt", noisy = spec.name + "_noisy.txt";
    write_kitti_file((fs::path(a.out_dir) / gt).string(), f.ground_truth);
    write_kitti_file((fs::path(a.out_dir) / noisy).string(), f.noisy);
    fixtures.push_back({{"name", spec.name},
                        {"ground_truth", gt},
                        {"noisy", noisy},
                        {"frames", f.ground_truth.size()},
                        {"ate_sim3", ate(f.noisy, f.ground_truth, AlignMode::kSim3)}});
    log(Level::kInfo, "fixture " + spec.name);
  }
  manifest["fixtures"] = fixtures;
  write_json((fs::path(a.out_dir) / "manifest.json").string(), manifest);
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> inputs;
  std::vector<std::string> validation;
  std::string model;
  std::string log;
};

int cmd_train(const RunConfig& cfg, const TrainArgs& a) {
  ensure_parent(a.model);
  auto load_all = [](const std::vector<std::string>& paths) {
    std::vector<Trajectory> out;
    for (const std::string& p : paths) {
      ensure_file(p);
      out.push_back(read_kitti_file(p));
    }
    return out;
  };
  std::vector<Trajectory> data = load_all(a.inputs);
  std::vector<Trajectory> val = load_all(a.validation);
  if (data.empty()) throw InvalidArgumentError("no training trajectories");
  if (cfg.train_sigma_t > 0.0 || cfg.train_sigma_r > 0.0) {
    NoiseModel nm;
    nm.sigma_t = cfg.train_sigma_t;
    nm.sigma_r = cfg.train_sigma_r;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = corrupt(data[i], nm, cfg.seed + i);
  }

  const TrainConfig tc = cfg.train_config();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(data, tc, val);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  LineWriter lines(a.log);
  json h = header("train-ppnet", cfg);
  h["config"] = to_json(cfg);
  lines.write(h);
  for (const EpochRecord& e : res.history) {
    lines.write({{"epoch", e.epoch},
                 {"train_nll", std::isnan(e.train_nll) ? json(nullptr) : json(e.train_nll)},
                 {"val_nll", e.val_nll}});
  }
  lines.finish();

  save_model_file(a.model, res.params);
  json meta = header("ppnet-model", cfg);
  meta["window"] = cfg.window;
  meta["gamma"] = cfg.gamma;
  meta["k"] = cfg.k;
  meta["scale_min"] = cfg.scale_min;
  meta["scale_max"] = cfg.scale_max;
  meta["best_epoch"] = res.best_epoch;
  meta["val_nll_initial"] = res.history.front().val_nll;
  meta["val_nll_best"] = mean_nll(res.params, res.validation, tc.nll());
  meta["zero_motion_nll"] = zero_predictor_nll(res.validation, tc.nll());
  meta["tau_percentile"] = cfg.tau_percentile;
  meta["tau"] = uncertainty_percentile(res.params, res.validation, cfg.tau_percentile);
  meta["seconds"] = secs;
  write_json(meta_path(a.model), meta);
  log(Level::kInfo, "best epoch " + std::to_string(res.best_epoch));
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string trajectory;
  std::string out;
};

int cmd_predict(const RunConfig& cfg, const PredictArgs& a) {
  ensure_file(a.model);
  ensure_file(a.trajectory);
  const PPnetParams model = load_model_file(a.model);
  const Trajectory traj = read_kitti_file(a.trajectory);
  if (traj.size() < cfg.window + 1) {
    throw InvalidArgumentError("trajectory has " + std::to_string(traj.size()) +
                               " poses; prediction needs at least window + 1");
  }

  LineWriter lines(a.out);
  json h = header("predict", cfg);
  h["window"] = cfg.window;
  h["rows"] = traj.size() - cfg.window;
  lines.write(h);

  ConfidenceParams open;  // no gate: report every prediction
  PoseManager manager(cfg.window);
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    manager.record_pose(t, traj[t]);
    if (t + 1 < cfg.window) continue;
    const PseudoLabel l = pseudo_label(model, manager, open, cfg.window);
    const Pose6d err = Pose6d::FromVector(l.predicted_world.vector() - traj[t + 1].vector());
    lines.write({{"frame", t + 1},
                 {"pose", vec(l.predicted_world)},
                 {"total_uncertainty", l.total_uncertainty},
                 {"translation_error", err.t.norm()}});
  }
  lines.finish();
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct RefineArgs {
  std::string model;
  std::string trajectory;
  std::string reference;
  std::string out;
  std::string diagnostics;
};

json iteration_json(const IterationRecord& r) {
  return {{"iteration", r.iteration}, {"l_origin", r.l_origin},   {"l_motion", r.l_motion},
          {"total", r.total},         {"w_origin", r.w_origin},   {"w_motion", r.w_motion},
          {"supervised", r.supervised}, {"gated", r.gated}};
}

int cmd_refine(const RunConfig& cfg, const RefineArgs& a) {
  ensure_file(a.model);
  ensure_file(a.trajectory);
  if (!a.reference.empty()) ensure_file(a.reference);
  ensure_parent(a.out);
  const PPnetParams model = load_model_file(a.model);
  const Trajectory noisy = read_kitti_file(a.trajectory);
  const double tau = cfg.no_uncertainty ? std::numeric_limits<double>::infinity()
                                        : resolve_tau(cfg, a.model);
  const RefineConfig rc = cfg.refine_config(tau);

  LineWriter lines(a.diagnostics);
  json h = header("refine", cfg);
  h["config"] = to_json(cfg);
  h["tau"] = std::isfinite(tau) ? json(tau) : json(nullptr);
  lines.write(h);

  RefineResult res;
  try {
    res = refine(noisy, model, rc);
  } catch (const RefineDivergedError& e) {
    for (const IterationRecord& r : e.iterations) lines.write(iteration_json(r));
    lines.write({{"abort", e.what()}});
    lines.finish();
    throw;
  }
  for (const IterationRecord& r : res.iterations) lines.write(iteration_json(r));
  for (const FrameRecord& f : res.frames) {
    lines.write({{"frame", f.frame},
                 {"gated", f.gated},
                 {"total_uncertainty", f.total_uncertainty},
                 {"confidence", f.confidence},
                 {"l_motion", f.l_motion}});
  }
  json summary{{"summary", true},
               {"w_origin", res.weights.w[0]},
               {"w_motion", res.weights.w[1]},
               {"mlra_updates", res.weights.updates_done}};
  if (!a.reference.empty()) {
    const Trajectory gt = read_kitti_file(a.reference);
    const double before = ate(noisy, gt, cfg.align), after = ate(res.corrected, gt, cfg.align);
    summary["align"] = std::string(to_string(cfg.align));
    summary["ate_before"] = before;
    summary["ate_after"] = after;
    summary["ate_reduction"] = 1.0 - after / before;
    log(Level::kInfo, "ATE " + std::to_string(before) + " -> " + std::to_string(after));
  }
  lines.write(summary);
  lines.finish();
  write_kitti_file(a.out, res.corrected);
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  std::string estimate;
  std::string reference;
  std::string json_out;
  std::vector<double> lengths;
};

int cmd_eval(const RunConfig& cfg, const EvalArgs& a) {
  ensure_file(a.estimate);
  ensure_file(a.reference);
  const Trajectory est = read_kitti_file(a.estimate);
  const Trajectory ref = read_kitti_file(a.reference);
  const std::vector<double> lengths = a.lengths.empty() ? default_segment_lengths() : a.lengths;
  const EvalReport r = evaluate(est, ref, cfg.align, lengths);

  std::printf("# seed %llu\n", static_cast<unsigned long long>(cfg.seed));
  std::printf("frames       %zu\n", r.frames);
  std::printf("path length  %.3f m\n", r.path_length);
  std::printf("align        %s (scale %.6f)\n", std::string(to_string(r.mode)).c_str(),
              r.alignment.scale);
  std::printf("ATE          %.6f m\n", r.ate_rmse);
  std::printf("t_err        %.4f %%\n", r.relative.t_err_pct);
  std::printf("r_err        %.4f deg/100m\n", r.relative.r_err_deg_per_100m);
  std::printf("spans        %zu\n", r.relative.spans);

  if (!a.json_out.empty()) {
    ensure_parent(a.json_out);
    json j = header("eval", cfg);
    j["align"] = std::string(to_string(r.mode));
    j["frames"] = r.frames;
    j["path_length"] = r.path_length;
    j["ate_rmse"] = r.ate_rmse;
    j["scale"] = r.alignment.scale;
    j["t_err_pct"] = r.relative.t_err_pct;
    j["r_err_deg_per_100m"] = r.relative.r_err_deg_per_100m;
    j["spans"] = r.relative.spans;
    json per = json::array();
    for (const LengthError& le : r.relative.per_length) {
      per.push_back({{"length", le.length},
                     {"spans", le.spans},
                     {"t_err_pct", le.t_err_pct},
                     {"r_err_deg_per_100m", le.r_err_deg_per_100m}});
    }
    j["per_length"] = per;
    write_json(a.json_out, j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-hint self-supervision tools: PPnet training and VO refinement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "motionhint 0.1.0");

  Options gen_o, train_o, predict_o, refine_o, eval_o;
  GenArgs gen_a;
  TrainArgs train_a;
  PredictArgs predict_a;
  RefineArgs refine_a;
  EvalArgs eval_a;
  std::string refine_align, eval_align;

  auto* gen = app.add_subcommand("gen", "Write fixture or training trajectories");
  add_common(gen, gen_o);
  gen->add_option("--out", gen_a.out_dir, "Output directory")->required();
  gen->add_option("--suite", gen_a.suite_path, "Fixture suite JSON (default: built-in suite)")
      ->check(CLI::ExistingFile);
  gen->add_option("--dump-suite", gen_a.dump_suite, "Also write the fixture suite JSON here");
  gen->add_option("--training", gen_a.training,
                  "Write a training set instead: families or constant-velocity");
  gen->add_option("--count", gen_a.count, "Training trajectories (per family for families)");
  gen->add_option("--frames", gen_a.frames, "Poses per training trajectory");
  gen->add_option("--speed-min", gen_a.speed_min, "Constant-velocity speed lower bound");
  gen->add_option("--speed-max", gen_a.speed_max, "Constant-velocity speed upper bound");

  auto* tr = app.add_subcommand("train-ppnet", "Train PPnet on KITTI-format trajectories");
  add_common(tr, train_o);
  add_model_flags(tr, train_o);
  add_train_flags(tr, train_o);
  tr->add_option("inputs", train_a.inputs, "Training trajectories")->required();
  tr->add_option("--val", train_a.validation, "Validation trajectories (used unscaled)");
  tr->add_option("--model", train_a.model, "Output model file")->required();
  tr->add_option("--log", train_a.log, "Training log, JSON Lines (default stdout)");

  auto* pr = app.add_subcommand("predict", "Predict next poses and uncertainty along a trajectory");
  add_common(pr, predict_o);
  add_model_flags(pr, predict_o);
  pr->add_option("--model", predict_a.model, "Model file")->required();
  pr->add_option("--traj", predict_a.trajectory, "Trajectory")->required();
  pr->add_option("--out", predict_a.out, "Predictions, JSON Lines (default stdout)");

  auto* rf = app.add_subcommand("refine", "Refine a VO trajectory with motion-hint supervision");
  add_common(rf, refine_o);
  add_model_flags(rf, refine_o);
  add_refine_flags(rf, refine_o);
  add_align(rf, refine_o, refine_align);
  rf->add_option("--model", refine_a.model, "Model file")->required();
  rf->add_option("--traj", refine_a.trajectory, "Noisy trajectory")->required();
  rf->add_option("--ref", refine_a.reference, "Ground truth, for reporting ATE");
  rf->add_option("--out", refine_a.out, "Corrected trajectory")->required();
  rf->add_option("--diagnostics", refine_a.diagnostics,
                 "Diagnostics, JSON Lines (default stdout)");

  auto* ev = app.add_subcommand("eval", "ATE and relative errors of an estimate");
  add_common(ev, eval_o);
  add_align(ev, eval_o, eval_align);
  ev->add_option("--est", eval_a.estimate, "Estimated trajectory")->required();
  ev->add_option("--ref", eval_a.reference, "Reference trajectory")->required();
  ev->add_option("--json", eval_a.json_out, "Machine-readable report");
  ev->add_option("--lengths", eval_a.lengths, "Segment lengths in metres (default 100..800)");

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  Options* o = gen->parsed()     ? &gen_o
               : tr->parsed()    ? &train_o
               : pr->parsed()    ? &predict_o
               : rf->parsed()    ? &refine_o
                                 : &eval_o;
  try {
    cfg = o->resolve();
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return kExitConfig;
  }
  log(Level::kDebug, "seed " + std::to_string(cfg.seed));

  try {
    if (gen->parsed()) return cmd_gen(cfg, gen_a);
    if (tr->parsed()) return cmd_train(cfg, train_a);
    if (pr->parsed()) return cmd_predict(cfg, predict_a);
    if (rf->parsed()) return cmd_refine(cfg, refine_a);
    return cmd_eval(cfg, eval_a);
  } catch (const NumericError& e) {
    log(Level::kError, e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return kExitRuntime;
  }
}
