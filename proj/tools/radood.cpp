// radood: command-line front end for simulation, training, calibration,
// detection and reporting.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "radood/errors.hpp"
#include "radood/experiment.hpp"
#include "radood/pipeline.hpp"
#include "radood/report.hpp"
#include "radood/scene.hpp"
#include "radood/sim.hpp"
#include "radood/whiten.hpp"

namespace fs = std::filesystem;
using namespace radood;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument: return kExitConfig;
    case ErrorKind::SingularMatrix:
    case ErrorKind::ConvergenceFailure:
    case ErrorKind::InsufficientData:
    case ErrorKind::NumericFailure:
    case ErrorKind::TrainingFailure: return kExitNumeric;
    case ErrorKind::FormatError:
    case ErrorKind::DependencyError:
    case ErrorKind::IoError: return kExitIo;
  }
  return kExitNumeric;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "JSON experiment configuration (defaults when omitted)");
  sub->add_option("--seed", c.seed, "Master seed, overrides the config");
  sub->add_option("-o,--out", c.out, "Output directory, overrides the config");
  sub->add_option("-j,--jobs", c.jobs, "Worker threads (0 = all cores)");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

Scene make_scene(const ExperimentConfig& cfg) {
  return Scene(cfg.disturbance, cfg.k_secondary, cfg.tyler, cfg.whiten.eps_ridge);
}

int cmd_simulate(const Common& c, const std::string& cube_path) {
  const auto cfg = load_config(c);
  ensure_dir(cfg.output);
  std::vector<TargetPlacement> targets;
  for (const auto& t : cfg.cube.targets) {
    targets.push_back({t.range, t.pulse_offset, {t.d, std::pow(10.0, t.snr_db / 10.0), std::nullopt}});
  }
  const auto cube = run_stage("simulate", cfg.seed, [&] {
    return simulate_cube(cfg.disturbance, cfg.cube.n_ranges, cfg.cube.n_pulses, targets, cfg.seed);
  });
  const fs::path path = cube_path.empty() ? cfg.output / "cube.cpxc" : fs::path(cube_path);
  write_cube(cube, path);
  std::printf("wrote %s (%d ranges x %d pulses)\n", path.string().c_str(), cube.n_ranges, cube.n_pulses);
  return kExitOk;
}

int cmd_train(const Common& c) {
  const auto cfg = load_config(c);
  ensure_dir(cfg.output);
  const Scene scene = make_scene(cfg);
  const auto models = run_stage("train", cfg.seed, [&] {
    auto m = train_models(cfg, scene);
    save_models(m, cfg, cfg.output);
    return m;
  });
  for (const auto& [pre, trace] : models.traces) {
    const double last = trace.empty() ? 0.0 : trace.back().total;
    std::printf("trained CVAE/%s: %zu epochs, final loss %.6g\n", to_string(pre).c_str(), trace.size(), last);
  }
  if (models.nets.empty()) std::printf("roster has no learned detector; nothing to train\n");
  return kExitOk;
}

int cmd_calibrate(const Common& c) {
  const auto cfg = load_config(c);
  ensure_dir(cfg.output);
  const Scene scene = make_scene(cfg);
  const auto models = run_stage("load-models", cfg.seed, [&] { return load_models(cfg, cfg.output); });
  const auto cal = run_stage("calibrate", cfg.seed, [&] {
    auto k = calibrate(cfg, scene, models);
    save_calibration(k, cfg.output);
    return k;
  });
  if (cfg.holdout_trials > 0) {
    const Evaluator ev(cfg, scene, models, cal);
    const auto checks = run_stage("holdout", cfg.seed, [&] {
      return ev.holdout(cfg.roster(), static_cast<std::size_t>(cfg.holdout_trials), cfg.seed);
    });
    write_holdout_csv(checks, cfg.output / "holdout_pfa.csv");
  }
  std::printf("calibrated %zu entries on %d H0 trials\n", cal.entries.size(), cfg.calibration_trials);
  return kExitOk;
}

int cmd_detect(const Common& c, const std::string& cube_path) {
  const auto cfg = load_config(c);
  if (cube_path.empty()) throw ConfigError("detect: --cube is required");
  ensure_dir(cfg.output);
  const auto cube = read_cube(cube_path);
  const auto models = run_stage("load-models", cfg.seed, [&] { return load_models(cfg, cfg.output); });
  const auto cal = run_stage("load-calibration", cfg.seed, [&] { return load_calibration(cfg.output); });
  const auto rows = run_stage("detect", cfg.seed, [&] { return detect_cube(cfg, cube, models, cal); });
  write_detections_csv(rows, cfg.output / "detections.csv");
  std::size_t hits = 0;
  for (const auto& r : rows) hits += r.detected ? 1 : 0;
  std::printf("%zu decisions, %zu detections\n", rows.size(), hits);
  return kExitOk;
}

int cmd_report(const Common& c, const std::string& input) {
  const fs::path out = c.out.empty() ? fs::path("radood-out") : fs::path(c.out);
  const fs::path in = input.empty() ? out / "pd.csv" : fs::path(input);
  const auto surfaces = read_surfaces_csv(in);
  if (surfaces.empty()) throw ConfigError("report: " + in.string() + " holds no rows");
  // Re-emitting the CSV into the same file is a no-op by construction.
  emit_report(surfaces, out, in.stem().string());
  std::printf("rendered %zu surfaces into %s\n", surfaces.size(), out.string().c_str());
  return kExitOk;
}

int cmd_pipeline(const Common& c) {
  const auto cfg = load_config(c);
  const auto res = run_pipeline(cfg);
  std::size_t bad = 0;
  for (const auto& h : res.holdout) bad += h.within ? 0 : 1;
  std::printf("pipeline done: %zu surfaces, %zu calibration entries", res.surfaces.size(),
              res.calibration.entries.size());
  if (!res.holdout.empty()) std::printf(", %zu/%zu held-out bins outside the 99%% interval", bad, res.holdout.size());
  std::printf("\noutputs in %s\n", cfg.output.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radood: radar out-of-distribution detection toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string cube_path, input;

  auto* sim = app.add_subcommand("simulate", "Simulate a range-pulse cube");
  add_common(sim, common);
  sim->add_option("--cube", cube_path, "Output cube path (default <out>/cube.cpxc)");
  auto* tr = app.add_subcommand("train", "Train one CVAE per whitening mode");
  add_common(tr, common);
  auto* cal = app.add_subcommand("calibrate", "Calibrate thresholds and fusion on H0 data");
  add_common(cal, common);
  auto* det = app.add_subcommand("detect", "Run calibrated detectors on a cube file");
  add_common(det, common);
  det->add_option("--cube", cube_path, "Input cube file")->required();
  auto* rep = app.add_subcommand("report", "Render SVG plots from a Pd CSV");
  add_common(rep, common);
  rep->add_option("--input", input, "Pd CSV (default <out>/pd.csv)");
  auto* pipe = app.add_subcommand("pipeline", "Train, calibrate, evaluate and report");
  add_common(pipe, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common, cube_path);
    if (tr->parsed()) return cmd_train(common);
    if (cal->parsed()) return cmd_calibrate(common);
    if (det->parsed()) return cmd_detect(common, cube_path);
    if (rep->parsed()) return cmd_report(common, input);
    if (pipe->parsed()) return cmd_pipeline(common);
  } catch (const Error& e) {
    std::fprintf(stderr, "radood: %s error: %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "radood: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitConfig;
}
