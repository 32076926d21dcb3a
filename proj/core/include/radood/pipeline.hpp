#pragma once

// End-to-end detection pipeline: CVAE training on an H0 train split,
// per-bin calibration of every detector (and of the fused statistic) on a
// disjoint H0 eval split, optional held-out false-alarm check, and Monte
// Carlo Pd over an (SNR, Doppler bin) grid on fresh test draws.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "radood/calib.hpp"
#include "radood/cvae.hpp"
#include "radood/errors.hpp"
#include "radood/experiment.hpp"
#include "radood/report.hpp"
#include "radood/scene.hpp"

namespace radood {

struct Models {
  std::map<Preprocessing, Cvae> nets;
  std::map<Preprocessing, std::vector<EpochLoss>> traces;

  const Cvae& at(Preprocessing p) const;  // DependencyError when missing
};

// One CVAE per whitening mode in cfg.whitening, trained on cfg.cvae.train_size
// H0 profiles of the Train split. Empty when the roster has no learned
// detector.
Models train_models(const ExperimentConfig& cfg, const Scene& scene);
void save_models(const Models& models, const ExperimentConfig& cfg, const std::filesystem::path& dir);
// Loads cvae_<mode>.ckpt for every mode the roster needs.
Models load_models(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct Calibration {
  double pfa = 1e-2;
  std::vector<CalibrationEntry> entries;

  const CalibrationEntry* find(const DetectorId& id) const;
  const CalibrationEntry& at(const DetectorId& id) const;  // DependencyError when missing
};

void save_calibration(const Calibration& cal, const std::filesystem::path& dir);
// Reads calibration.bin from dir.
Calibration load_calibration(const std::filesystem::path& dir);

// Null statistics of every roster detector on cfg.calibration_trials Eval
// trials, ECDF banks and per-bin thresholds. The fused detector pairs the
// ANMF-Tyler and CVAE p-values of the same snapshot; its branches get their
// own entries even when they are not in the roster. MF in a Gaussian
// environment uses the analytic threshold -ln(pfa).
Calibration calibrate(const ExperimentConfig& cfg, const Scene& scene, const Models& models);

struct PfaCheck {
  DetectorId id;
  int bin = 0;
  std::size_t n = 0;
  std::size_t exceed = 0;
  double pfa_hat = 0.0;
  std::size_t lo = 0, hi = 0;  // binomial interval on the exceedance count
  bool within = false;
};

struct PdEstimate {
  double pd = 0.0;
  double ci = 0.0;
  std::size_t trials = 0;
  std::size_t detections = 0;
};

class Evaluator {
 public:
  Evaluator(const ExperimentConfig& cfg, const Scene& scene, const Models& models, const Calibration& cal);

  // Fraction of `trials` H1 trials (Test split under `seed`) whose statistic
  // reaches lambda(d). Throws DependencyError when id is not calibrated.
  PdEstimate evaluate_detector(const DetectorId& id, double snr_db, int d, std::size_t trials,
                               std::uint64_t seed) const;

  // Every roster detector over snr_db x bins with common random numbers.
  std::vector<PdSurface> evaluate_grid(const std::vector<DetectorId>& roster, const std::vector<double>& snr_db,
                                       const std::vector<int>& bins, std::size_t trials, std::uint64_t seed) const;

  // Exceedance of each calibrated threshold on n fresh H0 trials of the
  // Holdout split, per bin, with a two-sided binomial interval at `level`.
  std::vector<PfaCheck> holdout(const std::vector<DetectorId>& roster, std::size_t n, std::uint64_t seed,
                                double level = 0.99) const;

  // Held-out PIT p-values of one detector's bin-b statistic (H0).
  std::vector<double> holdout_pvalues(const DetectorId& id, int b, std::size_t n, std::uint64_t seed) const;

 private:
  const ExperimentConfig& cfg_;
  const Scene& scene_;
  const Models& models_;
  const Calibration& cal_;
};

struct PipelineResult {
  Models models;
  Calibration calibration;
  std::vector<PfaCheck> holdout;
  std::vector<PdSurface> surfaces;
};

// Runs every stage and writes artifacts to cfg.output: config.json,
// cvae_<mode>.ckpt, loss_<mode>.csv, calibration.bin, calibration.csv,
// holdout_pfa.csv (when holdout_trials > 0) and the pd report. A failing
// stage is rethrown with its name and the master seed.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

void write_holdout_csv(const std::vector<PfaCheck>& checks, const std::filesystem::path& path);

struct CubeDetection {
  SnapshotIndex index;
  int bin = 0;
  std::string detector;
  std::string preprocessing;
  double statistic = 0.0;
  double threshold = 0.0;
  bool detected = false;
};

// Applies every calibrated roster detector to every slow-time snapshot of a
// cube. Secondary data for gate r are all snapshots of its whitening
// neighborhood, the same set local whitening uses.
std::vector<CubeDetection> detect_cube(const ExperimentConfig& cfg, const RangePulseCube& cube, const Models& models,
                                       const Calibration& cal);
void write_detections_csv(const std::vector<CubeDetection>& rows, const std::filesystem::path& path);

// Wraps a stage: any library error is rethrown with the same kind and a
// message naming the stage and seed.
template <class F>
auto run_stage(const char* name, std::uint64_t seed, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + name + "' failed (seed " + std::to_string(seed) + "): " + e.what());
  }
}

}  // namespace radood
