#pragma once

// Declarative experiment configuration. The file format is JSON with nested
// objects; unknown keys are rejected so typos surface as ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "radood/calib.hpp"
#include "radood/covest.hpp"
#include "radood/cvae.hpp"
#include "radood/sim.hpp"
#include "radood/whiten.hpp"

namespace radood {

// Input transform seen by the CVAE (and by the CVAE branch of the fused
// detector). Classical detectors always work on the raw snapshot.
enum class Preprocessing { Raw, Local, Oracle };

std::string to_string(Preprocessing p);
Preprocessing parse_preprocessing(const std::string& s);

// Detector roster names: "MF", "NMF", "AMF-SCM", "ANMF-SCM", "ANMF-Tyler",
// "CVAE", "fused".
inline constexpr const char* kCvaeName = "CVAE";
inline constexpr const char* kFusedName = "fused";

struct DetectorId {
  std::string name;
  Preprocessing pre = Preprocessing::Raw;

  bool learned() const { return name == kCvaeName || name == kFusedName; }
  // "ANMF-Tyler/raw", "CVAE/local", ...
  std::string label() const;
  bool operator==(const DetectorId&) const = default;
  auto operator<=>(const DetectorId&) const = default;
};

struct FusionSettings {
  WeightKind weights = WeightKind::GaussianPrior;
  int b0 = 0;
  double sigma0 = 1.5;
  double constant = 0.5;
  SpreadMode spread = SpreadMode::StdDev;
};

struct CvaeSettings {
  CvaeArchitecture arch;
  TrainConfig training;
  int train_size = 20000;
  ScoreMode score = ScoreMode::Mean;
};

struct CubeTargetConfig {
  int range = 0;
  int pulse_offset = 0;
  int d = 0;
  double snr_db = 10.0;
};

struct CubeConfig {
  int n_ranges = 64;
  int n_pulses = 256;
  std::vector<CubeTargetConfig> targets;
};

struct ExperimentConfig {
  DisturbanceSpec disturbance;  // disturbance.m is the snapshot length
  int k_secondary = 32;
  double pfa = 1e-2;
  std::vector<double> snr_db;    // default -5:1:30
  std::vector<int> doppler_bins; // default all m bins
  int trials = 10000;             // H1 trials per (SNR, d) point
  int calibration_trials = 100000;
  int holdout_trials = 0;         // 0 skips the held-out false-alarm check
  std::vector<std::string> detectors;
  std::vector<Preprocessing> whitening;  // modes for CVAE and fused
  FusionSettings fusion;
  CvaeSettings cvae;
  WhitenConfig whiten;
  TylerOptions tyler;
  CubeConfig cube;
  std::uint64_t seed = 1;
  std::filesystem::path output = "radood-out";
  int jobs = 0;

  ExperimentConfig();

  // Throws ConfigError.
  void validate() const;
  // Roster expanded over the whitening modes, in a fixed order.
  std::vector<DetectorId> roster() const;
  bool wants(const std::string& name) const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace radood
