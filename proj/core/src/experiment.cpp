#include "radood/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "radood/detectors.hpp"
#include "radood/errors.hpp"

namespace radood {

using json = nlohmann::json;

namespace {

const std::vector<std::string> kAllDetectors = {"MF", "NMF", "AMF-SCM", "ANMF-SCM", "ANMF-Tyler", kCvaeName,
                                                kFusedName};

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError(where + ": unknown key '" + k + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<double> parse_grid(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  check_keys(j, {"start", "stop", "step"}, "snr_db");
  const double start = j.at("start").get<double>();
  const double stop = j.at("stop").get<double>();
  const double step = j.value("step", 1.0);
  if (!(step > 0.0) || stop < start) throw ConfigError("snr_db: need step > 0 and stop >= start");
  std::vector<double> g;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  if (n > 100000) throw ConfigError("snr_db: grid too large");
  for (long i = 0; i <= n; ++i) g.push_back(start + static_cast<double>(i) * step);
  return g;
}

}  // namespace

std::string to_string(Preprocessing p) {
  switch (p) {
    case Preprocessing::Raw: return "raw";
    case Preprocessing::Local: return "local";
    case Preprocessing::Oracle: return "oracle";
  }
  return "?";
}

Preprocessing parse_preprocessing(const std::string& s) {
  for (auto p : {Preprocessing::Raw, Preprocessing::Local, Preprocessing::Oracle}) {
    if (to_string(p) == s) return p;
  }
  throw InvalidArgument("unknown preprocessing '" + s + "' (expected raw, local or oracle)");
}

std::string DetectorId::label() const { return name + "/" + to_string(pre); }

ExperimentConfig::ExperimentConfig() {
  disturbance.kind = DisturbanceKind::cGN_AWGN;
  disturbance.sigma_n2 = 0.1;
  for (int s = -5; s <= 30; ++s) snr_db.push_back(s);
  for (int d = 0; d < disturbance.m; ++d) doppler_bins.push_back(d);
  detectors = kAllDetectors;
  whitening = {Preprocessing::Raw};
}

void ExperimentConfig::validate() const {
  try {
    disturbance.validate();
    cvae.arch.validate();
    whiten.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const int m = disturbance.m;
  if (cvae.arch.m != m) throw ConfigError("cvae.architecture.m must equal m");
  if (whiten.m != m) throw ConfigError("whiten.m must equal m");
  if (k_secondary < m) throw ConfigError("k_secondary must be >= m");
  if (!(pfa > 0.0 && pfa < 1.0)) throw ConfigError("pfa must lie in (0, 1)");
  if (snr_db.empty()) throw ConfigError("snr_db grid is empty");
  for (double s : snr_db) {
    if (!std::isfinite(s)) throw ConfigError("snr_db entries must be finite");
  }
  if (doppler_bins.empty()) throw ConfigError("doppler_bins is empty");
  for (int d : doppler_bins) {
    if (d < 0 || d >= m) throw ConfigError("doppler bin " + std::to_string(d) + " outside [0, m)");
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (static_cast<double>(calibration_trials) < 10.0 / pfa) {
    throw ConfigError("calibration_trials must be >= 10 / pfa for a valid threshold");
  }
  if (holdout_trials < 0) throw ConfigError("holdout_trials must be >= 0");
  if (detectors.empty()) throw ConfigError("detector roster is empty");
  for (const auto& d : detectors) {
    if (std::find(kAllDetectors.begin(), kAllDetectors.end(), d) == kAllDetectors.end()) {
      throw ConfigError("unknown detector '" + d + "'");
    }
  }
  if (whitening.empty()) throw ConfigError("whitening list is empty");
  if (!(fusion.sigma0 > 0.0)) throw ConfigError("fusion.sigma0 must be positive");
  if (fusion.b0 < 0 || fusion.b0 >= m) throw ConfigError("fusion.b0 outside [0, m)");
  if (!(fusion.constant >= 0.0 && fusion.constant <= 1.0)) throw ConfigError("fusion.w must lie in [0, 1]");
  if (cvae.train_size < 1) throw ConfigError("cvae.train_size must be >= 1");
  if (cvae.training.epochs < 0 || cvae.training.batch < 1) throw ConfigError("cvae.training: bad epochs or batch");
  if (cube.n_ranges < 1 || cube.n_pulses < m) throw ConfigError("cube: need n_ranges >= 1 and n_pulses >= m");
  for (const auto& t : cube.targets) {
    if (t.range < 0 || t.range >= cube.n_ranges || t.pulse_offset < 0 || t.pulse_offset + m > cube.n_pulses ||
        t.d < 0 || t.d >= m) {
      throw ConfigError("cube target outside the cube");
    }
  }
  if (tyler.max_iter < 1 || !(tyler.tol > 0.0)) throw ConfigError("tyler: bad tol or max_iter");
}

std::vector<DetectorId> ExperimentConfig::roster() const {
  std::vector<DetectorId> out;
  for (const auto& name : kAllDetectors) {
    if (!wants(name)) continue;
    if (name == kCvaeName || name == kFusedName) {
      for (auto p : whitening) out.push_back({name, p});
    } else {
      out.push_back({name, Preprocessing::Raw});
    }
  }
  return out;
}

bool ExperimentConfig::wants(const std::string& name) const {
  return std::find(detectors.begin(), detectors.end(), name) != detectors.end();
}

std::string ExperimentConfig::to_json() const {
  json j;
  json env{{"kind", to_string(disturbance.kind)},
           {"rho", disturbance.rho},
           {"mu_texture", disturbance.mu_texture},
           {"sigma_n2", disturbance.sigma_n2}};
  j["environment"] = env;
  j["m"] = disturbance.m;
  j["k_secondary"] = k_secondary;
  j["pfa"] = pfa;
  j["snr_db"] = snr_db;
  j["doppler_bins"] = doppler_bins;
  j["trials"] = trials;
  j["calibration_trials"] = calibration_trials;
  j["holdout_trials"] = holdout_trials;
  j["detectors"] = detectors;
  std::vector<std::string> wh;
  for (auto p : whitening) wh.push_back(to_string(p));
  j["whitening"] = wh;
  j["fusion"] = {{"weights", to_string(fusion.weights)},
                 {"b0", fusion.b0},
                 {"sigma0", fusion.sigma0},
                 {"w", fusion.constant},
                 {"sigma_p", fusion.spread == SpreadMode::StdDev ? "stddev" : "variance"}};
  json tr = json::parse(cvae.training.to_json());
  tr.erase("seed");
  j["cvae"] = {{"architecture", json::parse(cvae.arch.to_json())},
               {"training", tr},
               {"train_size", cvae.train_size},
               {"score", cvae.score == ScoreMode::Mean ? "mean" : "sampled"}};
  j["whiten"] = {{"stride", whiten.stride}, {"n_adj", whiten.n_adj}, {"guard", whiten.guard},
                 {"eps_ridge", whiten.eps_ridge}};
  j["tyler"] = {{"tol", tyler.tol}, {"max_iter", tyler.max_iter}};
  json targets = json::array();
  for (const auto& t : cube.targets) {
    targets.push_back({{"range", t.range}, {"pulse_offset", t.pulse_offset}, {"d", t.d}, {"snr_db", t.snr_db}});
  }
  j["cube"] = {{"n_ranges", cube.n_ranges}, {"n_pulses", cube.n_pulses}, {"targets", targets}};
  j["seed"] = seed;
  j["output"] = output.string();
  j["jobs"] = jobs;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    check_keys(j, {"environment", "m", "k_secondary", "pfa", "snr_db", "doppler_bins", "trials",
                   "calibration_trials", "holdout_trials", "detectors", "whitening", "fusion", "cvae", "whiten",
                   "tyler", "cube", "seed", "output", "jobs"},
               "config");
    read(j, "m", c.disturbance.m);
    if (j.contains("environment")) {
      const json& e = j["environment"];
      check_keys(e, {"kind", "rho", "mu_texture", "sigma_n2"}, "environment");
      c.disturbance.kind = parse_disturbance_kind(e.value("kind", to_string(c.disturbance.kind)));
      read(e, "rho", c.disturbance.rho);
      read(e, "mu_texture", c.disturbance.mu_texture);
      c.disturbance.sigma_n2 = c.disturbance.has_noise() ? 0.1 : 0.0;
      read(e, "sigma_n2", c.disturbance.sigma_n2);
    }
    read(j, "k_secondary", c.k_secondary);
    read(j, "pfa", c.pfa);
    if (j.contains("snr_db")) c.snr_db = parse_grid(j["snr_db"]);
    c.doppler_bins.clear();
    if (j.contains("doppler_bins") && !(j["doppler_bins"].is_string() && j["doppler_bins"] == "all")) {
      c.doppler_bins = j["doppler_bins"].get<std::vector<int>>();
    } else {
      for (int d = 0; d < c.disturbance.m; ++d) c.doppler_bins.push_back(d);
    }
    read(j, "trials", c.trials);
    read(j, "calibration_trials", c.calibration_trials);
    read(j, "holdout_trials", c.holdout_trials);
    read(j, "detectors", c.detectors);
    if (j.contains("whitening")) {
      c.whitening.clear();
      for (const auto& s : j["whitening"].get<std::vector<std::string>>()) c.whitening.push_back(parse_preprocessing(s));
    }
    if (j.contains("fusion")) {
      const json& f = j["fusion"];
      check_keys(f, {"weights", "b0", "sigma0", "w", "sigma_p"}, "fusion");
      if (f.contains("weights")) c.fusion.weights = parse_weight_kind(f["weights"].get<std::string>());
      read(f, "b0", c.fusion.b0);
      read(f, "sigma0", c.fusion.sigma0);
      read(f, "w", c.fusion.constant);
      if (f.contains("sigma_p")) {
        const auto s = f["sigma_p"].get<std::string>();
        if (s == "stddev") c.fusion.spread = SpreadMode::StdDev;
        else if (s == "variance") c.fusion.spread = SpreadMode::Variance;
        else throw ConfigError("fusion.sigma_p must be 'stddev' or 'variance'");
      }
    }
    c.cvae.arch.m = c.disturbance.m;
    if (j.contains("cvae")) {
      const json& v = j["cvae"];
      check_keys(v, {"architecture", "training", "train_size", "score"}, "cvae");
      if (v.contains("architecture")) {
        json a = v["architecture"];
        if (!a.contains("m")) a["m"] = c.disturbance.m;
        c.cvae.arch = CvaeArchitecture::from_json(a.dump());
      }
      if (v.contains("training")) {
        const json& t = v["training"];
        check_keys(t, {"epochs", "batch", "lr", "beta", "adam_beta1", "adam_beta2", "adam_eps", "divergence_limit"},
                   "cvae.training");
        c.cvae.training = TrainConfig::from_json(t.dump());
      }
      read(v, "train_size", c.cvae.train_size);
      if (v.contains("score")) {
        const auto s = v["score"].get<std::string>();
        if (s == "mean") c.cvae.score = ScoreMode::Mean;
        else if (s == "sampled") c.cvae.score = ScoreMode::Sampled;
        else throw ConfigError("cvae.score must be 'mean' or 'sampled'");
      }
    }
    c.whiten.m = c.disturbance.m;
    c.whiten.stride = c.disturbance.m;
    if (j.contains("whiten")) {
      const json& w = j["whiten"];
      check_keys(w, {"stride", "n_adj", "guard", "eps_ridge"}, "whiten");
      read(w, "stride", c.whiten.stride);
      read(w, "n_adj", c.whiten.n_adj);
      read(w, "guard", c.whiten.guard);
      read(w, "eps_ridge", c.whiten.eps_ridge);
    }
    if (j.contains("tyler")) {
      const json& t = j["tyler"];
      check_keys(t, {"tol", "max_iter"}, "tyler");
      read(t, "tol", c.tyler.tol);
      read(t, "max_iter", c.tyler.max_iter);
    }
    if (j.contains("cube")) {
      const json& k = j["cube"];
      check_keys(k, {"n_ranges", "n_pulses", "targets"}, "cube");
      read(k, "n_ranges", c.cube.n_ranges);
      read(k, "n_pulses", c.cube.n_pulses);
      if (k.contains("targets")) {
        for (const auto& t : k["targets"]) {
          check_keys(t, {"range", "pulse_offset", "d", "snr_db"}, "cube.targets");
          CubeTargetConfig tc;
          read(t, "range", tc.range);
          read(t, "pulse_offset", tc.pulse_offset);
          read(t, "d", tc.d);
          read(t, "snr_db", tc.snr_db);
          c.cube.targets.push_back(tc);
        }
      }
    }
    read(j, "seed", c.seed);
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    read(j, "jobs", c.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

}  // namespace radood
