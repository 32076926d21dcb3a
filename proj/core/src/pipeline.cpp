#include "radood/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "radood/parallel.hpp"
#include "radood/whiten.hpp"

namespace radood {

namespace {

constexpr int kKinds = 5;
constexpr int kModes = 3;
constexpr std::size_t kBlock = 2048;

int index_of(DetectorKind k) { return static_cast<int>(k); }
int index_of(Preprocessing p) { return static_cast<int>(p); }

bool is_classical(const std::string& name) { return name != kCvaeName && name != kFusedName; }

struct NeedSet {
  Scene::Needs est;
  std::array<bool, kKinds> cls{};
  std::array<bool, kModes> cvae{};
};

NeedSet need_set(const std::vector<DetectorId>& roster) {
  NeedSet n;
  n.est = needs_for(roster);
  for (const auto& id : roster) {
    if (is_classical(id.name)) {
      n.cls[index_of(parse_detector_kind(id.name))] = true;
    } else {
      n.cvae[index_of(id.pre)] = true;
      if (id.name == kFusedName) n.cls[index_of(DetectorKind::ANMF_Tyler)] = true;
    }
  }
  return n;
}

// Raw statistics of one snapshot: every bin of each needed classical
// detector and one CVAE score per needed mode.
struct RawScores {
  std::array<std::array<double, 64>, kKinds> cls{};
  std::array<double, kModes> cvae{};
};

void score(const Scene& scene, const Models& models, ScoreMode mode, const NeedSet& ns, const ComplexVector& z,
           const Scene::Estimates& est, Rng* rng, RawScores& out) {
  for (int k = 0; k < kKinds; ++k) {
    if (ns.cls[k]) scene.classical(static_cast<DetectorKind>(k), z, est, out.cls[k].data());
  }
  for (int p = 0; p < kModes; ++p) {
    if (!ns.cvae[p]) continue;
    const auto pre = static_cast<Preprocessing>(p);
    out.cvae[p] = models.at(pre).recon_score(scene.profile(z, pre, est), mode, rng);
  }
}

std::string mode_file(Preprocessing p, const char* prefix, const char* ext) {
  return std::string(prefix) + to_string(p) + ext;
}

std::vector<DetectorId> merge_roster(const std::vector<DetectorId>& roster) {
  std::vector<DetectorId> all = roster;
  for (const auto& id : roster) {
    if (id.name != kFusedName) continue;
    for (DetectorId b : {DetectorId{"ANMF-Tyler", Preprocessing::Raw}, DetectorId{kCvaeName, id.pre}}) {
      if (std::find(all.begin(), all.end(), b) == all.end()) all.push_back(b);
    }
  }
  return all;
}

struct Plan {
  struct Item {
    DetectorId id;
    int kind = -1;  // classical detector index, -1 for learned detectors
    int mode = 0;
    const CalibrationEntry* entry = nullptr;
    const CalibrationEntry* anmf = nullptr;
    const CalibrationEntry* cvae = nullptr;
  };
  NeedSet ns;
  std::vector<Item> items;

  double statistic(const Item& it, const RawScores& r, int d) const {
    const auto b = static_cast<std::size_t>(d);
    if (it.kind >= 0) return r.cls[static_cast<std::size_t>(it.kind)][b];
    if (it.id.name == kCvaeName) return r.cvae[static_cast<std::size_t>(it.mode)];
    const double pa = it.anmf->bank.pvalue(d, r.cls[static_cast<std::size_t>(index_of(DetectorKind::ANMF_Tyler))][b]);
    const double pc = it.cvae->bank.pvalue(d, r.cvae[static_cast<std::size_t>(it.mode)]);
    return fuse_logp(pa, pc, it.entry->weights.at(b));
  }
  static double threshold(const Item& it, int d) { return it.entry->thresholds.lambda.at(static_cast<std::size_t>(d)); }
};

Plan make_plan(const std::vector<DetectorId>& roster, const Calibration& cal, const Models& models, int m) {
  if (m > 64) throw InvalidArgument("scoring: m above 64 is not supported");
  Plan pl;
  pl.ns = need_set(roster);
  for (const auto& id : roster) {
    Plan::Item it;
    it.id = id;
    it.entry = &cal.at(id);
    if (is_classical(id.name)) {
      it.kind = index_of(parse_detector_kind(id.name));
    } else {
      it.mode = index_of(id.pre);
      models.at(id.pre);
      if (id.name == kFusedName) {
        it.anmf = &cal.at({"ANMF-Tyler", Preprocessing::Raw});
        it.cvae = &cal.at({kCvaeName, id.pre});
        if (it.entry->weights.size() != static_cast<std::size_t>(m)) {
          throw DependencyError("fused calibration for " + id.label() + " has no weights");
        }
      }
    }
    if (it.entry->thresholds.lambda.size() != static_cast<std::size_t>(m)) {
      throw DependencyError("calibration for " + id.label() + " has the wrong bin count");
    }
    pl.items.push_back(it);
  }
  return pl;
}

}  // namespace

const Cvae& Models::at(Preprocessing p) const {
  const auto it = nets.find(p);
  if (it == nets.end()) throw DependencyError("no trained CVAE for preprocessing '" + to_string(p) + "'");
  return it->second;
}

Models train_models(const ExperimentConfig& cfg, const Scene& scene) {
  Models out;
  const auto roster = cfg.roster();
  if (std::none_of(roster.begin(), roster.end(), [](const DetectorId& id) { return id.learned(); })) return out;
  for (const auto pre : cfg.whitening) {
    Scene::Needs needs;
    needs.local = pre == Preprocessing::Local;
    std::vector<ComplexVector> data(static_cast<std::size_t>(cfg.cvae.train_size));
    parallel_for(data.size(), cfg.jobs, [&](std::size_t i) {
      const Trial t = scene.draw(cfg.seed, StreamTag::Train, i, needs.any());
      data[i] = scene.profile(t.c, pre, scene.estimate(t, needs));
    });
    Cvae net(cfg.cvae.arch, derive_seed(cfg.seed, {tag(StreamTag::CvaeInit), static_cast<std::uint64_t>(pre)}));
    net.fit_normalization(data);
    TrainConfig tc = cfg.cvae.training;
    tc.seed = derive_seed(cfg.seed, {tag(StreamTag::Train), 0x100 + static_cast<std::uint64_t>(pre)});
    tc.jobs = cfg.jobs;
    auto result = train(net, data, tc);
    out.traces[pre] = std::move(result.trace);
    out.nets.emplace(pre, std::move(net));
  }
  return out;
}

void save_models(const Models& models, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  for (const auto& [pre, net] : models.nets) {
    TrainConfig tc = cfg.cvae.training;
    tc.seed = derive_seed(cfg.seed, {tag(StreamTag::Train), 0x100 + static_cast<std::uint64_t>(pre)});
    net.save(dir / mode_file(pre, "cvae_", ".ckpt"), tc);
    const auto it = models.traces.find(pre);
    if (it != models.traces.end()) write_loss_trace(it->second, dir / mode_file(pre, "loss_", ".csv"));
  }
}

Models load_models(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  Models out;
  const auto ns = need_set(cfg.roster());
  for (int p = 0; p < kModes; ++p) {
    if (!ns.cvae[p]) continue;
    const auto pre = static_cast<Preprocessing>(p);
    const auto path = dir / mode_file(pre, "cvae_", ".ckpt");
    if (!std::filesystem::exists(path)) {
      throw DependencyError("missing checkpoint " + path.string() + " (run `train` first)");
    }
    Cvae net = Cvae::load(path);
    if (net.architecture().to_json() != cfg.cvae.arch.to_json()) {
      throw DependencyError("checkpoint " + path.string() + " does not match the configured architecture");
    }
    out.nets.emplace(pre, std::move(net));
  }
  return out;
}

const CalibrationEntry* Calibration::find(const DetectorId& id) const {
  for (const auto& e : entries) {
    if (e.detector == id.name && e.preprocessing == to_string(id.pre)) return &e;
  }
  return nullptr;
}

const CalibrationEntry& Calibration::at(const DetectorId& id) const {
  const auto* e = find(id);
  if (!e) throw DependencyError("detector " + id.label() + " has not been calibrated");
  return *e;
}

void save_calibration(const Calibration& cal, const std::filesystem::path& dir) {
  write_calibration(cal.entries, dir / "calibration.bin");
  write_calibration_summary(cal.entries, dir / "calibration.csv");
}

Calibration load_calibration(const std::filesystem::path& dir) {
  const auto path = dir / "calibration.bin";
  if (!std::filesystem::exists(path)) throw DependencyError("missing " + path.string() + " (run `calibrate` first)");
  Calibration cal;
  cal.entries = read_calibration(path);
  if (cal.entries.empty()) throw DependencyError(path.string() + " holds no entries");
  cal.pfa = cal.entries.front().thresholds.pfa;
  return cal;
}

Calibration calibrate(const ExperimentConfig& cfg, const Scene& scene, const Models& models) {
  const auto roster = cfg.roster();
  const auto ns = need_set(roster);
  const int m = scene.m();
  const auto n = static_cast<std::size_t>(cfg.calibration_trials);

  std::array<std::vector<std::vector<double>>, kKinds> cls;
  std::array<std::vector<double>, kModes> cv;
  for (int k = 0; k < kKinds; ++k) {
    if (ns.cls[k]) cls[k].assign(static_cast<std::size_t>(m), std::vector<double>(n));
  }
  for (int p = 0; p < kModes; ++p) {
    if (ns.cvae[p]) cv[p].resize(n);
  }

  const bool sampled = cfg.cvae.score == ScoreMode::Sampled;
  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    const Trial t = scene.draw(cfg.seed, StreamTag::Eval, i, ns.est.any());
    const auto est = scene.estimate(t, ns.est);
    Rng rng = substream(cfg.seed, {tag(StreamTag::Scoring), tag(StreamTag::Eval), i});
    RawScores r;
    score(scene, models, cfg.cvae.score, ns, t.c, est, sampled ? &rng : nullptr, r);
    for (int k = 0; k < kKinds; ++k) {
      if (!ns.cls[k]) continue;
      for (int b = 0; b < m; ++b) cls[k][static_cast<std::size_t>(b)][i] = r.cls[k][static_cast<std::size_t>(b)];
    }
    for (int p = 0; p < kModes; ++p) {
      if (ns.cvae[p]) cv[p][i] = r.cvae[p];
    }
  });

  Calibration cal;
  cal.pfa = cfg.pfa;
  const auto all = merge_roster(roster);
  // Branch entries first, so the fused entry can look them up.
  std::vector<CalibrationEntry> built;
  auto find_built = [&](const DetectorId& id) -> const CalibrationEntry& {
    for (const auto& e : built) {
      if (e.detector == id.name && e.preprocessing == to_string(id.pre)) return e;
    }
    throw DependencyError("calibration branch " + id.label() + " missing");
  };
  for (const auto& id : all) {
    if (id.name == kFusedName) continue;
    CalibrationEntry e;
    e.detector = id.name;
    e.preprocessing = to_string(id.pre);
    if (is_classical(id.name)) {
      const auto kind = parse_detector_kind(id.name);
      const auto& nulls = cls[index_of(kind)];
      if (kind == DetectorKind::MF && scene.generator().spec().is_gaussian()) {
        e.thresholds.pfa = cfg.pfa;
        e.thresholds.lambda.assign(static_cast<std::size_t>(m), -std::log(cfg.pfa));
        e.thresholds.counts.assign(static_cast<std::size_t>(m), n);
      } else {
        e.thresholds = cfar_threshold(nulls, cfg.pfa);
      }
      e.bank = EcdfBank(nulls, id.label());
    } else {
      const auto& nulls = cv[index_of(id.pre)];
      const double lambda = cfar_quantile(nulls, cfg.pfa);
      e.thresholds.pfa = cfg.pfa;
      e.thresholds.lambda.assign(static_cast<std::size_t>(m), lambda);
      e.thresholds.counts.assign(static_cast<std::size_t>(m), n);
      e.bank = EcdfBank(std::vector<std::vector<double>>(static_cast<std::size_t>(m), nulls), id.label());
    }
    built.push_back(std::move(e));
  }
  for (const auto& id : all) {
    if (id.name != kFusedName) continue;
    const auto& anmf = find_built({"ANMF-Tyler", Preprocessing::Raw});
    const auto& cvae = find_built({kCvaeName, id.pre});
    const auto& a_null = cls[index_of(DetectorKind::ANMF_Tyler)];
    const auto& c_null = cv[index_of(id.pre)];

    WeightSchedule w;
    switch (cfg.fusion.weights) {
      case WeightKind::GaussianPrior: w = weights_gaussian_prior(cfg.fusion.b0, cfg.fusion.sigma0, m); break;
      case WeightKind::Constant: w = weights_constant(cfg.fusion.constant, m); break;
      case WeightKind::Sigmoid: {
        std::vector<std::vector<double>> pv(static_cast<std::size_t>(m), std::vector<double>(n));
        for (int b = 0; b < m; ++b) {
          for (std::size_t i = 0; i < n; ++i) pv[static_cast<std::size_t>(b)][i] = cvae.bank.pvalue(b, c_null[i]);
        }
        w = weights_sigmoid(pv, cfg.fusion.spread);
        break;
      }
    }
    std::vector<std::vector<double>> fused(static_cast<std::size_t>(m), std::vector<double>(n));
    parallel_for(static_cast<std::size_t>(m), cfg.jobs, [&](std::size_t b) {
      const int bi = static_cast<int>(b);
      for (std::size_t i = 0; i < n; ++i) {
        fused[b][i] = fuse_logp(anmf.bank.pvalue(bi, a_null[b][i]), cvae.bank.pvalue(bi, c_null[i]), w.w[b]);
      }
    });
    CalibrationEntry e;
    e.detector = kFusedName;
    e.preprocessing = to_string(id.pre);
    e.thresholds = cfar_threshold(fused, cfg.pfa);
    e.bank = EcdfBank(std::move(fused), id.label());
    e.weights = w.w;
    built.push_back(std::move(e));
  }
  // Roster order, then branch-only entries.
  for (const auto& id : all) cal.entries.push_back(find_built(id));
  return cal;
}

Evaluator::Evaluator(const ExperimentConfig& cfg, const Scene& scene, const Models& models, const Calibration& cal)
    : cfg_(cfg), scene_(scene), models_(models), cal_(cal) {}

std::vector<PdSurface> Evaluator::evaluate_grid(const std::vector<DetectorId>& roster,
                                                const std::vector<double>& snr_db, const std::vector<int>& bins,
                                                std::size_t trials, std::uint64_t seed) const {
  const Plan pl = make_plan(roster, cal_, models_, scene_.m());
  for (int d : bins) {
    if (d < 0 || d >= scene_.m()) throw InvalidArgument("evaluate_grid: bin outside [0, m)");
  }
  const std::size_t ni = pl.items.size(), ns = snr_db.size(), nb = bins.size();
  const std::size_t cells = ni * ns * nb;
  std::vector<double> snr_lin(ns);
  for (std::size_t j = 0; j < ns; ++j) snr_lin[j] = std::pow(10.0, snr_db[j] / 10.0);
  const bool sampled = cfg_.cvae.score == ScoreMode::Sampled;

  std::vector<std::uint64_t> hits(cells, 0);
  std::vector<std::uint8_t> block;
  for (std::size_t start = 0; start < trials; start += kBlock) {
    const std::size_t len = std::min(kBlock, trials - start);
    block.assign(len * cells, 0);
    parallel_for(len, cfg_.jobs, [&](std::size_t k) {
      const std::size_t i = start + k;
      const Trial t = scene_.draw(seed, StreamTag::Test, i, pl.ns.est.any());
      const auto est = scene_.estimate(t, pl.ns.est);
      std::uint8_t* out = block.data() + k * cells;
      RawScores r;
      for (std::size_t j = 0; j < ns; ++j) {
        for (std::size_t q = 0; q < nb; ++q) {
          const int d = bins[q];
          const ComplexVector z = scene_.snapshot(t, snr_lin[j], d);
          Rng rng = substream(seed, {tag(StreamTag::Scoring), tag(StreamTag::Test), i, j * nb + q});
          score(scene_, models_, cfg_.cvae.score, pl.ns, z, est, sampled ? &rng : nullptr, r);
          for (std::size_t it = 0; it < ni; ++it) {
            const auto& item = pl.items[it];
            out[(it * ns + j) * nb + q] = pl.statistic(item, r, d) >= Plan::threshold(item, d) ? 1 : 0;
          }
        }
      }
    });
    for (std::size_t k = 0; k < len; ++k) {
      const std::uint8_t* row = block.data() + k * cells;
      for (std::size_t c = 0; c < cells; ++c) hits[c] += row[c];
    }
  }

  std::vector<PdSurface> out;
  for (std::size_t it = 0; it < ni; ++it) {
    PdSurface s{pl.items[it].id.name, to_string(pl.items[it].id.pre), {}};
    for (std::size_t j = 0; j < ns; ++j) {
      for (std::size_t q = 0; q < nb; ++q) {
        const std::size_t k = hits[(it * ns + j) * nb + q];
        PdPoint p;
        p.snr_db = snr_db[j];
        p.d = bins[q];
        p.trials = trials;
        p.pd = trials ? static_cast<double>(k) / static_cast<double>(trials) : 0.0;
        p.ci = wilson_halfwidth(k, trials);
        s.points.push_back(p);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

PdEstimate Evaluator::evaluate_detector(const DetectorId& id, double snr_db, int d, std::size_t trials,
                                        std::uint64_t seed) const {
  const auto s = evaluate_grid({id}, {snr_db}, {d}, trials, seed);
  const auto& p = s.front().points.front();
  return {p.pd, p.ci, p.trials, static_cast<std::size_t>(std::llround(p.pd * static_cast<double>(p.trials)))};
}

std::vector<PfaCheck> Evaluator::holdout(const std::vector<DetectorId>& roster, std::size_t n, std::uint64_t seed,
                                         double level) const {
  const Plan pl = make_plan(roster, cal_, models_, scene_.m());
  const int m = scene_.m();
  const std::size_t cells = pl.items.size() * static_cast<std::size_t>(m);
  const bool sampled = cfg_.cvae.score == ScoreMode::Sampled;
  std::vector<std::uint64_t> hits(cells, 0);
  std::vector<std::uint8_t> block;
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t len = std::min(kBlock, n - start);
    block.assign(len * cells, 0);
    parallel_for(len, cfg_.jobs, [&](std::size_t k) {
      const std::size_t i = start + k;
      const Trial t = scene_.draw(seed, StreamTag::Holdout, i, pl.ns.est.any());
      const auto est = scene_.estimate(t, pl.ns.est);
      Rng rng = substream(seed, {tag(StreamTag::Scoring), tag(StreamTag::Holdout), i});
      RawScores r;
      score(scene_, models_, cfg_.cvae.score, pl.ns, t.c, est, sampled ? &rng : nullptr, r);
      std::uint8_t* out = block.data() + k * cells;
      for (std::size_t it = 0; it < pl.items.size(); ++it) {
        for (int d = 0; d < m; ++d) {
          out[it * static_cast<std::size_t>(m) + static_cast<std::size_t>(d)] =
              pl.statistic(pl.items[it], r, d) >= Plan::threshold(pl.items[it], d) ? 1 : 0;
        }
      }
    });
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t c = 0; c < cells; ++c) hits[c] += block[k * cells + c];
    }
  }
  const auto [lo, hi] = binomial_interval(n, cal_.pfa, level);
  std::vector<PfaCheck> out;
  for (std::size_t it = 0; it < pl.items.size(); ++it) {
    for (int d = 0; d < m; ++d) {
      PfaCheck c;
      c.id = pl.items[it].id;
      c.bin = d;
      c.n = n;
      c.exceed = hits[it * static_cast<std::size_t>(m) + static_cast<std::size_t>(d)];
      c.pfa_hat = n ? static_cast<double>(c.exceed) / static_cast<double>(n) : 0.0;
      c.lo = lo;
      c.hi = hi;
      c.within = c.exceed >= lo && c.exceed <= hi;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<double> Evaluator::holdout_pvalues(const DetectorId& id, int b, std::size_t n, std::uint64_t seed) const {
  const Plan pl = make_plan({id}, cal_, models_, scene_.m());
  if (b < 0 || b >= scene_.m()) throw InvalidArgument("holdout_pvalues: bin outside [0, m)");
  const auto& item = pl.items.front();
  const bool sampled = cfg_.cvae.score == ScoreMode::Sampled;
  std::vector<double> out(n);
  parallel_for(n, cfg_.jobs, [&](std::size_t i) {
    const Trial t = scene_.draw(seed, StreamTag::Holdout, i, pl.ns.est.any());
    const auto est = scene_.estimate(t, pl.ns.est);
    Rng rng = substream(seed, {tag(StreamTag::Scoring), tag(StreamTag::Holdout), i});
    RawScores r;
    score(scene_, models_, cfg_.cvae.score, pl.ns, t.c, est, sampled ? &rng : nullptr, r);
    out[i] = item.entry->bank.pvalue(b, pl.statistic(item, r, b));
  });
  return out;
}

void write_holdout_csv(const std::vector<PfaCheck>& checks, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << "detector,preprocessing,bin,n,exceed,pfa_hat,lo,hi,within\n";
  char buf[256];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%zu,%zu,%.17g,%zu,%zu,%d\n", c.id.name.c_str(),
                  to_string(c.id.pre).c_str(), c.bin, c.n, c.exceed, c.pfa_hat, c.lo, c.hi, c.within ? 1 : 0);
    f << buf;
  }
  if (!f) throw IoError("write failed for " + path.string());
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& dir = cfg.output;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  {
    std::ofstream f(dir / "config.json", std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / "config.json").string());
    f << cfg.to_json() << "\n";
  }

  const Scene scene = run_stage("setup", cfg.seed, [&] {
    return Scene(cfg.disturbance, cfg.k_secondary, cfg.tyler, cfg.whiten.eps_ridge);
  });
  PipelineResult res;
  res.models = run_stage("train", cfg.seed, [&] {
    auto models = train_models(cfg, scene);
    save_models(models, cfg, dir);
    return models;
  });
  res.calibration = run_stage("calibrate", cfg.seed, [&] {
    auto cal = calibrate(cfg, scene, res.models);
    save_calibration(cal, dir);
    return cal;
  });
  const Evaluator ev(cfg, scene, res.models, res.calibration);
  const auto roster = cfg.roster();
  if (cfg.holdout_trials > 0) {
    res.holdout = run_stage("holdout", cfg.seed, [&] {
      auto checks = ev.holdout(roster, static_cast<std::size_t>(cfg.holdout_trials), cfg.seed);
      write_holdout_csv(checks, dir / "holdout_pfa.csv");
      return checks;
    });
  }
  res.surfaces = run_stage("evaluate", cfg.seed, [&] {
    return ev.evaluate_grid(roster, cfg.snr_db, cfg.doppler_bins, static_cast<std::size_t>(cfg.trials), cfg.seed);
  });
  run_stage("report", cfg.seed, [&] {
    emit_report(res.surfaces, dir);
    return 0;
  });
  return res;
}

std::vector<CubeDetection> detect_cube(const ExperimentConfig& cfg, const RangePulseCube& cube, const Models& models,
                                       const Calibration& cal) {
  cube.validate();
  const int m = cfg.disturbance.m;
  const Scene scene(cfg.disturbance, cfg.k_secondary, cfg.tyler, cfg.whiten.eps_ridge);
  std::vector<DetectorId> roster;
  for (const auto& id : cfg.roster()) {
    if (cal.find(id)) roster.push_back(id);
  }
  if (roster.empty()) throw DependencyError("detect: no roster detector is calibrated");
  const Plan pl = make_plan(roster, cal, models, m);
  const auto& pl_ns = pl.ns;

  const auto snaps = segment(cube, m, cfg.whiten.stride);
  const int per_gate = snapshots_per_gate(cube.n_pulses, m, cfg.whiten.stride);
  std::vector<std::vector<CubeDetection>> per(static_cast<std::size_t>(cube.n_ranges));

  parallel_for(static_cast<std::size_t>(cube.n_ranges), cfg.jobs, [&](std::size_t r) {
    const auto nb = neighborhood(static_cast<int>(r), cube.n_ranges, cfg.whiten);
    ComplexMatrix secondary(m, static_cast<Eigen::Index>(nb.size()) * per_gate);
    Eigen::Index col = 0;
    for (int g : nb) {
      for (int s = 0; s < per_gate; ++s) secondary.col(col++) = snaps[static_cast<std::size_t>(g * per_gate + s)].y;
    }
    if (pl_ns.est.any() && col == 0) throw InsufficientData("detect: gate " + std::to_string(r) + " has no neighbors");
    const auto est = scene.estimate(secondary, pl_ns.est);
    auto& rows = per[r];
    for (int s = 0; s < per_gate; ++s) {
      const auto& snap = snaps[r * static_cast<std::size_t>(per_gate) + static_cast<std::size_t>(s)];
      Rng rng = substream(cfg.seed, {tag(StreamTag::Scoring), tag(StreamTag::Cube), r, static_cast<std::uint64_t>(s)});
      RawScores raw;
      score(scene, models, cfg.cvae.score, pl_ns, snap.y, est, cfg.cvae.score == ScoreMode::Sampled ? &rng : nullptr,
            raw);
      for (const auto& it : pl.items) {
        for (int d = 0; d < m; ++d) {
          const double stat = pl.statistic(it, raw, d);
          const double lambda = Plan::threshold(it, d);
          rows.push_back({snap.index, d, it.id.name, to_string(it.id.pre), stat, lambda, stat >= lambda});
        }
      }
    }
  });
  std::vector<CubeDetection> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

void write_detections_csv(const std::vector<CubeDetection>& rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << "range,pulse,doppler_bin,detector,preprocessing,statistic,threshold,detected\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%s,%s,%.17g,%.17g,%d\n", r.index.r, r.index.p, r.bin, r.detector.c_str(),
                  r.preprocessing.c_str(), r.statistic, r.threshold, r.detected ? 1 : 0);
    f << buf;
  }
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace radood
