// End-to-end acceptance run. Prints one PASS/FAIL line per criterion, with
// indented detail lines, and exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "radood/calib.hpp"
#include "radood/covest.hpp"
#include "radood/cvae.hpp"
#include "radood/detectors.hpp"
#include "radood/experiment.hpp"
#include "radood/linalg.hpp"
#include "radood/pipeline.hpp"
#include "radood/rng.hpp"
#include "radood/scene.hpp"
#include "radood/sim.hpp"
#include "radood/whiten.hpp"

using namespace radood;

namespace {

// Pinned tolerances and budgets.
constexpr double kPfa = 1e-2;
constexpr double kC1Lo = 0.0070, kC1Hi = 0.0130;
constexpr std::size_t kC1Trials = 100000;
constexpr double kC1Seconds = 10.0;
constexpr std::size_t kC2Samples = 100000;
constexpr double kC2Ks = 0.01;
constexpr int kC3Trials = 100;
constexpr double kC3Residual = 1e-10;
constexpr double kC3ScaleTol = 1e-12;
constexpr int kC4Grid = 100000;
constexpr double kC4Identity = 1e-10;
constexpr int kC4Draws = 1000000;
constexpr double kC4Moment = 0.02;
constexpr int kC5Draws = 1000000;
constexpr double kC5Tol = 5e-3;
constexpr double kC6RelErr = 1e-4;
constexpr double kC6Seconds = 60.0;
constexpr double kC6FdStep = 1e-6;
constexpr double kC6Floor = 1e-6;
constexpr int kC7Snapshots = 100000;
constexpr double kC7Tol = 0.02;
constexpr std::size_t kC8Trials = 100000;
constexpr int kC8Calibration = 100000;
constexpr double kC8Level = 0.99;
constexpr std::size_t kC9Trials = 2000;
constexpr double kC9SweepSeconds = 1800.0;
constexpr int kC9Cores = 8;
constexpr std::size_t kC10Trials = 1000;
constexpr double kC10Snr = 25.0;
constexpr double kC10Pd = 0.9;
constexpr int kC11Calibration = 10000;
constexpr int kC11RankNull = 4000, kC11RankTest = 4000;
constexpr int kC12Reps = 100;
constexpr int kC12Bank = 10000;
constexpr double kC12Alpha = 0.05;
constexpr double kC12Coverage = 0.95;
constexpr int kTrainSize = 20000;
constexpr int kTrainEpochs = 20;
constexpr Preprocessing kCvaePre = Preprocessing::Local;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... A>
void note(const char* fmt, A... a) {
  std::printf("    ");
  std::printf(fmt, a...);
  std::printf("\n");
  std::fflush(stdout);
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

Scene make_scene(const ExperimentConfig& cfg) {
  return Scene(cfg.disturbance, cfg.k_secondary, cfg.tyler, cfg.whiten.eps_ridge);
}

DisturbanceSpec env_spec(DisturbanceKind kind) {
  DisturbanceSpec s;
  s.kind = kind;
  s.rho = 0.5;
  s.mu_texture = 1.0;
  s.sigma_n2 = 0.1;
  return s;
}

std::vector<double> snr_grid() {
  std::vector<double> g;
  for (double s = -5.0; s <= 30.0 + 1e-9; s += 2.5) g.push_back(s);
  return g;
}

double combined_ci(const PdPoint& a, const PdPoint& b) { return std::hypot(a.ci, b.ci); }

const PdSurface& surface(const std::vector<PdSurface>& all, const std::string& label) {
  for (const auto& s : all)
    if (s.label() == label) return s;
  throw DependencyError("no surface " + label);
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.disturbance = env_spec(DisturbanceKind::cGN);
  cfg.detectors = {"MF"};
  cfg.calibration_trials = 1000;
  cfg.jobs = 1;
  cfg.seed = 101;
  const auto scene = make_scene(cfg);
  const Models models;
  const auto cal = calibrate(cfg, scene, models);
  const Evaluator ev(cfg, scene, models, cal);
  const auto checks = ev.holdout(cfg.roster(), kC1Trials, 102);
  const double secs = since(t0);
  double lo = 1.0, hi = 0.0;
  for (const auto& c : checks) {
    lo = std::min(lo, c.pfa_hat);
    hi = std::max(hi, c.pfa_hat);
  }
  const bool analytic = cal.at({"MF", Preprocessing::Raw}).thresholds.lambda[0] == -std::log(kPfa);
  verdict(1, "analytic MF CFAR", analytic && lo >= kC1Lo && hi <= kC1Hi && secs < kC1Seconds,
          fmt("P_fa over 16 bins in [%.5f, %.5f], need [%.4f, %.4f]; %.1f s", lo, hi, kC1Lo, kC1Hi, secs));
}

void criterion2() {
  ExperimentConfig cfg;
  cfg.disturbance = env_spec(DisturbanceKind::cGN);
  const auto scene = make_scene(cfg);
  std::vector<double> v(kC2Samples);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Trial t = scene.draw(201, StreamTag::Holdout, i, false);
    v[i] = scene.oracle_bank().mf(scene.oracle_bank().project(t.c), 0);
  }
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = -std::expm1(-v[i]);
    ks = std::max({ks, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  verdict(2, "Exp(1) null law of the MF", ks < kC2Ks, fmt("KS = %.5f at n = %zu, need < %.3f", ks, v.size(), kC2Ks));
}

void criterion3() {
  ExperimentConfig cfg;
  cfg.disturbance = env_spec(DisturbanceKind::cGN);
  const DisturbanceGenerator gen(cfg.disturbance);
  const int m = 16, k = 32;
  double worst_update = 0.0, worst_fixed = 0.0, worst_scale = 0.0;
  int worst_iter = 0;
  bool converged = true;
  for (int trial = 0; trial < kC3Trials; ++trial) {
    Rng rng = substream(301, {static_cast<std::uint64_t>(trial)});
    const ComplexMatrix z = gen.draw_many(rng, k);
    TylerReport rep;
    CovarianceEstimate est;
    try {
      est = tyler_fp(z, TylerOptions{kC3Residual, 100}, &rep);
    } catch (const ConvergenceFailure&) {
      converged = false;
      continue;
    }
    worst_iter = std::max(worst_iter, rep.iterations);
    worst_update = std::max(worst_update, rep.residuals.back());
    // Plug the estimate back into the fixed-point map.
    const ComplexMatrix s = est.matrix.matrix();
    const Eigen::LLT<ComplexMatrix> llt(s);
    ComplexMatrix next = ComplexMatrix::Zero(m, m);
    for (int j = 0; j < k; ++j) {
      const ComplexVector x = z.col(j);
      const double q = x.dot(llt.solve(x)).real();
      next.noalias() += x * x.adjoint() / q;
    }
    next *= static_cast<double>(m) / next.trace().real();
    worst_fixed = std::max(worst_fixed, (next - s).norm() / s.norm());
    // Per-snapshot positive scaling.
    ComplexMatrix scaled = z;
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int j = 0; j < k; ++j) scaled.col(j) *= std::pow(10.0, u(rng));
    const ComplexMatrix s2 = tyler_fp(scaled, TylerOptions{kC3Residual, 100}).matrix.matrix();
    worst_scale = std::max(worst_scale, (s2 - s).norm() / s.norm());
  }
  verdict(3, "Tyler fixed point", converged && worst_update < kC3Residual && worst_fixed < kC3Residual &&
                                      worst_scale < kC3ScaleTol,
          fmt("max update %.2e, max plug-back %.2e, max iterations %d, max scaling change %.2e", worst_update,
              worst_fixed, worst_iter, worst_scale));
}

void criterion4() {
  Rng rng(401);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_id = 0.0;
  for (int i = 0; i < kC4Grid; ++i) {
    const double s = 1e-3 + 10.0 * u(rng);
    const Complex d = std::polar(s * 0.999 * u(rng), 2.0 * std::numbers::pi * u(rng));
    if (s + d.real() < kEpsNum) continue;
    const auto k = reparam_scales(RealVector::Constant(1, s), ComplexVector::Constant(1, d));
    const Complex kr = k.k_r[0];
    const double ki = k.k_i[0];
    worst_id = std::max(worst_id, std::abs(std::norm(kr) + ki * ki - s) / s);
    worst_id = std::max(worst_id, std::abs(kr * kr - ki * ki - d) / s);
  }
  PosteriorParams post;
  post.mu = ComplexVector(3);
  post.mu << Complex(0.5, -1.0), Complex(0.0, 0.0), Complex(2.0, 0.3);
  post.sigma = RealVector(3);
  post.sigma << 1.5, 0.8, 0.2;
  post.delta = ComplexVector(3);
  post.delta << Complex(0.5, 0.5), Complex(-0.3, 0.1), Complex(0.0, -0.19);
  ComplexVector mean = ComplexVector::Zero(3), pv = ComplexVector::Zero(3);
  RealVector var = RealVector::Zero(3);
  for (int i = 0; i < kC4Draws; ++i) {
    const auto x = sample_latent(post, rng);
    mean += x;
    for (int j = 0; j < 3; ++j) {
      const Complex c = x[j] - post.mu[j];
      var[j] += std::norm(c);
      pv[j] += c * c;
    }
  }
  mean /= kC4Draws;
  var /= kC4Draws;
  pv /= kC4Draws;
  double worst_mc = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double scale = post.sigma[j];
    worst_mc = std::max(worst_mc, std::abs(mean[j] - post.mu[j]) / std::max(std::abs(post.mu[j]), std::sqrt(scale)));
    worst_mc = std::max(worst_mc, std::abs(var[j] - scale) / scale);
    worst_mc = std::max(worst_mc, std::abs(pv[j] - post.delta[j]) / scale);
  }
  verdict(4, "reparameterization moments", worst_id < kC4Identity && worst_mc < kC4Moment,
          fmt("identity error %.2e (need < %.0e), Monte Carlo moment error %.4f (need < %.2f)", worst_id,
              kC4Identity, worst_mc, kC4Moment));
}

PosteriorParams scalar_post(Complex mu, double sigma, Complex delta) {
  PosteriorParams p;
  p.mu = ComplexVector::Constant(1, mu);
  p.sigma = RealVector::Constant(1, sigma);
  p.delta = ComplexVector::Constant(1, delta);
  return p;
}

// KL(q || CN(0, 1)) by Monte Carlo over the real 2-d Gaussian of (Re, Im).
double mc_kl(const PosteriorParams& post, int n, std::uint64_t seed) {
  const double s = post.sigma[0];
  const Complex d = post.delta[0];
  Eigen::Matrix2d c;
  c << (s + d.real()) / 2, d.imag() / 2, d.imag() / 2, (s - d.real()) / 2;
  const Eigen::Matrix2d l = c.llt().matrixL();
  const Eigen::Matrix2d ci = c.inverse();
  const double logdet_q = std::log(c.determinant());
  const double logdet_p = 2.0 * std::log(0.5);
  Rng rng(seed);
  std::normal_distribution<double> nd;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d y = l * Eigen::Vector2d(nd(rng), nd(rng));
    const Eigen::Vector2d x(post.mu[0].real() + y[0], post.mu[0].imag() + y[1]);
    acc += (-0.5 * logdet_q - 0.5 * y.dot(ci * y)) - (-0.5 * logdet_p - x.squaredNorm());
  }
  return acc / n;
}

void criterion5() {
  const std::vector<PosteriorParams> posts{scalar_post(0.0, 1.0, 0.0), scalar_post(1.0, 1.0, 0.0),
                                           scalar_post(0.0, 2.0, 1.0), scalar_post(0.0, 1.5, Complex(0.5, 0.5))};
  double worst = 0.0;
  std::string vals;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const double closed = kl_closed_form(posts[i]) - 1.0;
    const double mc = mc_kl(posts[i], kC5Draws, 501 + i);
    worst = std::max(worst, std::abs(closed - mc));
    vals += fmt("%s%.4f/%.4f", i ? ", " : "", closed, mc);
  }
  verdict(5, "closed-form KL vs Monte Carlo", worst < kC5Tol,
          fmt("closed/MC = %s; max gap %.2e, need < %.0e", vals.c_str(), worst, kC5Tol));
}

void criterion6() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t count = 0;
  for (auto act : {Activation::ModReLU, Activation::CReLU}) {
    CvaeArchitecture arch;
    arch.m = 8;
    arch.q = 2;
    arch.blocks = {{3, 3, 2}};
    arch.activation = act;
    Cvae net(arch, 601);
    Rng rng(602);
    ComplexNormal cn;
    std::vector<ComplexVector> data;
    for (int i = 0; i < 32; ++i) {
      ComplexVector z(8);
      for (auto& v : z) v = cn(rng);
      data.push_back(z);
    }
    net.fit_normalization(data);
    auto theta = net.parameters();
    std::normal_distribution<double> nd(0.0, 0.1);
    for (auto& v : theta) v += nd(rng);
    net.set_parameters(theta);
    const RealVector er = RealVector::Constant(2, 0.4), ei = RealVector::Constant(2, -1.1);
    for (int s = 0; s < 4; ++s) {
      const auto& z = data[static_cast<std::size_t>(s)];
      std::vector<double> grad(theta.size(), 0.0);
      net.loss_and_gradient(z, 0.3, er, ei, grad);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        auto tp = theta, tm = theta;
        tp[i] += kC6FdStep;
        tm[i] -= kC6FdStep;
        net.set_parameters(tp);
        const double fp = net.elbo_loss(z, 0.3, er, ei).total;
        net.set_parameters(tm);
        const double fm = net.elbo_loss(z, 0.3, er, ei).total;
        const double fd = (fp - fm) / (2 * kC6FdStep);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max({kC6Floor, std::abs(fd), std::abs(grad[i])}));
        ++count;
      }
      net.set_parameters(theta);
    }
  }
  const double secs = since(t0);
  verdict(6, "ELBO gradient vs finite differences", worst < kC6RelErr && secs < kC6Seconds,
          fmt("max relative error %.2e over %zu partials, need < %.0e; %.1f s", worst, count, kC6RelErr, secs));
}

void criterion7() {
  const DisturbanceGenerator gen(env_spec(DisturbanceKind::cGN));
  const auto oracle = oracle_estimate(gen.covariance());
  Rng rng(701);
  ComplexMatrix acc = ComplexMatrix::Zero(16, 16);
  for (int i = 0; i < kC7Snapshots; ++i) {
    const ComplexVector w = whiten_profile(gen.draw(rng), oracle).bins;
    acc.noalias() += w * w.adjoint();
  }
  acc /= kC7Snapshots;
  const double err = (acc - ComplexMatrix::Identity(16, 16)).norm() / 4.0;
  verdict(7, "oracle whitening", err < kC7Tol,
          fmt("||C - I||_F / ||I||_F = %.4f at %d snapshots, need < %.2f", err, kC7Snapshots, kC7Tol));
}

// ---------------------------------------------------------------------------
// Full-roster environment runs shared by criteria 8 to 11.

struct EnvRun {
  DisturbanceKind kind;
  ExperimentConfig cfg;
  std::unique_ptr<Scene> scene;
  Models models;
  Calibration cal;
  std::vector<PfaCheck> checks;
  double train_s = 0.0, calib_s = 0.0, holdout_s = 0.0;
};

std::unique_ptr<EnvRun> run_env(DisturbanceKind kind, std::uint64_t seed) {
  auto e = std::make_unique<EnvRun>();
  e->kind = kind;
  auto& cfg = e->cfg;
  cfg.disturbance = env_spec(kind);
  cfg.pfa = kPfa;
  cfg.calibration_trials = kC8Calibration;
  cfg.whitening = {kCvaePre};
  cfg.cvae.train_size = kTrainSize;
  cfg.cvae.training.epochs = kTrainEpochs;
  cfg.cvae.training.batch = 64;
  cfg.seed = seed;
  cfg.jobs = 0;
  cfg.validate();
  e->scene = std::make_unique<Scene>(make_scene(cfg));
  auto t0 = Clock::now();
  e->models = train_models(cfg, *e->scene);
  e->train_s = since(t0);
  t0 = Clock::now();
  e->cal = calibrate(cfg, *e->scene, e->models);
  e->calib_s = since(t0);
  t0 = Clock::now();
  const Evaluator ev(cfg, *e->scene, e->models, e->cal);
  e->checks = ev.holdout(cfg.roster(), kC8Trials, seed + 7, kC8Level);
  e->holdout_s = since(t0);
  note("%s: train %.0f s, calibrate %.0f s, holdout %.0f s", to_string(kind).c_str(), e->train_s, e->calib_s,
       e->holdout_s);
  return e;
}

void criterion8(const std::vector<std::unique_ptr<EnvRun>>& envs) {
  int pairs = 0, pairs_ok = 0, all = 0, all_ok = 0;
  std::string bad;
  for (const auto& e : envs) {
    for (const auto& c : e->checks) {
      ++all;
      all_ok += c.within;
      if (c.bin != 0) continue;
      ++pairs;
      pairs_ok += c.within;
      note("%-10s %-16s d=0  P_fa %.5f  count %zu in [%zu, %zu]%s", to_string(e->kind).c_str(),
           c.id.label().c_str(), c.pfa_hat, c.exceed, c.lo, c.hi, c.within ? "" : "  OUTSIDE");
      if (!c.within) bad += " " + to_string(e->kind) + ":" + c.id.label();
    }
  }
  verdict(8, "empirical CFAR, all detectors and environments", pairs_ok == pairs,
          fmt("d=0: %d/%d pairs inside the 99%% interval%s; all bins: %d/%d", pairs_ok, pairs,
              bad.empty() ? "" : (" (outside:" + bad + ")").c_str(), all_ok, all));
}

void criterion9(const std::vector<std::unique_ptr<EnvRun>>& envs) {
  const EnvRun& gauss = *envs[0];
  const EnvRun& compound = *envs[1];
  const auto grid = snr_grid();
  // (a) cGN+AWGN, d = 0: MF upper envelope.
  const Evaluator ea(gauss.cfg, *gauss.scene, gauss.models, gauss.cal);
  auto t0 = Clock::now();
  const auto sa = ea.evaluate_grid(gauss.cfg.roster(), grid, {0}, kC9Trials, 901);
  const double grid_s = since(t0);
  const auto& mf = surface(sa, "MF/raw");
  int a_bad = 0;
  double a_worst = -1.0;
  for (const auto& s : sa) {
    if (&s == &mf) continue;
    for (double snr : grid) {
      const auto* p = s.at(snr, 0);
      const auto* q = mf.at(snr, 0);
      const double excess = p->pd - q->pd - combined_ci(*p, *q);
      a_worst = std::max(a_worst, p->pd - q->pd);
      if (excess > 0) {
        ++a_bad;
        note("(a) %s above MF at %.1f dB: %.4f vs %.4f", s.label().c_str(), snr, p->pd, q->pd);
      }
    }
  }
  // (b), (c) cCGN.
  const Evaluator eb(compound.cfg, *compound.scene, compound.models, compound.cal);
  const std::vector<int> bins{0, 4, 8};
  const std::vector<DetectorId> roster{{"NMF", Preprocessing::Raw}, {"AMF-SCM", Preprocessing::Raw},
                                       {"ANMF-Tyler", Preprocessing::Raw}};
  const auto sb = eb.evaluate_grid(roster, grid, bins, kC9Trials, 902);
  const auto& nmf = surface(sb, "NMF/raw");
  const auto& amf = surface(sb, "AMF-SCM/raw");
  const auto& tyl = surface(sb, "ANMF-Tyler/raw");
  int b_bad = 0, c_bad = 0;
  double b_gain = 0.0;
  for (int d : bins) {
    for (double snr : grid) {
      const auto *pa = amf.at(snr, d), *pt = tyl.at(snr, d), *pn = nmf.at(snr, d);
      b_gain = std::max(b_gain, pt->pd - pa->pd);
      if (pa->pd - pt->pd > combined_ci(*pa, *pt)) {
        ++b_bad;
        note("(b) AMF-SCM above ANMF-Tyler at %.1f dB, d=%d: %.4f vs %.4f", snr, d, pa->pd, pt->pd);
      }
      if (pt->pd - pn->pd > combined_ci(*pt, *pn)) {
        ++c_bad;
        note("(c) ANMF-Tyler above NMF at %.1f dB, d=%d: %.4f vs %.4f", snr, d, pt->pd, pn->pd);
      }
    }
  }
  // Projected wall time of the default sweep (36 SNR x 16 bins x 1e4 trials,
  // 1e5 calibration trials, three environments) on kC9Cores cores, from
  // measured per-trial costs on this machine.
  t0 = Clock::now();
  ea.evaluate_grid(gauss.cfg.roster(), {0.0}, {0}, 200, 903);
  const double one = since(t0) / 200.0;
  t0 = Clock::now();
  std::vector<int> every_bin(16);
  std::iota(every_bin.begin(), every_bin.end(), 0);
  ea.evaluate_grid(gauss.cfg.roster(), {0.0, 10.0, 20.0, 30.0}, every_bin, 200, 904);
  const double many = since(t0) / 200.0;
  const double per_point = std::max(0.0, (many - one) / 63.0);
  const double per_trial_full = one + 575.0 * per_point;
  double serial = 0.0;
  for (const auto& e : envs) serial += e->train_s + e->calib_s + 1e4 * per_trial_full;
  const double projected = serial / kC9Cores;
  note("(a) worst MF shortfall %.4f; grid %.1f s; projected default sweep %.0f s on %d cores", a_worst, grid_s,
       projected, kC9Cores);
  verdict(9, "qualitative detector ranking", a_bad == 0 && b_bad == 0 && c_bad == 0 && projected < kC9SweepSeconds,
          fmt("(a) %d violations, (b) %d violations (max Tyler gain %.3f), (c) %d violations, projected sweep %.0f s",
              a_bad, b_bad, b_gain, c_bad, projected));
}

void criterion10(const EnvRun& env) {
  const Evaluator ev(env.cfg, *env.scene, env.models, env.cal);
  std::vector<int> bins;
  for (int d = 2; d <= 14; ++d) bins.push_back(d);
  const auto grid = snr_grid();
  const DetectorId id{kCvaeName, kCvaePre};
  const auto s = ev.evaluate_grid({id}, grid, bins, kC10Trials, 1001).front();
  double min_pd = 1.0;
  int low = 0, nonmono = 0;
  for (int d : bins) {
    const auto* p = s.at(kC10Snr, d);
    min_pd = std::min(min_pd, p->pd);
    if (p->pd < kC10Pd) ++low;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const auto *a = s.at(grid[i - 1], d), *b = s.at(grid[i], d);
      if (a->pd - b->pd > combined_ci(*a, *b)) {
        ++nonmono;
        note("Pd drops at d=%d from %.1f to %.1f dB: %.4f -> %.4f", d, grid[i - 1], grid[i], a->pd, b->pd);
      }
    }
  }
  verdict(10, "CVAE detection sanity", low == 0 && nonmono == 0,
          fmt("%s on %s: min Pd at %.0f dB over |d| >= 2 is %.3f (need >= %.1f); %d SNR drops beyond CI",
              id.label().c_str(), to_string(env.kind).c_str(), kC10Snr, min_pd, kC10Pd, nonmono));
}

// Branch decision after PIT: -ln p(s) against the CFAR quantile of the
// in-sample -ln p of the branch's own null bank.
std::vector<double> pit_thresholds(const EcdfBank& bank, double pfa) {
  std::vector<double> out(static_cast<std::size_t>(bank.bins()));
  for (int b = 0; b < bank.bins(); ++b) {
    std::vector<double> v;
    for (double s : bank.sorted(b)) v.push_back(-std::log(bank.pvalue(b, s)));
    out[static_cast<std::size_t>(b)] = cfar_quantile(v, pfa);
  }
  return out;
}

void criterion11(const EnvRun& env, const std::vector<std::unique_ptr<EnvRun>>& envs) {
  const int m = 16;
  std::vector<TargetPlacement> targets;
  for (int r = 0; r < 32; r += 2) {
    const double snr_db = 4.0 + r;
    targets.push_back({r, (r * 16) % 256, {(r / 2) % m, std::pow(10.0, snr_db / 10.0), 0.1 * r}});
  }
  const auto cube = simulate_cube(env.cfg.disturbance, 32, 256, targets, 1101);
  int mismatch = 0, raw_diff = 0, decisions = 0, detections = 0;
  for (double w : {1.0, 0.0}) {
    auto cfg = env.cfg;
    cfg.detectors = {"ANMF-Tyler", kCvaeName, kFusedName};
    cfg.fusion.weights = WeightKind::Constant;
    cfg.fusion.constant = w;
    cfg.calibration_trials = kC11Calibration;
    cfg.seed = env.cfg.seed + 11;
    const auto scene = make_scene(cfg);
    const auto cal = calibrate(cfg, scene, env.models);
    const auto rows = detect_cube(cfg, cube, env.models, cal);
    const DetectorId branch = w == 1.0 ? DetectorId{"ANMF-Tyler", Preprocessing::Raw} : DetectorId{kCvaeName, kCvaePre};
    const auto& be = cal.at(branch);
    const auto lam = pit_thresholds(be.bank, cfg.pfa);
    std::map<std::tuple<int, int, int>, bool> fused;
    for (const auto& r : rows)
      if (r.detector == kFusedName) fused[{r.index.r, r.index.p, r.bin}] = r.detected;
    for (const auto& r : rows) {
      if (r.detector != branch.name || r.preprocessing != to_string(branch.pre)) continue;
      const bool after_pit = -std::log(be.bank.pvalue(r.bin, r.statistic)) >= lam[static_cast<std::size_t>(r.bin)];
      const bool f = fused.at({r.index.r, r.index.p, r.bin});
      mismatch += after_pit != f;
      raw_diff += r.detected != f;
      detections += f;
      ++decisions;
    }
  }
  note("w = 1 and w = 0: %d fused decisions (%d detections), %d differ from the branch after PIT, "
       "%d differ from the raw-threshold branch", decisions, detections, mismatch, raw_diff);

  // Rank invariance on real branch statistics.
  const auto& sc = *env.scene;
  Scene::Needs needs;
  needs.tyler = true;
  needs.local = kCvaePre == Preprocessing::Local;
  const auto& net = env.models.at(kCvaePre);
  std::vector<double> a_null, c_null, a_test, c_test;
  std::vector<int> test_bin;
  for (int i = 0; i < kC11RankNull + kC11RankTest; ++i) {
    const Trial t = sc.draw(1102, StreamTag::Holdout, static_cast<std::uint64_t>(i), true);
    const auto est = sc.estimate(t, needs);
    const bool null = i < kC11RankNull;
    const int d = null ? 0 : i % m;
    const ComplexVector z = null ? t.c : sc.snapshot(t, std::pow(10.0, 1.2), d);
    double a[16];
    sc.classical(DetectorKind::ANMF_Tyler, z, est, a);
    const double c = net.recon_score(sc.profile(z, kCvaePre, est));
    (null ? a_null : a_test).push_back(a[0]);
    (null ? c_null : c_test).push_back(c);
  }
  const double w = env.cal.at({kFusedName, kCvaePre}).weights[0];
  auto decide = [&](auto fa, auto fc) {
    std::vector<double> an, cn;
    for (double x : a_null) an.push_back(fa(x));
    for (double x : c_null) cn.push_back(fc(x));
    const auto ba = fit_ecdf({an}), bc = fit_ecdf({cn});
    std::vector<double> fn;
    for (std::size_t i = 0; i < an.size(); ++i)
      fn.push_back(fuse_logp(pit_pvalue(ba, 0, an[i]), pit_pvalue(bc, 0, cn[i]), w));
    const double lambda = cfar_quantile(fn, kPfa);
    std::vector<char> out;
    for (std::size_t i = 0; i < a_test.size(); ++i)
      out.push_back(fuse_logp(pit_pvalue(ba, 0, fa(a_test[i])), pit_pvalue(bc, 0, fc(c_test[i])), w) >= lambda);
    return out;
  };
  const auto ident = [](double x) { return x; };
  const auto base = decide(ident, ident);
  const bool rank_a = decide([](double x) { return std::exp(4.0 * x) + 3.0; }, ident) == base;
  const bool rank_c = decide(ident, [](double x) { return std::log(x) * 1e3 - 5.0; }) == base;
  const bool rank_both = decide([](double x) { return x * x * x; }, [](double x) { return std::sqrt(x); }) == base;
  const auto hits = std::count(base.begin(), base.end(), 1);
  note("rank invariance at w = %.3f: %zu test decisions, %ld detections", w, base.size(), static_cast<long>(hits));

  int fused_ok = 0, fused_n = 0;
  for (const auto& e : envs)
    for (const auto& c : e->checks)
      if (c.id.name == kFusedName && c.bin == 0) {
        ++fused_n;
        fused_ok += c.within;
      }
  verdict(11, "fusion correctness", mismatch == 0 && rank_a && rank_c && rank_both && fused_ok == fused_n,
          fmt("%d/%d decisions match the branch after PIT; rank invariance %s/%s/%s; fused P_fa at d=0 inside "
              "interval in %d/%d environments",
              decisions - mismatch, decisions, rank_a ? "ok" : "broken", rank_c ? "ok" : "broken",
              rank_both ? "ok" : "broken", fused_ok, fused_n));
}

// Exact deviation of the held-out PIT law from U(0, 1) for an Exp(1) null:
// given the bank, P(p <= j / (N + 1)) = exp(-s_(N - j + 1)).
double exact_pit_deviation(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  const double np1 = static_cast<double>(n + 1);
  double d = 0.0, prev = 0.0;
  for (std::size_t j = 1; j <= n + 1; ++j) {
    const double g = j <= n ? std::exp(-sorted[n - j]) : 1.0;
    const double t = static_cast<double>(j) / np1;
    d = std::max({d, std::abs(g - t), std::abs(prev - t)});
    prev = g;
  }
  return d;
}

void criterion12() {
  const double bound = dkw_bound(kC12Bank, kC12Alpha);
  int ok = 0, total = 0;
  double worst = 0.0;
  std::vector<int> rep_ok(kC12Reps, 0);
  double finite_dev = 0.0;
  for (int r = 0; r < kC12Reps; ++r) {
    ExperimentConfig cfg;
    cfg.disturbance = env_spec(DisturbanceKind::cGN_AWGN);
    cfg.detectors = {"MF"};
    cfg.calibration_trials = kC12Bank;
    cfg.seed = 1200 + static_cast<std::uint64_t>(r);
    cfg.jobs = 1;
    const auto scene = make_scene(cfg);
    const Models models;
    const auto cal = calibrate(cfg, scene, models);
    const auto& bank = cal.at({"MF", Preprocessing::Raw}).bank;
    for (int b = 0; b < bank.bins(); ++b) {
      const double dev = exact_pit_deviation(bank.sorted(b));
      worst = std::max(worst, dev);
      ++total;
      ok += dev < bound;
      rep_ok[static_cast<std::size_t>(r)] += dev < bound;
    }
    if (r == 0) {
      const Evaluator ev(cfg, scene, models, cal);
      finite_dev = uniform_sup_deviation(ev.holdout_pvalues({"MF", Preprocessing::Raw}, 0, 100000, 1299));
    }
  }
  const double frac = static_cast<double>(ok) / total;
  const int full_reps = static_cast<int>(std::count(rep_ok.begin(), rep_ok.end(), 16));
  note("bound %.5f at N_b = %d; worst deviation %.5f; %d/%d repetitions inside in every bin; "
       "finite holdout (1e5 draws, rep 0, d=0) deviation %.5f",
       bound, kC12Bank, worst, full_reps, kC12Reps, finite_dev);
  verdict(12, "DKW rate of held-out PIT values", frac >= kC12Coverage,
          fmt("%d/%d (repetition, bin) pairs below the bound = %.4f, need >= %.2f", ok, total, frac, kC12Coverage));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    std::vector<std::unique_ptr<EnvRun>> envs;
    envs.push_back(run_env(DisturbanceKind::cGN_AWGN, 8001));
    envs.push_back(run_env(DisturbanceKind::cCGN, 8002));
    envs.push_back(run_env(DisturbanceKind::cCGN_AWGN, 8003));
    criterion8(envs);
    criterion9(envs);
    criterion10(*envs[2]);
    criterion11(*envs[2], envs);
    criterion12();
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed; total %.0f s\n", failures, since(t0));
  return failures == 0 ? 0 : 1;
}
