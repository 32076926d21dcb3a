#pragma once

// Per-Doppler-bin null calibration: empirical CDFs, add-one PIT p-values,
// fusion weight schedules, weighted log-p fusion and empirical CFAR
// thresholds.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace radood {

class EcdfBank {
 public:
  EcdfBank() = default;
  // One array of null scores per bin. Throws InsufficientData on an empty bin.
  explicit EcdfBank(std::vector<std::vector<double>> null_scores, std::string label = {});

  int bins() const noexcept { return static_cast<int>(sorted_.size()); }
  std::size_t count(int b) const { return sorted_.at(static_cast<std::size_t>(b)).size(); }
  const std::vector<double>& sorted(int b) const { return sorted_.at(static_cast<std::size_t>(b)); }
  const std::string& label() const noexcept { return label_; }

  // #{null <= s} / N_b.
  double cdf(int b, double s) const;
  // (1 + #{null >= s}) / (N_b + 1).
  double pvalue(int b, double s) const;

 private:
  std::vector<std::vector<double>> sorted_;
  std::string label_;
};

EcdfBank fit_ecdf(std::vector<std::vector<double>> null_scores, std::string label = {});
double pit_pvalue(const EcdfBank& bank, int b, double s);

enum class WeightKind { Sigmoid, GaussianPrior, Constant };

std::string to_string(WeightKind k);
WeightKind parse_weight_kind(const std::string& s);

struct WeightSchedule {
  std::vector<double> w;  // one weight per bin, in [0, 1]
  WeightKind kind = WeightKind::Constant;
};

// Spread statistic used inside the sigmoid schedule.
enum class SpreadMode { StdDev, Variance };

// w_b = 1 / (1 + exp(-(pbar_b - mu_p) / sigma_p)), pbar_b the mean null
// p-value of bin b, mu_p and sigma_p the mean and spread of pbar across bins.
// sigma_p = 0 gives w_b = 0.5 everywhere.
WeightSchedule weights_sigmoid(const std::vector<std::vector<double>>& null_pvalues,
                               SpreadMode spread = SpreadMode::StdDev);
// w_b = exp(-0.5 (d(b, b0) / sigma0)^2), circular distance d.
WeightSchedule weights_gaussian_prior(int b0, double sigma0, int m);
WeightSchedule weights_constant(double w, int m);

// S* = -(w ln p_anmf + (1 - w) ln p_cvae).
double fuse_logp(double p_anmf, double p_cvae, double w);

struct ThresholdTable {
  std::vector<double> lambda;  // per bin; decision is score >= lambda
  double pfa = 0.01;
  std::vector<std::size_t> counts;
};

// Smallest null score whose upper-tail count #{>= lambda} / N_b is <= pfa;
// one ulp above the maximum when no null score qualifies.
double cfar_quantile(std::span<const double> null_scores, double pfa);
ThresholdTable cfar_threshold(const std::vector<std::vector<double>>& null_scores, double pfa);

// sqrt(ln(2 / alpha) / (2 n)).
double dkw_bound(std::size_t n, double alpha);
// sup_t |F_n(t) - t| of a sample against U(0, 1).
double uniform_sup_deviation(std::vector<double> values);

// Wilson score interval half-width for k successes in n trials.
double wilson_halfwidth(std::size_t k, std::size_t n, double z = 1.959963984540054);
// Two-sided binomial interval [lo, hi] for the count of successes in n
// Bernoulli(p) trials with coverage at least `level`.
std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double level);

// One calibrated branch: detector name, preprocessing, bank, thresholds.
struct CalibrationEntry {
  std::string detector;
  std::string preprocessing;
  EcdfBank bank;
  ThresholdTable thresholds;
  std::vector<double> weights;  // empty unless the entry is a fused detector
};

// "CALB" binary sidecar (u32 version, u32 entry count, then per entry:
// length-prefixed strings, pfa, bins, per-bin thresholds, weights and sorted
// null scores, all little-endian) and a per-bin CSV summary.
void write_calibration(const std::vector<CalibrationEntry>& entries, const std::filesystem::path& path);
std::vector<CalibrationEntry> read_calibration(const std::filesystem::path& path);
void write_calibration_summary(const std::vector<CalibrationEntry>& entries, const std::filesystem::path& path);

}  // namespace radood
