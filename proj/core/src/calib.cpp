#include "radood/calib.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "radood/errors.hpp"

namespace radood {

EcdfBank::EcdfBank(std::vector<std::vector<double>> null_scores, std::string label)
    : sorted_(std::move(null_scores)), label_(std::move(label)) {
  if (sorted_.empty()) throw InsufficientData("EcdfBank: no bins");
  for (std::size_t b = 0; b < sorted_.size(); ++b) {
    if (sorted_[b].empty()) throw InsufficientData("EcdfBank: bin " + std::to_string(b) + " has no null scores");
    for (double s : sorted_[b]) {
      if (std::isnan(s)) throw InvalidArgument("EcdfBank: NaN null score in bin " + std::to_string(b));
    }
    std::sort(sorted_[b].begin(), sorted_[b].end());
  }
}

double EcdfBank::cdf(int b, double s) const {
  const auto& x = sorted(b);
  const auto le = std::upper_bound(x.begin(), x.end(), s) - x.begin();
  return static_cast<double>(le) / static_cast<double>(x.size());
}

double EcdfBank::pvalue(int b, double s) const {
  const auto& x = sorted(b);
  const auto ge = x.end() - std::lower_bound(x.begin(), x.end(), s);
  return (1.0 + static_cast<double>(ge)) / (static_cast<double>(x.size()) + 1.0);
}

EcdfBank fit_ecdf(std::vector<std::vector<double>> null_scores, std::string label) {
  return EcdfBank(std::move(null_scores), std::move(label));
}

double pit_pvalue(const EcdfBank& bank, int b, double s) { return bank.pvalue(b, s); }

std::string to_string(WeightKind k) {
  switch (k) {
    case WeightKind::Sigmoid: return "sigmoid";
    case WeightKind::GaussianPrior: return "gaussian-prior";
    case WeightKind::Constant: return "constant";
  }
  return "?";
}

WeightKind parse_weight_kind(const std::string& s) {
  for (auto k : {WeightKind::Sigmoid, WeightKind::GaussianPrior, WeightKind::Constant}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown weight schedule '" + s + "'");
}

WeightSchedule weights_sigmoid(const std::vector<std::vector<double>>& null_pvalues, SpreadMode spread) {
  if (null_pvalues.empty()) throw InsufficientData("weights_sigmoid: no bins");
  const auto m = null_pvalues.size();
  std::vector<double> pbar(m);
  for (std::size_t b = 0; b < m; ++b) {
    const auto& p = null_pvalues[b];
    if (p.size() < 2) throw InsufficientData("weights_sigmoid: bin " + std::to_string(b) + " needs >= 2 p-values");
    pbar[b] = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  }
  const double mu = std::accumulate(pbar.begin(), pbar.end(), 0.0) / static_cast<double>(m);
  double var = 0.0;
  for (double x : pbar) var += (x - mu) * (x - mu);
  var /= static_cast<double>(m);
  const double s = spread == SpreadMode::StdDev ? std::sqrt(var) : var;

  WeightSchedule w{std::vector<double>(m, 0.5), WeightKind::Sigmoid};
  if (s > 0.0) {
    for (std::size_t b = 0; b < m; ++b) w.w[b] = 1.0 / (1.0 + std::exp(-(pbar[b] - mu) / s));
  }
  return w;
}

WeightSchedule weights_gaussian_prior(int b0, double sigma0, int m) {
  if (!(sigma0 > 0.0)) throw InvalidArgument("weights_gaussian_prior: sigma0 must be positive");
  if (m < 1 || b0 < 0 || b0 >= m) throw InvalidArgument("weights_gaussian_prior: b0 outside [0, m)");
  WeightSchedule w{std::vector<double>(static_cast<std::size_t>(m)), WeightKind::GaussianPrior};
  for (int b = 0; b < m; ++b) {
    const int a = std::abs(b - b0);
    const double d = std::min(a, m - a);
    w.w[static_cast<std::size_t>(b)] = std::exp(-0.5 * (d / sigma0) * (d / sigma0));
  }
  return w;
}

WeightSchedule weights_constant(double w, int m) {
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("weights_constant: w must lie in [0, 1]");
  if (m < 1) throw InvalidArgument("weights_constant: m must be positive");
  return {std::vector<double>(static_cast<std::size_t>(m), w), WeightKind::Constant};
}

double fuse_logp(double p_anmf, double p_cvae, double w) {
  if (!(p_anmf > 0.0 && p_anmf <= 1.0) || !(p_cvae > 0.0 && p_cvae <= 1.0)) {
    throw InvalidArgument("fuse_logp: p-values must lie in (0, 1]");
  }
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("fuse_logp: w must lie in [0, 1]");
  return -(w * std::log(p_anmf) + (1.0 - w) * std::log(p_cvae));
}

double cfar_quantile(std::span<const double> null_scores, double pfa) {
  if (!(pfa > 0.0 && pfa < 1.0)) throw InvalidArgument("cfar_threshold: pfa must lie in (0, 1)");
  const std::size_t n = null_scores.size();
  if (n < 10) throw InsufficientData("cfar_threshold: need at least 10 null scores, got " + std::to_string(n));
  std::vector<double> x(null_scores.begin(), null_scores.end());
  std::sort(x.begin(), x.end());
  // Largest admissible exceedance count; the guard absorbs pfa * n landing a
  // rounding error below an integer.
  const auto k_max = static_cast<std::size_t>(std::floor(pfa * static_cast<double>(n) * (1.0 + 1e-12)));
  const double above_max = std::nextafter(x.back(), std::numeric_limits<double>::infinity());
  if (k_max == 0) return above_max;
  const std::size_t i0 = n - k_max;
  if (i0 == 0 || x[i0] > x[i0 - 1]) return x[i0];
  // x[i0] ties with values below the cut; the next distinct value is the
  // smallest one whose upper tail is small enough.
  const auto it = std::upper_bound(x.begin() + static_cast<std::ptrdiff_t>(i0), x.end(), x[i0]);
  return it == x.end() ? above_max : *it;
}

ThresholdTable cfar_threshold(const std::vector<std::vector<double>>& null_scores, double pfa) {
  ThresholdTable t;
  t.pfa = pfa;
  for (const auto& bin : null_scores) {
    t.lambda.push_back(cfar_quantile(bin, pfa));
    t.counts.push_back(bin.size());
  }
  return t;
}

double dkw_bound(std::size_t n, double alpha) {
  if (n < 1) throw InvalidArgument("dkw_bound: n must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("dkw_bound: alpha must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

double uniform_sup_deviation(std::vector<double> values) {
  if (values.empty()) throw InsufficientData("uniform_sup_deviation: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = std::clamp(values[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

double wilson_halfwidth(std::size_t k, std::size_t n, double z) {
  if (n == 0) return 0.5;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  return z / (1.0 + z2 / nn) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
}

std::pair<std::size_t, std::size_t> binomial_interval(std::size_t n, double p, double level) {
  if (!(p > 0.0 && p < 1.0) || !(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("binomial_interval: p and level must lie in (0, 1)");
  }
  const double tail = 0.5 * (1.0 - level);
  const double nn = static_cast<double>(n);
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    pmf[k] = std::exp(std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0) +
                      kk * std::log(p) + (nn - kk) * std::log1p(-p));
  }
  // lo: smallest k with P(X < k) <= tail < P(X < k + 1); symmetric for hi.
  std::size_t lo = 0;
  double below = 0.0;
  while (lo < n && below + pmf[lo] <= tail) below += pmf[lo++];
  std::size_t hi = n;
  double above = 0.0;
  while (hi > 0 && above + pmf[hi] <= tail) above += pmf[hi--];
  return {lo, hi};
}

namespace {

constexpr char kCalibMagic[4] = {'C', 'A', 'L', 'B'};
constexpr std::uint32_t kCalibVersion = 1;
static_assert(std::endian::native == std::endian::little, "calibration I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> b) : buf_(std::move(b)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(buf_.data() + at_, n);
    at_ += n;
    return s;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (buf_.size() - at_) / sizeof(double)) throw FormatError("calibration: array length exceeds file", at_);
    std::vector<double> v(static_cast<std::size_t>(n));
    std::memcpy(v.data(), buf_.data() + at_, v.size() * sizeof(double));
    at_ += v.size() * sizeof(double);
    return v;
  }
  std::size_t offset() const { return at_; }
  bool done() const { return at_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - at_ < n) throw FormatError("calibration: truncated file", at_);
  }
  std::vector<char> buf_;
  std::size_t at_ = 0;
};

}  // namespace

void write_calibration(const std::vector<CalibrationEntry>& entries, const std::filesystem::path& path) {
  Writer w;
  for (char c : kCalibMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCalibVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.put_string(e.detector);
    w.put_string(e.preprocessing);
    w.put_string(e.bank.label());
    w.put<double>(e.thresholds.pfa);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.bank.bins()));
    w.put_doubles(e.thresholds.lambda);
    w.put_doubles(e.weights);
    for (int b = 0; b < e.bank.bins(); ++b) w.put_doubles(e.bank.sorted(b));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_calibration: cannot open " + path.string());
  f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw IoError("write_calibration: write failed for " + path.string());
}

std::vector<CalibrationEntry> read_calibration(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_calibration: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCalibMagic, 4) != 0) {
    throw FormatError("read_calibration: bad magic", 0);
  }
  Reader r(std::move(bytes));
  for (int i = 0; i < 4; ++i) r.get<char>();
  if (r.get<std::uint32_t>() != kCalibVersion) throw FormatError("read_calibration: unsupported version", 4);
  const auto n = r.get<std::uint32_t>();
  std::vector<CalibrationEntry> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    CalibrationEntry e;
    e.detector = r.get_string();
    e.preprocessing = r.get_string();
    const std::string label = r.get_string();
    e.thresholds.pfa = r.get<double>();
    const auto bins = r.get<std::uint32_t>();
    e.thresholds.lambda = r.get_doubles();
    e.weights = r.get_doubles();
    if (e.thresholds.lambda.size() != bins) throw FormatError("read_calibration: threshold count mismatch", r.offset());
    std::vector<std::vector<double>> scores;
    for (std::uint32_t b = 0; b < bins; ++b) {
      scores.push_back(r.get_doubles());
      e.thresholds.counts.push_back(scores.back().size());
    }
    e.bank = EcdfBank(std::move(scores), label);
    out.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("read_calibration: trailing bytes", r.offset());
  return out;
}

void write_calibration_summary(const std::vector<CalibrationEntry>& entries, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_calibration_summary: cannot open " + path.string());
  f << "detector,preprocessing,bin,n_b,lambda,w_b\n";
  char line[256];
  for (const auto& e : entries) {
    for (int b = 0; b < e.bank.bins(); ++b) {
      std::snprintf(line, sizeof line, "%s,%s,%d,%zu,%.17g,", e.detector.c_str(), e.preprocessing.c_str(), b,
                    e.bank.count(b), e.thresholds.lambda[static_cast<std::size_t>(b)]);
      f << line;
      // Empty w_b for entries that are not fused.
      if (!e.weights.empty()) {
        std::snprintf(line, sizeof line, "%.17g", e.weights[static_cast<std::size_t>(b)]);
        f << line;
      }
      f << '\n';
    }
  }
  if (!f) throw IoError("write_calibration_summary: write failed for " + path.string());
}

}  // namespace radood
