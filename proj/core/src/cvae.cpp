#include "radood/cvae.hpp"

#include <cmath>
#include <cstring>
#include <bit>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cvae_layers.hpp"
#include "radood/errors.hpp"

namespace radood {

using layers::IndexMatrix;
using json = nlohmann::json;

std::string to_string(Activation a) { return a == Activation::ModReLU ? "modReLU" : "CReLU"; }

Activation parse_activation(const std::string& s) {
  if (s == "modReLU") return Activation::ModReLU;
  if (s == "CReLU") return Activation::CReLU;
  throw InvalidArgument("unknown activation '" + s + "'");
}

void CvaeArchitecture::validate() const {
  if (m < 1) throw InvalidArgument("CvaeArchitecture: m must be positive");
  if (q < 1) throw InvalidArgument("CvaeArchitecture: q must be positive");
  int len = m;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const std::string where = "CvaeArchitecture: block " + std::to_string(b);
    if (blk.channels < 1) throw InvalidArgument(where + " needs at least one channel");
    if (blk.kernel < 1 || blk.kernel % 2 == 0) throw InvalidArgument(where + " kernel must be odd");
    if (blk.pool < 1 || len % blk.pool != 0) {
      throw InvalidArgument(where + " pool " + std::to_string(blk.pool) + " does not divide length " +
                            std::to_string(len));
    }
    len /= blk.pool;
  }
}

int CvaeArchitecture::bottleneck_channels() const { return blocks.empty() ? 1 : blocks.back().channels; }

int CvaeArchitecture::bottleneck_length() const {
  int len = m;
  for (const auto& b : blocks) len /= b.pool;
  return len;
}

std::string CvaeArchitecture::to_json() const {
  json j;
  j["m"] = m;
  j["q"] = q;
  j["activation"] = to_string(activation);
  j["blocks"] = json::array();
  for (const auto& b : blocks) j["blocks"].push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"pool", b.pool}});
  return j.dump();
}

CvaeArchitecture CvaeArchitecture::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    CvaeArchitecture a;
    a.m = j.at("m").get<int>();
    a.q = j.at("q").get<int>();
    a.activation = parse_activation(j.at("activation").get<std::string>());
    a.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      a.blocks.push_back({b.at("channels").get<int>(), b.at("kernel").get<int>(), b.at("pool").get<int>()});
    }
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture descriptor: ") + e.what());
  }
}

bool PosteriorParams::valid() const {
  if (sigma.size() != mu.size() || delta.size() != mu.size()) return false;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (!(sigma[j] > 0.0) || !(std::abs(delta[j]) < sigma[j])) return false;
  }
  return true;
}

void constrain_sigma_delta(const RealVector& s_raw, const ComplexVector& delta_raw, RealVector& sigma,
                           ComplexVector& delta) {
  if (s_raw.size() != delta_raw.size()) throw InvalidArgument("constrain_sigma_delta: size mismatch");
  sigma.resize(s_raw.size());
  delta.resize(s_raw.size());
  for (Eigen::Index j = 0; j < s_raw.size(); ++j) {
    sigma[j] = layers::softplus(s_raw[j]) + kEpsNum;
    delta[j] = sigma[j] * delta_raw[j] / (1.0 + std::abs(delta_raw[j]));
  }
}

ReparamScales reparam_scales(const RealVector& sigma, const ComplexVector& delta) {
  if (sigma.size() != delta.size()) throw InvalidArgument("reparam_scales: size mismatch");
  ReparamScales k{ComplexVector(sigma.size()), RealVector(sigma.size())};
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    if (!(sigma[j] > 0.0) || !(std::abs(delta[j]) < sigma[j])) {
      throw InvalidArgument("reparam_scales: need |delta| < sigma at dimension " + std::to_string(j));
    }
    const double d = std::sqrt(2.0 * std::max(sigma[j] + delta[j].real(), kEpsNum));
    const double q = std::max(sigma[j] * sigma[j] - std::norm(delta[j]), 0.0);
    k.k_r[j] = (sigma[j] + delta[j]) / d;
    k.k_i[j] = std::sqrt(q) / d;
  }
  return k;
}

ComplexVector sample_latent(const PosteriorParams& post, const RealVector& eps_r, const RealVector& eps_i) {
  const ReparamScales k = reparam_scales(post.sigma, post.delta);
  ComplexVector x(post.dim());
  for (int j = 0; j < post.dim(); ++j) x[j] = post.mu[j] + k.k_r[j] * eps_r[j] + Complex(0.0, k.k_i[j] * eps_i[j]);
  return x;
}

ComplexVector sample_latent(const PosteriorParams& post, Rng& rng) {
  std::normal_distribution<double> n;
  RealVector er(post.dim()), ei(post.dim());
  for (int j = 0; j < post.dim(); ++j) {
    er[j] = n(rng);
    ei[j] = n(rng);
  }
  return sample_latent(post, er, ei);
}

double kl_closed_form(const PosteriorParams& post) {
  double kl = post.mu.squaredNorm();
  for (int j = 0; j < post.dim(); ++j) {
    const double q = post.sigma[j] * post.sigma[j] - std::norm(post.delta[j]);
    if (!(q > 0.0)) throw InvalidArgument("kl_closed_form: sigma^2 - |delta|^2 must be positive");
    kl += post.sigma[j] - 0.5 * std::log(q);
  }
  return kl;
}

double kl_exact(const PosteriorParams& post) { return kl_closed_form(post) - post.dim(); }

int ParamStore::add(std::string name, int rows, int cols, bool complex) {
  Entry e{std::move(name), rows, cols, complex, size_};
  size_ += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * (complex ? 2 : 1);
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

ComplexMatrix ParamStore::unpack(std::span<const double> flat, int id) const {
  const Entry& e = entries_.at(static_cast<std::size_t>(id));
  ComplexMatrix t(e.rows, e.cols);
  const double* p = flat.data() + e.offset;
  for (int c = 0; c < e.cols; ++c) {
    for (int r = 0; r < e.rows; ++r) {
      if (e.complex) {
        t(r, c) = Complex(p[0], p[1]);
        p += 2;
      } else {
        t(r, c) = Complex(*p++, 0.0);
      }
    }
  }
  return t;
}

void ParamStore::pack(const ComplexMatrix& t, int id, std::span<double> flat) const {
  const Entry& e = entries_.at(static_cast<std::size_t>(id));
  double* p = flat.data() + e.offset;
  for (int c = 0; c < e.cols; ++c) {
    for (int r = 0; r < e.rows; ++r) {
      *p++ = t(r, c).real();
      if (e.complex) *p++ = t(r, c).imag();
    }
  }
}

namespace {

void add_packed(const ParamStore& layout, const ComplexMatrix& g, int id, std::span<double> flat) {
  const auto& e = layout.entries()[static_cast<std::size_t>(id)];
  double* p = flat.data() + e.offset;
  for (int c = 0; c < e.cols; ++c) {
    for (int r = 0; r < e.rows; ++r) {
      *p++ += g(r, c).real();
      if (e.complex) *p++ += g(r, c).imag();
    }
  }
}

void check_finite(const ComplexMatrix& a, int layer, const char* what) {
  if (!a.allFinite()) throw NumericFailure(std::string("non-finite activation in ") + what, layer);
}

}  // namespace

struct Cvae::Trace {
  std::vector<ComplexMatrix> enc_col, enc_pre, enc_normed;
  std::vector<IndexMatrix> enc_arg;
  ComplexVector h;
  ComplexVector mu, d_raw;
  RealVector s_raw, sigma;
  ComplexVector delta;
  ReparamScales k;
  ComplexVector x;
  ComplexMatrix dense_pre;
  std::vector<ComplexMatrix> up_col, up_pre, up_normed;
  ComplexVector z_hat;
};

void Cvae::build_layout() {
  const int nb = static_cast<int>(arch_.blocks.size());
  std::vector<int> ch{1};
  for (const auto& b : arch_.blocks) ch.push_back(b.channels);
  const int flat = arch_.bottleneck_channels() * arch_.bottleneck_length();
  const bool mod = arch_.activation == Activation::ModReLU;

  layout_ = ParamStore{};
  enc_w_.assign(nb, -1);
  enc_b_.assign(nb, -1);
  enc_act_.assign(nb, -1);
  up_w_.assign(nb, -1);
  up_b_.assign(nb, -1);
  up_act_.assign(nb, -1);
  for (int b = 0; b < nb; ++b) {
    const int k = arch_.blocks[b].kernel;
    const std::string n = "enc" + std::to_string(b);
    enc_w_[b] = layout_.add(n + ".conv_w", ch[b + 1], ch[b] * k, true);
    enc_b_[b] = layout_.add(n + ".conv_b", ch[b + 1], 1, true);
    if (mod) enc_act_[b] = layout_.add(n + ".act_b", ch[b + 1], 1, false);
  }
  mu_w_ = layout_.add("head_mu.w", arch_.q, flat, true);
  mu_b_ = layout_.add("head_mu.b", arch_.q, 1, true);
  s_w_ = layout_.add("head_sigma.w", arch_.q, flat, true);
  s_b_ = layout_.add("head_sigma.b", arch_.q, 1, false);
  d_w_ = layout_.add("head_delta.w", arch_.q, flat, true);
  d_b_ = layout_.add("head_delta.b", arch_.q, 1, true);
  dec_w_ = layout_.add("dec_dense.w", flat, arch_.q, true);
  dec_b_ = layout_.add("dec_dense.b", flat, 1, true);
  dec_act_ = mod ? layout_.add("dec_dense.act_b", arch_.bottleneck_channels(), 1, false) : -1;
  for (int b = nb - 1; b >= 0; --b) {
    const int k = arch_.blocks[b].kernel;
    const std::string n = "dec" + std::to_string(b);
    up_w_[b] = layout_.add(n + ".conv_w", ch[b], ch[b + 1] * k, true);
    up_b_[b] = layout_.add(n + ".conv_b", ch[b], 1, true);
    if (mod && b > 0) up_act_[b] = layout_.add(n + ".act_b", ch[b], 1, false);
  }

  norm_.clear();
  for (int b = 0; b < nb; ++b) norm_.push_back(RealVector::Ones(ch[b + 1]));
  for (int b = nb - 1; b >= 1; --b) norm_.push_back(RealVector::Ones(ch[b]));
}

Cvae::Cvae(const CvaeArchitecture& arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
  arch_.validate();
  build_layout();
  Rng rng = substream(seed, {tag(StreamTag::CvaeInit)});
  std::normal_distribution<double> n;
  w_.clear();
  for (const auto& e : layout_.entries()) {
    ComplexMatrix t = ComplexMatrix::Zero(e.rows, e.cols);
    const bool weight = e.name.size() >= 2 && e.name.compare(e.name.size() - 2, 2, ".w") == 0;
    const bool conv_weight = e.name.size() >= 7 && e.name.compare(e.name.size() - 7, 7, ".conv_w") == 0;
    if (weight || conv_weight) {
      const double s = std::sqrt(0.5 / e.cols);
      for (int c = 0; c < e.cols; ++c) {
        for (int r = 0; r < e.rows; ++r) {
          const double re = n(rng);
          const double im = n(rng);
          t(r, c) = Complex(s * re, s * im);
        }
      }
    }
    w_.push_back(std::move(t));
  }
}

std::vector<double> Cvae::parameters() const {
  std::vector<double> flat(layout_.size());
  for (std::size_t i = 0; i < w_.size(); ++i) layout_.pack(w_[i], static_cast<int>(i), flat);
  return flat;
}

void Cvae::set_parameters(std::span<const double> flat) {
  if (flat.size() != layout_.size()) throw InvalidArgument("Cvae::set_parameters: size mismatch");
  for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = layout_.unpack(flat, static_cast<int>(i));
}

namespace {

ComplexMatrix activate(Activation a, const ComplexMatrix& x, const ComplexMatrix* bias) {
  if (a == Activation::CReLU) return layers::crelu_forward(x);
  return layers::modrelu_forward(x, bias->col(0).real());
}

ComplexMatrix activate_backward(Activation a, const ComplexMatrix& x, const ComplexMatrix* bias,
                                const ComplexMatrix& g_y, ComplexMatrix* g_bias) {
  if (a == Activation::CReLU) return layers::crelu_backward(x, g_y);
  RealVector gb = RealVector::Zero(x.rows());
  ComplexMatrix g = layers::modrelu_backward(x, bias->col(0).real(), g_y, gb);
  g_bias->col(0) += gb.cast<Complex>();
  return g;
}

}  // namespace

LossParts Cvae::run(const ComplexVector& z, double beta, const RealVector* eps_r, const RealVector* eps_i,
                    Trace& tr) const {
  if (z.size() != arch_.m) {
    throw InvalidArgument("Cvae: input length " + std::to_string(z.size()) + " differs from m=" +
                          std::to_string(arch_.m));
  }
  const int nb = static_cast<int>(arch_.blocks.size());
  const Activation act = arch_.activation;
  auto bias = [&](int id) -> const ComplexMatrix* { return id >= 0 ? &w_[static_cast<std::size_t>(id)] : nullptr; };
  int layer = 0;

  tr.enc_col.resize(nb);
  tr.enc_pre.resize(nb);
  tr.enc_normed.resize(nb);
  tr.enc_arg.resize(nb);
  ComplexMatrix cur = z.transpose();
  for (int b = 0; b < nb; ++b) {
    const auto& blk = arch_.blocks[b];
    tr.enc_col[b] = layers::im2col(cur, blk.kernel);
    tr.enc_pre[b] = layers::conv_forward(w_[enc_w_[b]], w_[enc_b_[b]].col(0), tr.enc_col[b]);
    tr.enc_normed[b] = layers::scale_rows(tr.enc_pre[b], norm_[b]);
    cur = layers::maxpool_forward(activate(act, tr.enc_normed[b], bias(enc_act_[b])), blk.pool, tr.enc_arg[b]);
    check_finite(cur, layer++, "encoder block");
  }
  tr.h = Eigen::Map<const ComplexVector>(cur.data(), cur.size());

  tr.mu = w_[mu_w_] * tr.h + w_[mu_b_].col(0);
  tr.s_raw = (w_[s_w_] * tr.h).real() + w_[s_b_].col(0).real();
  tr.d_raw = w_[d_w_] * tr.h + w_[d_b_].col(0);
  check_finite(tr.mu, layer, "mu head");
  check_finite(tr.s_raw.cast<Complex>(), layer, "sigma head");
  check_finite(tr.d_raw, layer++, "delta head");
  constrain_sigma_delta(tr.s_raw, tr.d_raw, tr.sigma, tr.delta);

  if (eps_r) {
    tr.k = reparam_scales(tr.sigma, tr.delta);
    tr.x.resize(arch_.q);
    for (int j = 0; j < arch_.q; ++j) {
      tr.x[j] = tr.mu[j] + tr.k.k_r[j] * (*eps_r)[j] + Complex(0.0, tr.k.k_i[j] * (*eps_i)[j]);
    }
  } else {
    tr.x = tr.mu;
  }

  const int cb = arch_.bottleneck_channels();
  const int lb = arch_.bottleneck_length();
  const ComplexVector dense = w_[dec_w_] * tr.x + w_[dec_b_].col(0);
  tr.dense_pre = Eigen::Map<const ComplexMatrix>(dense.data(), cb, lb);
  cur = activate(act, tr.dense_pre, bias(dec_act_));
  check_finite(cur, layer++, "decoder dense");

  tr.up_col.assign(nb, {});
  tr.up_pre.assign(nb, {});
  tr.up_normed.assign(nb, {});
  for (int b = nb - 1; b >= 0; --b) {
    const auto& blk = arch_.blocks[b];
    tr.up_col[b] = layers::im2col(layers::upsample_forward(cur, blk.pool), blk.kernel);
    tr.up_pre[b] = layers::conv_forward(w_[up_w_[b]], w_[up_b_[b]].col(0), tr.up_col[b]);
    if (b > 0) {
      tr.up_normed[b] = layers::scale_rows(tr.up_pre[b], norm_[static_cast<std::size_t>(nb + (nb - 1 - b))]);
      cur = activate(act, tr.up_normed[b], bias(up_act_[b]));
    } else {
      cur = tr.up_pre[b];
    }
    check_finite(cur, layer++, "decoder block");
  }
  if (nb == 0) cur = tr.dense_pre;  // no conv stack: the dense layer is the output
  tr.z_hat = cur.row(0).transpose();
  if (nb == 0) tr.z_hat = Eigen::Map<const ComplexVector>(tr.dense_pre.data(), tr.dense_pre.size());

  LossParts loss;
  loss.recon = (z - tr.z_hat).squaredNorm();
  if (beta != 0.0) loss.kl = kl_closed_form({tr.mu, tr.sigma, tr.delta});
  loss.total = loss.recon + beta * loss.kl;
  return loss;
}

void Cvae::backward(const ComplexVector& z, double beta, const RealVector* eps_r, const RealVector* eps_i,
                    const Trace& tr, std::span<double> grad) const {
  const int nb = static_cast<int>(arch_.blocks.size());
  const int q = arch_.q;
  const Activation act = arch_.activation;
  std::vector<ComplexMatrix> g(w_.size());
  for (std::size_t i = 0; i < w_.size(); ++i) g[i] = ComplexMatrix::Zero(w_[i].rows(), w_[i].cols());
  auto bias = [&](int id) -> const ComplexMatrix* { return id >= 0 ? &w_[static_cast<std::size_t>(id)] : nullptr; };
  auto gbias = [&](int id) -> ComplexMatrix* { return id >= 0 ? &g[static_cast<std::size_t>(id)] : nullptr; };

  std::vector<int> ch{1};
  std::vector<int> len{arch_.m};
  for (const auto& b : arch_.blocks) {
    ch.push_back(b.channels);
    len.push_back(len.back() / b.pool);
  }

  // Decoder.
  const ComplexVector g_zhat = 2.0 * (tr.z_hat - z);
  ComplexMatrix g_cur = g_zhat.transpose();
  for (int b = 0; b < nb; ++b) {
    const auto& blk = arch_.blocks[b];
    ComplexMatrix g_pre;
    if (b > 0) {
      const auto& s = norm_[static_cast<std::size_t>(nb + (nb - 1 - b))];
      g_pre = layers::scale_rows(activate_backward(act, tr.up_normed[b], bias(up_act_[b]), g_cur, gbias(up_act_[b])), s);
    } else {
      g_pre = g_cur;
    }
    ComplexVector g_b = g[up_b_[b]].col(0);
    const ComplexMatrix g_col = layers::conv_backward(w_[up_w_[b]], tr.up_col[b], g_pre, g[up_w_[b]], g_b);
    g[up_b_[b]].col(0) = g_b;
    g_cur = layers::upsample_backward(layers::col2im(g_col, ch[b + 1], len[b], blk.kernel), blk.pool);
  }
  const int cb = arch_.bottleneck_channels();
  const int lb = arch_.bottleneck_length();
  ComplexMatrix g_dense_mat = nb > 0 ? activate_backward(act, tr.dense_pre, bias(dec_act_), g_cur, gbias(dec_act_))
                                     : ComplexMatrix(Eigen::Map<const ComplexMatrix>(g_zhat.data(), cb, lb));
  const ComplexVector g_dense = Eigen::Map<const ComplexVector>(g_dense_mat.data(), g_dense_mat.size());
  g[dec_w_].noalias() += g_dense * tr.x.adjoint();
  g[dec_b_].col(0) += g_dense;
  const ComplexVector g_x = w_[dec_w_].adjoint() * g_dense;

  // Latent: reparameterization and KL.
  ComplexVector g_mu = g_x + (2.0 * beta) * tr.mu;
  RealVector g_sigma = RealVector::Zero(q);
  ComplexVector g_delta = ComplexVector::Zero(q);
  for (int j = 0; j < q; ++j) {
    const double s = tr.sigma[j];
    const Complex d = tr.delta[j];
    const double qd = s * s - std::norm(d);
    if (beta != 0.0) {
      g_sigma[j] += beta * (1.0 - s / qd);
      g_delta[j] += beta * d / qd;
    }
    if (!eps_r) continue;
    const Complex g_kr = (*eps_r)[j] * g_x[j];
    const double g_ki = (*eps_i)[j] * g_x[j].imag();
    const double a = s + d.real();
    const double da = a > kEpsNum ? 1.0 : 0.0;
    const double dd = std::sqrt(2.0 * std::max(a, kEpsNum));
    const double d3 = dd * dd * dd;
    const double sq = std::sqrt(std::max(qd, 0.0));
    const Complex dkr_ds = 1.0 / dd - (s + d) * da / d3;  // also d k_r / d Re delta
    const Complex dkr_ddi(0.0, 1.0 / dd);
    const double inv_sq = sq > 0.0 ? 1.0 / sq : 0.0;
    const double dki_ds = s * inv_sq / dd - sq * da / d3;
    const double dki_ddr = -d.real() * inv_sq / dd - sq * da / d3;
    const double dki_ddi = -d.imag() * inv_sq / dd;
    auto re_dot = [](Complex gk, Complex dk) { return gk.real() * dk.real() + gk.imag() * dk.imag(); };
    g_sigma[j] += re_dot(g_kr, dkr_ds) + g_ki * dki_ds;
    const double g_dr = re_dot(g_kr, dkr_ds) + g_ki * dki_ddr;
    const double g_di = re_dot(g_kr, dkr_ddi) + g_ki * dki_ddi;
    g_delta[j] += Complex(g_dr, g_di);
  }

  // Constraint: sigma = softplus(s) + eps, delta = sigma * v, v = d / (1 + |d|).
  RealVector g_s(q);
  ComplexVector g_draw(q);
  for (int j = 0; j < q; ++j) {
    const Complex dr = tr.d_raw[j];
    const double r = std::abs(dr);
    const Complex v = dr / (1.0 + r);
    const double g_sig = g_sigma[j] + g_delta[j].real() * v.real() + g_delta[j].imag() * v.imag();
    g_s[j] = g_sig * layers::sigmoid(tr.s_raw[j]);
    const Complex g_v = tr.sigma[j] * g_delta[j];
    Complex gd = g_v / (1.0 + r);
    if (r > 0.0) {
      const Complex u = dr / r;
      const double ug = u.real() * g_v.real() + u.imag() * g_v.imag();
      gd -= (r / ((1.0 + r) * (1.0 + r))) * ug * u;
    }
    g_draw[j] = gd;
  }

  // Heads.
  const ComplexVector g_sc = g_s.cast<Complex>();
  g[mu_w_].noalias() += g_mu * tr.h.adjoint();
  g[mu_b_].col(0) += g_mu;
  g[s_w_].noalias() += g_sc * tr.h.adjoint();
  g[s_b_].col(0) += g_sc;
  g[d_w_].noalias() += g_draw * tr.h.adjoint();
  g[d_b_].col(0) += g_draw;
  const ComplexVector g_h = w_[mu_w_].adjoint() * g_mu + w_[s_w_].adjoint() * g_sc + w_[d_w_].adjoint() * g_draw;

  // Encoder.
  g_cur = Eigen::Map<const ComplexMatrix>(g_h.data(), cb, lb);
  for (int b = nb - 1; b >= 0; --b) {
    const auto& blk = arch_.blocks[b];
    const ComplexMatrix g_act = layers::maxpool_backward(g_cur, tr.enc_arg[b], len[b]);
    const ComplexMatrix g_pre =
        layers::scale_rows(activate_backward(act, tr.enc_normed[b], bias(enc_act_[b]), g_act, gbias(enc_act_[b])),
                           norm_[b]);
    ComplexVector g_b = g[enc_b_[b]].col(0);
    const ComplexMatrix g_col = layers::conv_backward(w_[enc_w_[b]], tr.enc_col[b], g_pre, g[enc_w_[b]], g_b);
    g[enc_b_[b]].col(0) = g_b;
    if (b > 0) g_cur = layers::col2im(g_col, ch[b], len[b], blk.kernel);
  }

  for (std::size_t i = 0; i < g.size(); ++i) add_packed(layout_, g[i], static_cast<int>(i), grad);
}

PosteriorParams Cvae::encode(const ComplexVector& z) const {
  Trace tr;
  run(z, 0.0, nullptr, nullptr, tr);
  return {tr.mu, tr.sigma, tr.delta};
}

ComplexVector Cvae::decode(const ComplexVector& x) const {
  if (x.size() != arch_.q) throw InvalidArgument("Cvae::decode: latent size mismatch");
  const int nb = static_cast<int>(arch_.blocks.size());
  const int cb = arch_.bottleneck_channels();
  const int lb = arch_.bottleneck_length();
  const ComplexVector dense = w_[dec_w_] * x + w_[dec_b_].col(0);
  if (nb == 0) return dense;
  auto bias = [&](int id) -> const ComplexMatrix* { return id >= 0 ? &w_[static_cast<std::size_t>(id)] : nullptr; };
  ComplexMatrix cur = activate(arch_.activation, Eigen::Map<const ComplexMatrix>(dense.data(), cb, lb), bias(dec_act_));
  for (int b = nb - 1; b >= 0; --b) {
    const auto& blk = arch_.blocks[b];
    const ComplexMatrix col = layers::im2col(layers::upsample_forward(cur, blk.pool), blk.kernel);
    ComplexMatrix pre = layers::conv_forward(w_[up_w_[b]], w_[up_b_[b]].col(0), col);
    if (b > 0) {
      cur = activate(arch_.activation, layers::scale_rows(pre, norm_[static_cast<std::size_t>(nb + (nb - 1 - b))]),
                     bias(up_act_[b]));
    } else {
      cur = std::move(pre);
    }
  }
  return cur.row(0).transpose();
}

double Cvae::recon_score(const ComplexVector& z, ScoreMode mode, Rng* rng) const {
  if (mode == ScoreMode::Sampled) {
    if (!rng) throw InvalidArgument("recon_score: sampled mode needs a random stream");
    return (z - decode(sample_latent(encode(z), *rng))).squaredNorm();
  }
  Trace tr;
  return run(z, 0.0, nullptr, nullptr, tr).recon;
}

LossParts Cvae::elbo_loss(const ComplexVector& z, double beta, const RealVector& eps_r,
                          const RealVector& eps_i) const {
  if (!(beta >= 0.0)) throw InvalidArgument("elbo_loss: beta must be nonnegative");
  if (eps_r.size() != arch_.q || eps_i.size() != arch_.q) throw InvalidArgument("elbo_loss: noise size mismatch");
  Trace tr;
  return run(z, beta, &eps_r, &eps_i, tr);
}

LossParts Cvae::elbo_loss(const ComplexVector& z, double beta, Rng& rng) const {
  std::normal_distribution<double> n;
  RealVector er(arch_.q), ei(arch_.q);
  for (int j = 0; j < arch_.q; ++j) {
    er[j] = n(rng);
    ei[j] = n(rng);
  }
  return elbo_loss(z, beta, er, ei);
}

LossParts Cvae::loss_and_gradient(const ComplexVector& z, double beta, const RealVector& eps_r,
                                  const RealVector& eps_i, std::span<double> grad) const {
  if (grad.size() != layout_.size()) throw InvalidArgument("loss_and_gradient: gradient size mismatch");
  if (eps_r.size() != arch_.q || eps_i.size() != arch_.q) {
    throw InvalidArgument("loss_and_gradient: noise size mismatch");
  }
  Trace tr;
  const LossParts loss = run(z, beta, &eps_r, &eps_i, tr);
  backward(z, beta, &eps_r, &eps_i, tr, grad);
  return loss;
}

void Cvae::fit_normalization(std::span<const ComplexVector> data, int max_samples) {
  if (data.empty()) throw InsufficientData("fit_normalization: empty dataset");
  const std::size_t n = std::min(data.size(), static_cast<std::size_t>(std::max(1, max_samples)));
  const int nb = static_cast<int>(arch_.blocks.size());
  for (auto& s : norm_) s.setOnes();
  for (std::size_t layer = 0; layer < norm_.size(); ++layer) {
    RealVector acc = RealVector::Zero(norm_[layer].size());
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Trace tr;
      run(data[i], 0.0, nullptr, nullptr, tr);
      const ComplexMatrix& pre = layer < static_cast<std::size_t>(nb)
                                     ? tr.enc_pre[layer]
                                     : tr.up_pre[static_cast<std::size_t>(nb - 1 - (static_cast<int>(layer) - nb))];
      acc += pre.cwiseAbs2().rowwise().sum();
      count += static_cast<double>(pre.cols());
    }
    for (Eigen::Index c = 0; c < acc.size(); ++c) {
      const double rms = std::sqrt(acc[c] / count);
      norm_[layer][c] = (rms > 1e-12 && std::isfinite(rms)) ? rms : 1.0;
    }
  }
}

namespace {

constexpr char kCkptMagic[4] = {'C', 'V', 'A', 'E'};
constexpr std::uint32_t kCkptVersion = 1;
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void Cvae::save(const std::filesystem::path& path, const std::optional<TrainConfig>& training) const {
  json desc;
  desc["architecture"] = json::parse(arch_.to_json());
  desc["seed"] = seed_;
  if (training) desc["training"] = json::parse(training->to_json());
  desc["param_count"] = layout_.size();
  std::size_t norm_count = 0;
  for (const auto& s : norm_) norm_count += static_cast<std::size_t>(s.size());
  desc["norm_count"] = norm_count;
  const std::string text = desc.dump();

  std::vector<double> payload = parameters();
  for (const auto& s : norm_) payload.insert(payload.end(), s.data(), s.data() + s.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("Cvae::save: cannot open " + path.string());
  const auto len = static_cast<std::uint32_t>(text.size());
  const auto count = static_cast<std::uint64_t>(payload.size());
  f.write(kCkptMagic, 4);
  f.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.write(reinterpret_cast<const char*>(&count), 8);
  f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 8));
  if (!f) throw IoError("Cvae::save: write failed for " + path.string());
}

Cvae Cvae::load(const std::filesystem::path& path, std::optional<TrainConfig>* training) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("Cvae::load: cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0, len = 0;
  if (!f.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0) throw FormatError("Cvae::load: bad magic", 0);
  if (!f.read(reinterpret_cast<char*>(&version), 4) || version != kCkptVersion) {
    throw FormatError("Cvae::load: unsupported version", 4);
  }
  if (!f.read(reinterpret_cast<char*>(&len), 4) || len > (1u << 24)) {
    throw FormatError("Cvae::load: bad descriptor length", 8);
  }
  std::string text(len, '\0');
  if (!f.read(text.data(), len)) throw FormatError("Cvae::load: truncated descriptor", 12);

  Cvae net;
  std::size_t norm_count = 0;
  try {
    const json desc = json::parse(text);
    const CvaeArchitecture arch = CvaeArchitecture::from_json(desc.at("architecture").dump());
    net = Cvae(arch, desc.at("seed").get<std::uint64_t>());
    if (desc.at("param_count").get<std::size_t>() != net.layout_.size()) {
      throw FormatError("Cvae::load: parameter count does not match the architecture", 12);
    }
    norm_count = desc.at("norm_count").get<std::size_t>();
    if (training) {
      *training = desc.contains("training") ? std::optional<TrainConfig>(TrainConfig::from_json(desc["training"].dump()))
                                            : std::nullopt;
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("Cvae::load: bad descriptor: ") + e.what(), 12);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("Cvae::load: bad descriptor: ") + e.what(), 12);
  }

  std::size_t expected_norm = 0;
  for (const auto& s : net.norm_) expected_norm += static_cast<std::size_t>(s.size());
  const std::uint64_t offset = 12 + len;
  std::uint64_t count = 0;
  if (!f.read(reinterpret_cast<char*>(&count), 8)) throw FormatError("Cvae::load: truncated payload header", offset);
  if (norm_count != expected_norm || count != net.layout_.size() + expected_norm) {
    throw FormatError("Cvae::load: payload size does not match the architecture", offset);
  }
  std::vector<double> payload(static_cast<std::size_t>(count));
  if (!f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * 8))) {
    throw FormatError("Cvae::load: truncated payload", offset + 8);
  }
  net.set_parameters(std::span<const double>(payload.data(), net.layout_.size()));
  std::size_t at = net.layout_.size();
  for (auto& s : net.norm_) {
    for (Eigen::Index c = 0; c < s.size(); ++c) s[c] = payload[at++];
  }
  return net;
}

}  // namespace radood
