#pragma once

// Complex-valued variational autoencoder on Doppler profiles.
//
// Encoder: complex 1D conv blocks (conv -> scale norm -> activation ->
// modulus max-pool), then three dense heads giving mu, the raw variance head
// s and the raw pseudo-variance head d. The posterior is a non-circular
// complex Gaussian per latent dimension with variance sigma = E|x - mu|^2
// and pseudo-variance delta = E[(x - mu)^2], |delta| < sigma.
//
// Decoder: dense q -> C_K x L_K, activation, then per block (reversed) a
// zero-insertion upsample followed by a same-padded conv; the last conv is
// linear and produces the reconstruction.
//
// Gradients of complex quantities are packed as dL/dRe + i dL/dIm.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radood/linalg.hpp"
#include "radood/rng.hpp"

namespace radood {

inline constexpr double kEpsNum = 1e-6;

enum class Activation { ModReLU, CReLU };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct ConvBlock {
  int channels = 8;
  int kernel = 5;  // odd
  int pool = 2;
};

struct CvaeArchitecture {
  int m = 16;
  std::vector<ConvBlock> blocks{{8, 5, 2}, {16, 5, 2}};
  Activation activation = Activation::ModReLU;
  int q = 8;

  void validate() const;
  // Channels and length after the last encoder block.
  int bottleneck_channels() const;
  int bottleneck_length() const;
  std::string to_json() const;
  static CvaeArchitecture from_json(const std::string& text);
};

struct PosteriorParams {
  ComplexVector mu;
  RealVector sigma;     // variance, > 0
  ComplexVector delta;  // pseudo-variance, |delta| < sigma

  int dim() const noexcept { return static_cast<int>(mu.size()); }
  bool valid() const;
};

struct ReparamScales {
  ComplexVector k_r;
  RealVector k_i;  // >= 0
};

// sigma = softplus(s) + eps_num, delta = sigma * d / (1 + |d|).
void constrain_sigma_delta(const RealVector& s_raw, const ComplexVector& delta_raw, RealVector& sigma,
                           ComplexVector& delta);

// k_r = (sigma + delta) / sqrt(2 (sigma + Re delta)),
// k_i = sqrt(sigma^2 - |delta|^2) / sqrt(2 (sigma + Re delta)).
// sigma + Re delta is floored at eps_num and sigma^2 - |delta|^2 at 0.
ReparamScales reparam_scales(const RealVector& sigma, const ComplexVector& delta);

// x = mu + k_r eps_r + i k_i eps_i.
ComplexVector sample_latent(const PosteriorParams& post, const RealVector& eps_r, const RealVector& eps_i);
ComplexVector sample_latent(const PosteriorParams& post, Rng& rng);

// sum_j |mu_j|^2 + sigma_j - 0.5 ln(sigma_j^2 - |delta_j|^2). This is the
// exact divergence to CN(0, I) plus q; the constant does not affect training.
double kl_closed_form(const PosteriorParams& post);
// The exact divergence, kl_closed_form - q.
double kl_exact(const PosteriorParams& post);

// Flat layout of every trainable tensor. Complex tensors occupy two doubles
// per entry (re, im interleaved), real tensors one.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    int rows = 0;
    int cols = 0;
    bool complex = true;
    std::size_t offset = 0;
  };

  int add(std::string name, int rows, int cols, bool complex);
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return size_; }
  int find(const std::string& name) const;

  // Real tensors are returned with zero imaginary part.
  ComplexMatrix unpack(std::span<const double> flat, int id) const;
  void pack(const ComplexMatrix& t, int id, std::span<double> flat) const;

 private:
  std::vector<Entry> entries_;
  std::size_t size_ = 0;
};

struct LossParts {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

enum class ScoreMode { Mean, Sampled };

struct TrainConfig {
  int epochs = 50;
  int batch = 128;
  double lr = 1e-3;
  double beta = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double divergence_limit = 1e6;
  std::uint64_t seed = 0;
  int jobs = 1;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochLoss {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

class Cvae {
 public:
  Cvae() = default;
  // Weights are complex Gaussian with variance 1/fan_in; biases are zero;
  // normalization scales start at 1.
  Cvae(const CvaeArchitecture& arch, std::uint64_t seed);

  const CvaeArchitecture& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ParamStore& layout() const noexcept { return layout_; }

  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  const std::vector<RealVector>& norm_scales() const noexcept { return norm_; }

  PosteriorParams encode(const ComplexVector& z) const;
  ComplexVector decode(const ComplexVector& x) const;

  // ||z - decode(x)||^2 with x = mu (Mean) or a posterior sample (Sampled).
  double recon_score(const ComplexVector& z, ScoreMode mode = ScoreMode::Mean, Rng* rng = nullptr) const;

  // ||z - z_hat||^2 + beta * KL with z_hat decoded from one reparameterized
  // sample. The fixed-noise overload uses the given standard normal draws.
  LossParts elbo_loss(const ComplexVector& z, double beta, Rng& rng) const;
  LossParts elbo_loss(const ComplexVector& z, double beta, const RealVector& eps_r, const RealVector& eps_i) const;

  // Same loss, adding dLoss/dtheta into `grad` (size layout().size()).
  LossParts loss_and_gradient(const ComplexVector& z, double beta, const RealVector& eps_r, const RealVector& eps_i,
                              std::span<double> grad) const;

  // Sets each normalization scale to the RMS modulus of its channel over
  // (a prefix of) the data, layer by layer in forward order. The scales are
  // frozen buffers, not trainable parameters.
  void fit_normalization(std::span<const ComplexVector> data, int max_samples = 2048);

  // Binary checkpoint: "CVAE", u32 version, u32 descriptor length, JSON
  // descriptor (architecture, seed, optional training config), u64 count,
  // f64 parameters followed by normalization scales.
  void save(const std::filesystem::path& path, const std::optional<TrainConfig>& training = std::nullopt) const;
  static Cvae load(const std::filesystem::path& path, std::optional<TrainConfig>* training = nullptr);

 private:
  struct Trace;

  void build_layout();
  LossParts run(const ComplexVector& z, double beta, const RealVector* eps_r, const RealVector* eps_i,
                Trace& tr) const;
  void backward(const ComplexVector& z, double beta, const RealVector* eps_r, const RealVector* eps_i,
                const Trace& tr, std::span<double> grad) const;

  CvaeArchitecture arch_;
  std::uint64_t seed_ = 0;
  ParamStore layout_;
  std::vector<ComplexMatrix> w_;   // unpacked tensors, indexed like layout_
  std::vector<RealVector> norm_;   // encoder norms then decoder norms
  std::vector<int> enc_w_, enc_b_, enc_act_, up_w_, up_b_, up_act_;
  int mu_w_ = -1, mu_b_ = -1, s_w_ = -1, s_b_ = -1, d_w_ = -1, d_b_ = -1;
  int dec_w_ = -1, dec_b_ = -1, dec_act_ = -1;
};

struct TrainResult {
  std::vector<EpochLoss> trace;
};

// Adam on the mean per-sample loss of each mini-batch. Per-sample noise is
// drawn from substreams keyed by (seed, epoch, sample index) and per-sample
// gradients are summed in sample order, so the result does not depend on
// cfg.jobs. Throws TrainingFailure when a batch loss is non-finite or
// exceeds cfg.divergence_limit.
TrainResult train(Cvae& net, std::span<const ComplexVector> dataset, const TrainConfig& cfg);

void write_loss_trace(const std::vector<EpochLoss>& trace, const std::filesystem::path& path);

}  // namespace radood
