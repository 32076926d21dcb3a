#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "radood/cvae.hpp"
#include "radood/errors.hpp"
#include "radood/parallel.hpp"

namespace radood {

using json = nlohmann::json;

std::string TrainConfig::to_json() const {
  json j{{"epochs", epochs},       {"batch", batch},           {"lr", lr},
         {"beta", beta},           {"adam_beta1", adam_beta1}, {"adam_beta2", adam_beta2},
         {"adam_eps", adam_eps},   {"divergence_limit", divergence_limit},
         {"seed", seed}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.beta = j.value("beta", c.beta);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
}

TrainResult train(Cvae& net, std::span<const ComplexVector> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw InsufficientData("train: empty dataset");
  if (cfg.epochs < 0 || cfg.batch < 1) throw InvalidArgument("train: epochs must be >= 0 and batch >= 1");
  if (!(cfg.lr >= 0.0) || !(cfg.beta >= 0.0)) throw InvalidArgument("train: lr and beta must be nonnegative");
  const int m = net.architecture().m;
  const int q = net.architecture().q;
  for (const auto& z : dataset) {
    if (z.size() != m) throw InvalidArgument("train: profile length differs from the architecture");
  }

  std::vector<double> theta = net.parameters();
  const std::size_t p = theta.size();
  std::vector<double> adam_m(p, 0.0), adam_v(p, 0.0), grad(p);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const auto batch = static_cast<std::size_t>(cfg.batch);
  std::vector<std::vector<double>> sample_grad(std::min(batch, dataset.size()), std::vector<double>(p));
  std::vector<LossParts> sample_loss(sample_grad.size());

  TrainResult result;
  long long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = substream(cfg.seed, {tag(StreamTag::CvaeShuffle), static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss acc{epoch, 0.0, 0.0, 0.0};

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t nb = std::min(batch, order.size() - start);
      parallel_for(nb, cfg.jobs, [&](std::size_t i) {
        const std::size_t idx = order[start + i];
        Rng rng = substream(cfg.seed, {tag(StreamTag::CvaeNoise), static_cast<std::uint64_t>(epoch), idx});
        std::normal_distribution<double> n;
        RealVector er(q), ei(q);
        for (int j = 0; j < q; ++j) {
          er[j] = n(rng);
          ei[j] = n(rng);
        }
        std::fill(sample_grad[i].begin(), sample_grad[i].end(), 0.0);
        sample_loss[i] = net.loss_and_gradient(dataset[idx], cfg.beta, er, ei, sample_grad[i]);
      });

      std::fill(grad.begin(), grad.end(), 0.0);
      double recon = 0.0, kl = 0.0, total = 0.0;
      for (std::size_t i = 0; i < nb; ++i) {
        for (std::size_t k = 0; k < p; ++k) grad[k] += sample_grad[i][k];
        recon += sample_loss[i].recon;
        kl += sample_loss[i].kl;
        total += sample_loss[i].total;
      }
      const double mean_total = total / static_cast<double>(nb);
      if (!std::isfinite(mean_total) || mean_total > cfg.divergence_limit) {
        throw TrainingFailure("train: loss diverged (batch mean " + std::to_string(mean_total) + ")", epoch);
      }
      acc.recon += recon;
      acc.kl += kl;
      acc.total += total;

      ++step;
      const double inv_n = 1.0 / static_cast<double>(nb);
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < p; ++k) {
        const double g = grad[k] * inv_n;
        adam_m[k] = cfg.adam_beta1 * adam_m[k] + (1.0 - cfg.adam_beta1) * g;
        adam_v[k] = cfg.adam_beta2 * adam_v[k] + (1.0 - cfg.adam_beta2) * g * g;
        theta[k] -= cfg.lr * (adam_m[k] / bc1) / (std::sqrt(adam_v[k] / bc2) + cfg.adam_eps);
      }
      net.set_parameters(theta);
    }

    const double n = static_cast<double>(dataset.size());
    acc.recon /= n;
    acc.kl /= n;
    acc.total /= n;
    result.trace.push_back(acc);
  }
  return result;
}

void write_loss_trace(const std::vector<EpochLoss>& trace, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_loss_trace: cannot open " + path.string());
  f << "epoch,recon,kl,total\n";
  char line[128];
  for (const auto& e : trace) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.recon, e.kl, e.total);
    f << line;
  }
  if (!f) throw IoError("write_loss_trace: write failed for " + path.string());
}

}  // namespace radood
