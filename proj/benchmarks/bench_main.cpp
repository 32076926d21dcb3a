#include <benchmark/benchmark.h>

#include <vector>

#include "radood/covest.hpp"
#include "radood/cvae.hpp"
#include "radood/detectors.hpp"
#include "radood/linalg.hpp"
#include "radood/rng.hpp"
#include "radood/sim.hpp"
#include "radood/whiten.hpp"

using namespace radood;

namespace {

DisturbanceSpec ccgn_awgn() {
  DisturbanceSpec s;
  s.kind = DisturbanceKind::cCGN_AWGN;
  s.sigma_n2 = 0.1;
  return s;
}

void BM_DrawSnapshot(benchmark::State& st) {
  const DisturbanceGenerator gen(ccgn_awgn());
  Rng rng(1);
  for (auto _ : st) benchmark::DoNotOptimize(gen.draw(rng));
}
BENCHMARK(BM_DrawSnapshot);

void BM_Dft(benchmark::State& st) {
  const int m = static_cast<int>(st.range(0));
  Rng rng(2);
  ComplexNormal cn;
  ComplexVector v(m);
  for (int i = 0; i < m; ++i) v[i] = cn(rng);
  for (auto _ : st) benchmark::DoNotOptimize(dft_unitary(v));
}
BENCHMARK(BM_Dft)->Arg(16)->Arg(15)->Arg(64);

void BM_Scm(benchmark::State& st) {
  const DisturbanceGenerator gen(ccgn_awgn());
  Rng rng(3);
  const ComplexMatrix z = gen.draw_many(rng, 32);
  for (auto _ : st) benchmark::DoNotOptimize(scm(z));
}
BENCHMARK(BM_Scm);

void BM_TylerFP(benchmark::State& st) {
  const DisturbanceGenerator gen(ccgn_awgn());
  Rng rng(4);
  const ComplexMatrix z = gen.draw_many(rng, static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(tyler_fp(z));
}
BENCHMARK(BM_TylerFP)->Arg(32)->Arg(128);

void BM_SteeringBankAllBins(benchmark::State& st) {
  const DisturbanceGenerator gen(ccgn_awgn());
  Rng rng(5);
  const SteeringBank bank(herm_inverse(gen.covariance()));
  const ComplexVector z = gen.draw(rng);
  for (auto _ : st) {
    const auto pr = bank.project(z);
    double acc = 0.0;
    for (int d = 0; d < bank.bins(); ++d) acc += bank.nmf(pr, d);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_SteeringBankAllBins);

void BM_CvaeScore(benchmark::State& st) {
  const Cvae net(CvaeArchitecture{}, 6);
  Rng rng(6);
  const DisturbanceGenerator gen(ccgn_awgn());
  const ComplexVector z = dft_unitary(gen.draw(rng));
  for (auto _ : st) benchmark::DoNotOptimize(net.recon_score(z));
}
BENCHMARK(BM_CvaeScore);

void BM_CvaeLossGradient(benchmark::State& st) {
  const Cvae net(CvaeArchitecture{}, 7);
  Rng rng(7);
  const DisturbanceGenerator gen(ccgn_awgn());
  const ComplexVector z = dft_unitary(gen.draw(rng));
  const RealVector er = RealVector::Constant(8, 0.3), ei = RealVector::Constant(8, -0.2);
  std::vector<double> grad(net.layout().size());
  for (auto _ : st) benchmark::DoNotOptimize(net.loss_and_gradient(z, 0.01, er, ei, grad));
}
BENCHMARK(BM_CvaeLossGradient);

void BM_WhitenCube(benchmark::State& st) {
  const auto cube = simulate_cube(ccgn_awgn(), 32, 128, {}, 8);
  for (auto _ : st) benchmark::DoNotOptimize(whiten_cube(cube, WhitenConfig{}, 1));
}
BENCHMARK(BM_WhitenCube)->Unit(benchmark::kMillisecond);

void BM_SimulateCube(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(simulate_cube(ccgn_awgn(), 64, 256, {}, 9));
}
BENCHMARK(BM_SimulateCube)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
