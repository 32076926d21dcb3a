#pragma once

// Counter-keyed random substreams. Every Monte Carlo draw in the library is
// taken from a stream identified by (master seed, key...), so results do not
// depend on evaluation order or worker count.

#include <cstdint>
#include <initializer_list>
#include <random>

#include "radood/linalg.hpp"

namespace radood {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
  return Rng(derive_seed(master, key));
}

// Stream tags. Distinct tags give disjoint substream families.
enum class StreamTag : std::uint64_t {
  Train = 1,
  Eval = 2,
  Test = 3,
  Holdout = 4,
  Cube = 5,
  CubeTarget = 6,
  CvaeInit = 7,
  CvaeNoise = 8,
  CvaeShuffle = 9,
  Scoring = 10,
};

constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

// CN(0, 1): real and imaginary parts i.i.d. N(0, 1/2).
class ComplexNormal {
 public:
  Complex operator()(Rng& rng) { return {n_(rng), n_(rng)}; }

 private:
  std::normal_distribution<double> n_{0.0, 0.70710678118654752440};
};

}  // namespace radood
