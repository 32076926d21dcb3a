#pragma once

// Local whitening of range-pulse cubes: slow-time segmentation, neighborhood
// covariance with ridge regularization, R^{-1/2} whitening and the unitary
// Doppler transform. Also the binary cube file format.

#include <filesystem>
#include <span>
#include <vector>

#include "radood/covest.hpp"
#include "radood/linalg.hpp"
#include "radood/sim.hpp"

namespace radood {

struct SnapshotIndex {
  int r = 0;  // range gate
  int p = 0;  // first pulse
};

struct WhitenConfig {
  int m = 16;
  int stride = 16;
  int n_adj = 8;    // total neighbor gates, split evenly on both sides
  int guard = 0;    // gates on each side of r excluded besides r itself
  double eps_ridge = 1e-2;

  void validate() const;
};

struct Snapshot {
  SnapshotIndex index;
  ComplexVector y;
};

struct DopplerProfile {
  ComplexVector bins;
  SnapshotIndex origin;
  bool whitened = false;
};

// Count of snapshots per gate: floor((n_pulses - m) / stride) + 1.
int snapshots_per_gate(int n_pulses, int m, int stride);

// Slow-time snapshots of every gate, gate-major then by start pulse.
std::vector<Snapshot> segment(const RangePulseCube& cube, int m, int stride);

// Gates used as reference for gate r: ceil(n_adj / 2) on each side beyond the
// guard band, clipped at the cube edges. Never contains r.
std::vector<int> neighborhood(int r, int n_ranges, const WhitenConfig& cfg);

// Ridge-regularized SCM over every snapshot whose gate lies in the
// neighborhood of r.
CovarianceEstimate local_covariance(std::span<const Snapshot> snapshots, int r, int n_ranges,
                                    const WhitenConfig& cfg);

// DFT(R^{-1/2} y).
DopplerProfile whiten_profile(const ComplexVector& y, const CovarianceEstimate& r_reg, SnapshotIndex origin = {});
DopplerProfile whiten_profile(const ComplexVector& y, const HermitianMatrix& r_inv_sqrt, SnapshotIndex origin = {});
// DFT(y), no whitening.
DopplerProfile raw_profile(const ComplexVector& y, SnapshotIndex origin = {});

// Local whitening over a whole cube. Gates are processed independently; `jobs`
// bounds the worker count and does not affect the result.
std::vector<DopplerProfile> whiten_cube(const RangePulseCube& cube, const WhitenConfig& cfg, int jobs = 1);

// Cube file: "CPXC", u32 version=1, u32 n_ranges, u32 n_pulses, then
// row-major (re, im) f32 pairs, all little-endian.
RangePulseCube read_cube(const std::filesystem::path& path);
void write_cube(const RangePulseCube& cube, const std::filesystem::path& path);

}  // namespace radood
