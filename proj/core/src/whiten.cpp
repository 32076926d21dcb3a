#include "radood/whiten.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "radood/errors.hpp"
#include "radood/parallel.hpp"

namespace radood {

void WhitenConfig::validate() const {
  if (m <= 0) throw InvalidArgument("WhitenConfig: m must be positive");
  if (stride <= 0) throw InvalidArgument("WhitenConfig: stride must be positive");
  if (n_adj < 1) throw InvalidArgument("WhitenConfig: n_adj must be at least 1");
  if (guard < 0) throw InvalidArgument("WhitenConfig: guard must be nonnegative");
  if (!(eps_ridge > 0.0)) throw InvalidArgument("WhitenConfig: eps_ridge must be positive");
}

int snapshots_per_gate(int n_pulses, int m, int stride) {
  if (m <= 0 || stride <= 0) throw InvalidArgument("segment: m and stride must be positive");
  if (n_pulses < m) {
    throw InvalidArgument("segment: " + std::to_string(n_pulses) + " pulses is fewer than m=" + std::to_string(m));
  }
  return (n_pulses - m) / stride + 1;
}

std::vector<Snapshot> segment(const RangePulseCube& cube, int m, int stride) {
  const int per_gate = snapshots_per_gate(cube.n_pulses, m, stride);
  std::vector<Snapshot> out;
  out.reserve(static_cast<std::size_t>(per_gate) * static_cast<std::size_t>(cube.n_ranges));
  for (int r = 0; r < cube.n_ranges; ++r) {
    for (int s = 0; s < per_gate; ++s) {
      const int p = s * stride;
      out.push_back({{r, p}, cube.data.row(r).segment(p, m).transpose()});
    }
  }
  return out;
}

std::vector<int> neighborhood(int r, int n_ranges, const WhitenConfig& cfg) {
  cfg.validate();
  if (r < 0 || r >= n_ranges) throw InvalidArgument("neighborhood: gate out of range");
  const int half = (cfg.n_adj + 1) / 2;
  std::vector<int> gates;
  for (int g = r - cfg.guard - half; g < r - cfg.guard; ++g) {
    if (g >= 0) gates.push_back(g);
  }
  for (int g = r + cfg.guard + 1; g <= r + cfg.guard + half; ++g) {
    if (g < n_ranges) gates.push_back(g);
  }
  return gates;
}

namespace {

CovarianceEstimate regularized_scm(const ComplexMatrix& scatter, int k, double eps_ridge, int r) {
  if (k == 0) throw InsufficientData("local_covariance: empty neighborhood for gate " + std::to_string(r));
  const CovarianceEstimate raw{HermitianMatrix(scatter / static_cast<double>(k), 1e-9), CovarianceKind::SCM, k};
  return ridge_regularize(raw, eps_ridge);
}

}  // namespace

CovarianceEstimate local_covariance(std::span<const Snapshot> snapshots, int r, int n_ranges,
                                    const WhitenConfig& cfg) {
  const std::vector<int> gates = neighborhood(r, n_ranges, cfg);
  std::vector<char> in_nb(static_cast<std::size_t>(n_ranges), 0);
  for (int g : gates) in_nb[static_cast<std::size_t>(g)] = 1;
  ComplexMatrix scatter = ComplexMatrix::Zero(cfg.m, cfg.m);
  int k = 0;
  for (const auto& s : snapshots) {
    if (s.index.r < 0 || s.index.r >= n_ranges || !in_nb[static_cast<std::size_t>(s.index.r)]) continue;
    if (s.y.size() != cfg.m) throw InvalidArgument("local_covariance: snapshot length differs from m");
    scatter.noalias() += s.y * s.y.adjoint();
    ++k;
  }
  return regularized_scm(scatter, k, cfg.eps_ridge, r);
}

DopplerProfile whiten_profile(const ComplexVector& y, const HermitianMatrix& r_inv_sqrt, SnapshotIndex origin) {
  if (y.size() != r_inv_sqrt.dim()) throw InvalidArgument("whiten_profile: dimension mismatch");
  return {dft_unitary(r_inv_sqrt.matrix() * y), origin, true};
}

DopplerProfile whiten_profile(const ComplexVector& y, const CovarianceEstimate& r_reg, SnapshotIndex origin) {
  return whiten_profile(y, herm_inv_sqrt(r_reg.matrix), origin);
}

DopplerProfile raw_profile(const ComplexVector& y, SnapshotIndex origin) { return {dft_unitary(y), origin, false}; }

std::vector<DopplerProfile> whiten_cube(const RangePulseCube& cube, const WhitenConfig& cfg, int jobs) {
  cfg.validate();
  cube.validate();
  const std::vector<Snapshot> snaps = segment(cube, cfg.m, cfg.stride);
  const auto per_gate = static_cast<std::size_t>(snapshots_per_gate(cube.n_pulses, cfg.m, cfg.stride));
  const auto n_ranges = static_cast<std::size_t>(cube.n_ranges);

  // Per-gate scatter sums; each neighborhood covariance is then a sum of
  // whole-gate blocks instead of a pass over every snapshot.
  std::vector<ComplexMatrix> scatter(n_ranges);
  parallel_for(n_ranges, jobs, [&](std::size_t r) {
    ComplexMatrix s = ComplexMatrix::Zero(cfg.m, cfg.m);
    for (std::size_t j = 0; j < per_gate; ++j) {
      const ComplexVector& y = snaps[r * per_gate + j].y;
      s.noalias() += y * y.adjoint();
    }
    scatter[r] = std::move(s);
  });

  std::vector<DopplerProfile> out(snaps.size());
  parallel_for(n_ranges, jobs, [&](std::size_t r) {
    const std::vector<int> gates = neighborhood(static_cast<int>(r), cube.n_ranges, cfg);
    ComplexMatrix s = ComplexMatrix::Zero(cfg.m, cfg.m);
    for (int g : gates) s += scatter[static_cast<std::size_t>(g)];
    const int k = static_cast<int>(gates.size() * per_gate);
    const HermitianMatrix b = herm_inv_sqrt(regularized_scm(s, k, cfg.eps_ridge, static_cast<int>(r)).matrix);
    for (std::size_t j = 0; j < per_gate; ++j) {
      const Snapshot& sn = snaps[r * per_gate + j];
      out[r * per_gate + j] = whiten_profile(sn.y, b, sn.index);
    }
  });
  return out;
}

namespace {

constexpr std::array<char, 4> kCubeMagic{'C', 'P', 'X', 'C'};
constexpr std::uint32_t kCubeVersion = 1;
constexpr std::uint64_t kHeaderBytes = 16;
// 2^28 cells = 2 GiB of payload; anything larger is treated as corrupt.
constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 28;

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::vector<unsigned char>& buf, T v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T get(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

}  // namespace

void write_cube(const RangePulseCube& cube, const std::filesystem::path& path) {
  cube.validate();
  std::vector<unsigned char> buf;
  const auto cells = static_cast<std::size_t>(cube.n_ranges) * static_cast<std::size_t>(cube.n_pulses);
  buf.reserve(kHeaderBytes + cells * 8);
  buf.insert(buf.end(), kCubeMagic.begin(), kCubeMagic.end());
  put<std::uint32_t>(buf, kCubeVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cube.n_ranges));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cube.n_pulses));
  for (int r = 0; r < cube.n_ranges; ++r) {
    for (int p = 0; p < cube.n_pulses; ++p) {
      put<float>(buf, static_cast<float>(cube.data(r, p).real()));
      put<float>(buf, static_cast<float>(cube.data(r, p).imag()));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_cube: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write_cube: write failed for " + path.string());
}

RangePulseCube read_cube(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_cube: cannot open " + path.string());
  f.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(f.tellg());
  f.seekg(0, std::ios::beg);

  unsigned char header[kHeaderBytes];
  if (file_size < 4) throw FormatError("read_cube: file too short for magic", 0);
  f.read(reinterpret_cast<char*>(header), static_cast<std::streamsize>(std::min<std::uint64_t>(file_size, kHeaderBytes)));
  if (std::memcmp(header, kCubeMagic.data(), 4) != 0) throw FormatError("read_cube: bad magic", 0);
  if (file_size < kHeaderBytes) throw FormatError("read_cube: truncated header", file_size);
  const auto version = get<std::uint32_t>(header + 4);
  if (version != kCubeVersion) {
    throw FormatError("read_cube: unsupported version " + std::to_string(version), 4);
  }
  const auto n_ranges = get<std::uint32_t>(header + 8);
  const auto n_pulses = get<std::uint32_t>(header + 12);
  if (n_ranges == 0 || n_pulses == 0) throw FormatError("read_cube: zero dimension", 8);
  const std::uint64_t cells = std::uint64_t{n_ranges} * n_pulses;
  if (cells > kMaxCells || n_ranges > static_cast<std::uint32_t>(std::numeric_limits<int>::max()) ||
      n_pulses > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw FormatError("read_cube: dimensions " + std::to_string(n_ranges) + "x" + std::to_string(n_pulses) +
                          " exceed the supported size",
                      8);
  }
  const std::uint64_t expected = kHeaderBytes + cells * 8;
  if (file_size < expected) throw FormatError("read_cube: truncated payload", file_size);
  if (file_size > expected) throw FormatError("read_cube: trailing bytes after payload", expected);

  std::vector<unsigned char> payload(static_cast<std::size_t>(cells * 8));
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("read_cube: read failed for " + path.string());

  RangePulseCube cube{static_cast<int>(n_ranges), static_cast<int>(n_pulses),
                      ComplexMatrix(static_cast<Eigen::Index>(n_ranges), static_cast<Eigen::Index>(n_pulses))};
  const unsigned char* p = payload.data();
  for (int r = 0; r < cube.n_ranges; ++r) {
    for (int c = 0; c < cube.n_pulses; ++c, p += 8) {
      cube.data(r, c) = Complex(get<float>(p), get<float>(p + 4));
    }
  }
  if (!cube.data.allFinite()) throw FormatError("read_cube: non-finite sample", kHeaderBytes);
  return cube;
}

}  // namespace radood
