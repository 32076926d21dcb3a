#pragma once

// Pd surfaces and their CSV / SVG renderings.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace radood {

struct PdPoint {
  double snr_db = 0.0;
  int d = 0;
  double pd = 0.0;
  double ci = 0.0;  // Wilson 95% half-width
  std::size_t trials = 0;
};

struct PdSurface {
  std::string detector;
  std::string preprocessing;
  std::vector<PdPoint> points;  // SNR-major, then bin

  std::string label() const { return detector + "/" + preprocessing; }
  const PdPoint* at(double snr_db, int d) const;
};

// Long-format CSV: detector,preprocessing,snr_db,doppler_bin,pd,ci,trials.
// Reals are written with 17 significant digits, so reading back is exact.
std::string surfaces_to_csv(const std::vector<PdSurface>& surfaces);
std::vector<PdSurface> surfaces_from_csv(const std::string& text);
void write_surfaces_csv(const std::vector<PdSurface>& surfaces, const std::filesystem::path& path);
std::vector<PdSurface> read_surfaces_csv(const std::filesystem::path& path);

// One heatmap per surface (bin on x, SNR on y, colour = Pd).
std::string heatmap_svg(const std::vector<PdSurface>& surfaces);
// Pd vs SNR at bin d, one polyline per surface.
std::string curves_svg(const std::vector<PdSurface>& surfaces, int d);

// Writes <stem>.csv, <stem>_heatmaps.svg and <stem>_d<bin>.svg for the first
// bin present. Throws InvalidArgument on empty input and IoError when the
// directory cannot be written.
void emit_report(const std::vector<PdSurface>& surfaces, const std::filesystem::path& dir,
                 const std::string& stem = "pd");

}  // namespace radood
