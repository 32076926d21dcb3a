#include "radood/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "radood/errors.hpp"

namespace radood {

namespace {

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "' on CSV line " + std::to_string(line), line);
  }
}

// Viridis-like ramp through five anchors.
std::string colour(double pd) {
  static const double anchors[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  const double x = std::clamp(pd, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(x));
  const double t = x - i;
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<int>(std::lround(anchors[i][k] + t * (anchors[i + 1][k] - anchors[i][k])));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

}  // namespace

const PdPoint* PdSurface::at(double snr_db, int d) const {
  for (const auto& p : points) {
    if (p.snr_db == snr_db && p.d == d) return &p;
  }
  return nullptr;
}

std::string surfaces_to_csv(const std::vector<PdSurface>& surfaces) {
  std::string out = "detector,preprocessing,snr_db,doppler_bin,pd,ci,trials\n";
  char buf[256];
  for (const auto& s : surfaces) {
    for (const auto& p : s.points) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%d,%.17g,%.17g,%zu\n", s.detector.c_str(), s.preprocessing.c_str(),
                    p.snr_db, p.d, p.pd, p.ci, p.trials);
      out += buf;
    }
  }
  return out;
}

std::vector<PdSurface> surfaces_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"detector", "preprocessing", "snr_db",
                                                                               "doppler_bin", "pd", "ci", "trials"}) {
    throw FormatError("unexpected CSV header", 0);
  }
  std::vector<PdSurface> out;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw FormatError("expected 7 fields on CSV line " + std::to_string(n), n);
    if (out.empty() || out.back().detector != f[0] || out.back().preprocessing != f[1]) {
      out.push_back({f[0], f[1], {}});
    }
    PdPoint p;
    p.snr_db = parse_double(f[2], n);
    p.d = static_cast<int>(parse_double(f[3], n));
    p.pd = parse_double(f[4], n);
    p.ci = parse_double(f[5], n);
    p.trials = static_cast<std::size_t>(parse_double(f[6], n));
    out.back().points.push_back(p);
  }
  return out;
}

void write_surfaces_csv(const std::vector<PdSurface>& surfaces, const std::filesystem::path& path) {
  write_text(path, surfaces_to_csv(surfaces));
}

std::vector<PdSurface> read_surfaces_csv(const std::filesystem::path& path) {
  return surfaces_from_csv(read_text(path));
}

std::string heatmap_svg(const std::vector<PdSurface>& surfaces) {
  constexpr int cell = 14, margin = 48, gap = 36, title = 20;
  struct Panel {
    std::vector<int> bins;
    std::vector<double> snrs;
  };
  std::vector<Panel> panels;
  int width = margin, height = 0;
  for (const auto& s : surfaces) {
    std::set<int> b;
    std::set<double> r;
    for (const auto& p : s.points) {
      b.insert(p.d);
      r.insert(p.snr_db);
    }
    panels.push_back({{b.begin(), b.end()}, {r.begin(), r.end()}});
    width += static_cast<int>(b.size()) * cell + gap;
    height = std::max(height, static_cast<int>(r.size()) * cell);
  }
  height += title + 2 * margin;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  int x0 = margin;
  for (std::size_t k = 0; k < surfaces.size(); ++k) {
    const auto& s = surfaces[k];
    const auto& pn = panels[k];
    const int rows = static_cast<int>(pn.snrs.size());
    const int y0 = margin + title;
    o << "<text x=\"" << x0 << "\" y=\"" << margin + 8 << "\">" << escape(s.label()) << "</text>\n";
    for (const auto& p : s.points) {
      const int col = static_cast<int>(std::lower_bound(pn.bins.begin(), pn.bins.end(), p.d) - pn.bins.begin());
      const int row = static_cast<int>(std::lower_bound(pn.snrs.begin(), pn.snrs.end(), p.snr_db) - pn.snrs.begin());
      // Highest SNR on top.
      o << "<rect x=\"" << x0 + col * cell << "\" y=\"" << y0 + (rows - 1 - row) * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << colour(p.pd) << "\"><title>snr " << fmt("%g", p.snr_db)
        << " dB, d " << p.d << ": pd " << fmt("%.4f", p.pd) << "</title></rect>\n";
    }
    if (!pn.snrs.empty()) {
      o << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">" << fmt("%g", pn.snrs.back())
        << "</text>\n";
      o << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + rows * cell << "\" text-anchor=\"end\">"
        << fmt("%g", pn.snrs.front()) << "</text>\n";
    }
    o << "<text x=\"" << x0 << "\" y=\"" << y0 + rows * cell + 14 << "\">Doppler bin</text>\n";
    x0 += static_cast<int>(pn.bins.size()) * cell + gap;
  }
  o << "</svg>\n";
  return o.str();
}

std::string curves_svg(const std::vector<PdSurface>& surfaces, int d) {
  constexpr int w = 640, h = 400, ml = 56, mr = 160, mt = 24, mb = 44;
  double lo = 0.0, hi = 1.0;
  bool any = false;
  for (const auto& s : surfaces) {
    for (const auto& p : s.points) {
      if (p.d != d) continue;
      if (!any) lo = hi = p.snr_db;
      lo = std::min(lo, p.snr_db);
      hi = std::max(hi, p.snr_db);
      any = true;
    }
  }
  if (hi == lo) hi = lo + 1.0;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto px = [&](double s) { return ml + (s - lo) / (hi - lo) * pw; };
  auto py = [&](double pd) { return mt + (1.0 - pd) * ph; };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double pd = k / 4.0;
    o << "<text x=\"" << ml - 6 << "\" y=\"" << fmt("%.1f", py(pd) + 4) << "\" text-anchor=\"end\">"
      << fmt("%.2f", pd) << "</text>\n";
  }
  o << "<text x=\"" << ml << "\" y=\"" << h - 12 << "\">" << fmt("%g", lo) << " dB</text>\n";
  o << "<text x=\"" << ml + pw << "\" y=\"" << h - 12 << "\" text-anchor=\"end\">" << fmt("%g", hi)
    << " dB</text>\n";
  o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">SNR, Doppler bin " << d
    << "</text>\n";
  std::size_t c = 0;
  for (const auto& s : surfaces) {
    std::vector<const PdPoint*> pts;
    for (const auto& p : s.points) {
      if (p.d == d) pts.push_back(&p);
    }
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end(), [](const PdPoint* a, const PdPoint* b) { return a->snr_db < b->snr_db; });
    const char* col = palette[c % 10];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      o << (i ? " " : "") << fmt("%.2f", px(pts[i]->snr_db)) << "," << fmt("%.2f", py(pts[i]->pd));
    }
    o << "\"/>\n";
    const double ly = mt + 14.0 * static_cast<double>(c) + 10.0;
    o << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << fmt("%.1f", ly - 4) << "\" x2=\"" << w - mr + 30
      << "\" y2=\"" << fmt("%.1f", ly - 4) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << w - mr + 34 << "\" y=\"" << fmt("%.1f", ly) << "\">" << escape(s.label()) << "</text>\n";
    ++c;
  }
  o << "</svg>\n";
  return o.str();
}

void emit_report(const std::vector<PdSurface>& surfaces, const std::filesystem::path& dir, const std::string& stem) {
  if (surfaces.empty()) throw InvalidArgument("emit_report: no surfaces");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  write_surfaces_csv(surfaces, dir / (stem + ".csv"));
  write_text(dir / (stem + "_heatmaps.svg"), heatmap_svg(surfaces));
  int d = 0;
  bool found = false;
  for (const auto& s : surfaces) {
    for (const auto& p : s.points) {
      if (!found || p.d < d) d = p.d;
      found = true;
    }
  }
  if (found) write_text(dir / (stem + "_d" + std::to_string(d) + ".svg"), curves_svg(surfaces, d));
}

}  // namespace radood
