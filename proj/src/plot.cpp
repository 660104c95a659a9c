#include "rmbl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rmbl/replay.hpp"

namespace rmbl::plot {

namespace {
constexpr int kW = 860, kH = 420, kPad = 50;

const char* series_color(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return colors[i % 5];
}

// channel palette: drivable, route, static, dynamic, ego, stop line
const char* channel_color(int ch) {
  static const char* colors[] = {"#c8c8c8", "#5b8ff9", "#d62728", "#ff7f0e", "#2ca02c", "#9467bd"};
  return colors[ch % 6];
}
}  // namespace

std::string line_chart(const std::string& title, const std::vector<Series>& series,
                       int ema_window) {
  std::size_t n = 0;
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    hi = lo + 1.0;
  }
  const double span = hi - lo;
  lo -= span * 0.05;
  hi += span * 0.05;

  const auto x_of = [&](std::size_t i) {
    return kPad + (kW - 2 * kPad) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
  };
  const auto y_of = [&](double v) { return kH - kPad - (kH - 2 * kPad) * (v - lo) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\""
      << kH - kPad << "\" stroke=\"#444\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\""
      << kH - kPad << "\" stroke=\"#444\"/>\n";
  out << "<text x=\"8\" y=\"" << y_of(lo + span * 0.05) << "\" font-size=\"11\">"
      << lo + span * 0.05 << "</text>\n";
  out << "<text x=\"8\" y=\"" << y_of(hi - span * 0.05) << "\" font-size=\"11\">"
      << hi - span * 0.05 << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.values.empty()) continue;
    // raw values, shaded
    out << "<polyline id=\"raw-" << s.name << "\" fill=\"none\" stroke=\"" << series_color(si)
        << "\" stroke-opacity=\"0.25\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << x_of(i) << "," << y_of(s.values[i]) << " ";
    }
    out << "\"/>\n";
    // EMA overlay
    Ema ema(ema_window);
    out << "<polyline id=\"ema-" << s.name << "\" fill=\"none\" stroke=\"" << series_color(si)
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      ema.add(s.values[i]);
      out << x_of(i) << "," << y_of(ema.value()) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - kPad + 4 << "\" y=\"" << kPad + 16 * (si + 1)
        << "\" font-size=\"11\" fill=\"" << series_color(si) << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string grid_strip(const std::vector<std::vector<double>>& grids, int channels, int height,
                       int width, const std::vector<std::string>& labels) {
  const int cell = 6;
  const int tile_w = width * cell + 8;
  const int tile_h = height * cell + 22;
  const int total_w = static_cast<int>(grids.size()) * tile_w + 8;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\""
      << tile_h + 8 << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#111\"/>\n";
  const int hw = height * width;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    const int ox = static_cast<int>(g) * tile_w + 8;
    const int oy = 20;
    if (g < labels.size()) {
      out << "<text x=\"" << ox << "\" y=\"14\" font-size=\"11\" fill=\"#eee\">" << labels[g]
          << "</text>\n";
    }
    const auto& grid = grids[g];
    for (int ch = 0; ch < channels; ++ch) {
      for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
          const double v = grid[static_cast<std::size_t>(ch * hw + r * width + c)];
          if (v < 0.25) continue;
          out << "<rect x=\"" << ox + c * cell << "\" y=\"" << oy + r * cell << "\" width=\""
              << cell << "\" height=\"" << cell << "\" fill=\"" << channel_color(ch)
              << "\" fill-opacity=\"" << std::min(1.0, v) << "\"/>\n";
        }
      }
    }
  }
  out << "</svg>\n";
  return out.str();
}

double grid_iou(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("grid_iou: size mismatch");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool pa = a[i] > 0.5, pb = b[i] > 0.5;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("plot: cannot write '" + path + "'");
  }
  out << content;
}

}  // namespace rmbl::plot
