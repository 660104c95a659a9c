#pragma once

#include <string>
#include <vector>

namespace rmbl::plot {

struct Series {
  std::string name;
  std::vector<double> values;
};

// Line chart with the raw values drawn as a shaded band and an EMA overlay
// per series. Returns a standalone SVG document.
std::string line_chart(const std::string& title, const std::vector<Series>& series,
                       int ema_window);

// Horizontal strip of multi-channel BEV grids (values in [0,1]); one tile per
// grid, channels blended by fixed colors.
std::string grid_strip(const std::vector<std::vector<double>>& grids, int channels, int height,
                       int width, const std::vector<std::string>& labels = {});

// Intersection-over-union of two multi-channel occupancy grids thresholded at
// 0.5. An empty union counts as a perfect match.
double grid_iou(const std::vector<double>& a, const std::vector<double>& b);

void write_file(const std::string& path, const std::string& content);

}  // namespace rmbl::plot
