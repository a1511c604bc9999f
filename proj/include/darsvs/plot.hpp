#pragma once

#include <string>
#include <vector>

namespace darsvs {

// One contour in Hz; zeros are unvoiced gaps.
struct PlotSeries {
  std::string name;
  std::vector<double> hz;
};

// "frame,<name>,..." with one row per frame. Values print with enough digits
// to round-trip a float32 exactly.
std::string contour_csv(const std::vector<PlotSeries>& series);

// Standalone SVG overlaying the series with a legend.
std::string contour_svg(const std::vector<PlotSeries>& series, const std::string& title);

}  // namespace darsvs
