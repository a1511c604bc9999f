#include "darsvs/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "darsvs/errors.hpp"

namespace darsvs {

namespace {

constexpr const char* kPalette[] = {"#000000", "#999999", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};

std::size_t common_length(const std::vector<PlotSeries>& series) {
  if (series.empty()) throw DataError("plot: no series given");
  const std::size_t n = series.front().hz.size();
  for (const auto& s : series)
    if (s.hz.size() != n) throw DimensionError("plot: series '" + s.name + "' has a different frame count");
  return n;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string contour_csv(const std::vector<PlotSeries>& series) {
  const std::size_t n = common_length(series);
  std::string out = "frame";
  for (const auto& s : series) out += "," + s.name;
  out += "\n";
  char buf[64];
  for (std::size_t t = 0; t < n; ++t) {
    out += std::to_string(t);
    for (const auto& s : series) {
      std::snprintf(buf, sizeof buf, ",%.9g", s.hz[t]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string contour_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  const std::size_t n = common_length(series);
  double lo = std::numeric_limits<double>::max(), hi = 0;
  for (const auto& s : series)
    for (double v : s.hz)
      if (v > 0) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (hi <= 0) lo = 0, hi = 1;
  if (hi - lo < 1) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double W = 900, H = 420, left = 60, right = 160, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto x = [&](std::size_t t) { return left + (n > 1 ? pw * static_cast<double>(t) / static_cast<double>(n - 1) : 0); };
  auto y = [&](double v) { return top + ph * (1 - (v - lo) / (hi - lo)); };

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                W, H);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"24\" font-size=\"15\">", left);
  out += buf + escape(title) + "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n", left,
                top, pw, ph);
  out += buf;
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.0f</text>\n", left - 6, y(v) + 4,
                  v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">frame (5 ms)</text>\n",
                left + pw / 2, H - 12);
  out += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"14\" y=\"%.1f\" transform=\"rotate(-90 14 %.1f)\">F0 (Hz)</text>\n",
                top + ph / 2, top + ph / 2);
  out += buf;

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kPalette[k % std::size(kPalette)];
    const auto& s = series[k];
    // A new polyline starts after every unvoiced gap.
    std::string points;
    auto flush = [&] {
      if (points.empty()) return;
      out += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"";
      out += colour;
      out += "\" points=\"" + points + "\"/>\n";
      points.clear();
    };
    for (std::size_t t = 0; t < n; ++t) {
      if (s.hz[t] <= 0) {
        flush();
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(t), y(s.hz[t]));
      points += buf;
    }
    flush();
    const double ly = top + 16 + 18 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">",
                  W - right + 12, ly, W - right + 36, ly, colour, W - right + 42, ly + 4);
    out += buf + escape(s.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace darsvs
