#include "darsvs/postprocess.hpp"

#include <algorithm>
#include <string>

#include "darsvs/errors.hpp"

namespace darsvs {

std::vector<VoicedSegment> segment_voiced(const F0Contour& contour) {
  std::vector<VoicedSegment> segs;
  const int T = static_cast<int>(contour.size());
  int t = 0;
  while (t < T) {
    if (!contour.voiced[static_cast<std::size_t>(t)]) {
      ++t;
      continue;
    }
    VoicedSegment s;
    s.start = t;
    while (t < T && contour.voiced[static_cast<std::size_t>(t)]) s.values.push_back(contour.f0_hz[static_cast<std::size_t>(t++)]);
    s.end = t - 1;
    segs.push_back(std::move(s));
  }
  return segs;
}

std::vector<double> moving_average(const std::vector<double>& values, int w) {
  if (w < 0) throw DomainError("moving_average: negative half-width");
  const int n = static_cast<int>(values.size());
  std::vector<double> out(values.size());
  if (n == 0) return out;
  auto padded = [&](int i) { return values[static_cast<std::size_t>(std::clamp(i, 0, n - 1))]; };
  for (int t = 0; t < n; ++t) {
    double sum = 0;
    for (int i = t - w; i <= t + w; ++i) sum += padded(i);
    out[static_cast<std::size_t>(t)] = sum / (2 * w + 1);
  }
  return out;
}

namespace {

// Note value for frame t; voiced frames over a rest take the nearest
// nonzero note (earlier frame wins ties). Returns 0 when no note exists.
double note_at(const NoteContour& notes, int t) {
  if (notes[static_cast<std::size_t>(t)] > 0) return notes[static_cast<std::size_t>(t)];
  const int n = static_cast<int>(notes.size());
  for (int d = 1; d < n; ++d) {
    if (t - d >= 0 && notes[static_cast<std::size_t>(t - d)] > 0) return notes[static_cast<std::size_t>(t - d)];
    if (t + d < n && notes[static_cast<std::size_t>(t + d)] > 0) return notes[static_cast<std::size_t>(t + d)];
  }
  return 0;
}

}  // namespace

F0Contour postprocess_f0(const F0Contour& contour, const NoteContour& notes, int w) {
  if (contour.size() != notes.size() || contour.voiced.size() != contour.f0_hz.size())
    throw DimensionError("postprocess: contour has " + std::to_string(contour.size()) + " frames, notes have " +
                         std::to_string(notes.size()));
  F0Contour out = contour;
  for (const auto& seg : segment_voiced(contour)) {
    const auto smooth = moving_average(seg.values, w);
    for (int i = 0; i < seg.length(); ++i) {
      const int t = seg.start + i;
      const double note = note_at(notes, t);
      const double f = seg.values[static_cast<std::size_t>(i)];
      // without any note there is no melody component to substitute
      const double v = note > 0 ? f - smooth[static_cast<std::size_t>(i)] + note : f;
      out.f0_hz[static_cast<std::size_t>(t)] = std::max(v, 0.0);
    }
  }
  return out;
}

}  // namespace darsvs
