#pragma once

#include <vector>

#include "darsvs/f0_codec.hpp"

namespace darsvs {

// Per-frame note F0 in Hz (stair-like), 0 on rests.
using NoteContour = std::vector<double>;

struct VoicedSegment {
  int start = 0;  // inclusive
  int end = 0;    // inclusive
  std::vector<double> values;

  int length() const { return end - start + 1; }
};

constexpr int kDefaultPostprocessWindow = 15;

// Maximal runs of voiced frames in order.
std::vector<VoicedSegment> segment_voiced(const F0Contour& contour);

// Centred moving average of half-width w; the first and last values are
// repeated w times beyond the segment ends.
std::vector<double> moving_average(const std::vector<double>& values, int w);

// Replaces the slow-varying part of each voiced segment with the note contour:
// out = f - moving_average(f) + note. Unvoiced frames and flags are unchanged;
// results are clamped at 0 Hz.
F0Contour postprocess_f0(const F0Contour& contour, const NoteContour& notes, int w = kDefaultPostprocessWindow);

}  // namespace darsvs
