#pragma once

#include <span>
#include <vector>

namespace darsvs {

// Per-frame F0 in Hz with voicing flags. Unvoiced frames carry 0 Hz.
struct F0Contour {
  std::vector<double> f0_hz;
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }

  // Voicing inferred from f0 > 0.
  static F0Contour from_hz(std::vector<double> hz);
  // Throws DomainError when the voicing/F0 invariants are violated.
  void validate() const;
};

// Class 0 is unvoiced; classes 1..n_levels are uniform-width mel bins.
using QuantizedF0Sequence = std::vector<int>;

struct QuantizerConfig {
  int n_levels = 255;
  double mel_low = 106.0;
  double mel_high = 831.0;

  int n_classes() const { return n_levels + 1; }
  double bin_width() const { return (mel_high - mel_low) / n_levels; }
  // Centre of voiced class k in mel, k in [1, n_levels].
  double bin_center(int k) const { return mel_low + (k - 0.5) * bin_width(); }
  void validate() const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Voiced class for a mel value, clamped into [mel_low, mel_high].
int mel_to_class(double mel, const QuantizerConfig& cfg);
QuantizedF0Sequence quantize(const F0Contour& contour, const QuantizerConfig& cfg);

struct DecodedF0 {
  bool voiced = false;
  double f0_hz = 0.0;
  double mel = 0.0;
  int class_index = 0;  // class whose bin contains the decoded mel, 0 if unvoiced
};

// Mean-based decoding: unvoiced when posterior[0] >= 0.5, otherwise the
// expected bin-centre mel under the posterior renormalised over voiced classes.
DecodedF0 dequantize_mean(std::span<const double> posterior, const QuantizerConfig& cfg);

// One-hot decoding of a class sequence back to a contour at bin centres.
F0Contour dequantize_classes(const QuantizedF0Sequence& classes, const QuantizerConfig& cfg);

}  // namespace darsvs
