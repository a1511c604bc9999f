#pragma once

#include <span>
#include <string>
#include <vector>

#include "darsvs/f0_codec.hpp"
#include "darsvs/postprocess.hpp"

namespace darsvs {

constexpr int kMccDim = 40;
constexpr int kSpecDim = kMccDim + 1;  // MCCs then energy

// Frames voiced in both contours. A note reference counts as voiced where its F0 > 0.
std::vector<int> jointly_voiced(const F0Contour& pred, const F0Contour& ref);

// RMSE in Hz over jointly-voiced frames.
double f0_rmse(const F0Contour& pred, const F0Contour& ref);
// Pearson correlation over jointly-voiced frames.
double f0_corr(const F0Contour& pred, const F0Contour& ref);
// Percentage of frames whose voicing flags disagree.
double vuv_error(const F0Contour& pred, const F0Contour& ref);
// Mean over frames of (10/ln10) * sqrt(2 * sum_i (c_i - c'_i)^2) over the 40
// MCCs of each row-major [T x 41] sequence; energy (column 40) is excluded.
double mcd(std::span<const double> pred, std::span<const double> ref, int frames);
double mcd(std::span<const float> pred, std::span<const float> ref, int frames);

// Treats the note contour as a reference with voicing = note > 0.
F0Contour note_reference(const NoteContour& notes);

// Pooled frame pairs so reports aggregate frame-weighted across utterances.
struct F0Accumulator {
  std::vector<double> pred, ref;

  void add(double p, double r);
  void merge(const F0Accumulator& o);
  double rmse() const;
  double corr() const;
};

struct EvalAccumulator {
  F0Accumulator natural, note;
  long vuv_frames = 0, vuv_mismatch = 0;
  long spec_frames = 0;
  double mcd_sum = 0;

  void add_f0(const F0Contour& pred, const F0Contour& ref, const NoteContour& notes);
  void add_spectral(std::span<const float> pred, std::span<const float> ref, int frames);
  void merge(const EvalAccumulator& o);
};

struct EvalReport {
  double f0_rmse_natural = 0, f0_rmse_note = 0;
  double corr_natural = 0, corr_note = 0;
  double vuv_error = 0;
  double mcd = 0;  // NaN when no spectra were compared
  long n_frames_compared = 0;

  static EvalReport from(const EvalAccumulator& acc);
  std::string to_text() const;
  static std::string csv_header();
  std::string to_csv(const std::string& system) const;
};

}  // namespace darsvs
