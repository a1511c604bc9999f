#include "darsvs/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "darsvs/errors.hpp"

namespace darsvs {

namespace {

void require_same_length(const F0Contour& a, const F0Contour& b, const char* what) {
  if (a.size() != b.size() || a.voiced.size() != a.size() || b.voiced.size() != b.size())
    throw DimensionError(std::string(what) + ": contour lengths differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
}

double pearson(const std::vector<double>& p, const std::vector<double>& r) {
  if (p.size() < 2) throw MetricError("correlation needs at least 2 jointly-voiced frames");
  const double n = static_cast<double>(p.size());
  double mp = 0, mr = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p[i];
    mr += r[i];
  }
  mp /= n;
  mr /= n;
  double spp = 0, srr = 0, spr = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spp += (p[i] - mp) * (p[i] - mp);
    srr += (r[i] - mr) * (r[i] - mr);
    spr += (p[i] - mp) * (r[i] - mr);
  }
  if (spp <= 0 || srr <= 0) throw MetricError("correlation undefined for a constant contour");
  return spr / std::sqrt(spp * srr);
}

double rms(const std::vector<double>& p, const std::vector<double>& r) {
  if (p.empty()) throw MetricError("F0 RMSE undefined: no jointly-voiced frames");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - r[i]) * (p[i] - r[i]);
  return std::sqrt(s / static_cast<double>(p.size()));
}

template <class T>
double mcd_impl(std::span<const T> pred, std::span<const T> ref, int frames) {
  if (frames < 0 || pred.size() != static_cast<std::size_t>(frames) * kSpecDim || pred.size() != ref.size())
    throw DimensionError("mcd: sequences must both be [" + std::to_string(frames) + " x " + std::to_string(kSpecDim) +
                         "]");
  if (frames == 0) throw MetricError("mcd undefined for empty sequences");
  const double k = 10.0 / std::numbers::ln10;
  double total = 0;
  for (int t = 0; t < frames; ++t) {
    double s = 0;
    for (int i = 0; i < kMccDim; ++i) {
      const double d = static_cast<double>(pred[static_cast<std::size_t>(t) * kSpecDim + i]) -
                       static_cast<double>(ref[static_cast<std::size_t>(t) * kSpecDim + i]);
      s += d * d;
    }
    total += k * std::sqrt(2.0 * s);
  }
  return total / frames;
}

}  // namespace

std::vector<int> jointly_voiced(const F0Contour& pred, const F0Contour& ref) {
  require_same_length(pred, ref, "jointly_voiced");
  std::vector<int> idx;
  for (std::size_t t = 0; t < pred.size(); ++t)
    if (pred.voiced[t] && ref.voiced[t]) idx.push_back(static_cast<int>(t));
  return idx;
}

double f0_rmse(const F0Contour& pred, const F0Contour& ref) {
  F0Accumulator acc;
  for (int t : jointly_voiced(pred, ref)) acc.add(pred.f0_hz[static_cast<std::size_t>(t)], ref.f0_hz[static_cast<std::size_t>(t)]);
  return acc.rmse();
}

double f0_corr(const F0Contour& pred, const F0Contour& ref) {
  F0Accumulator acc;
  for (int t : jointly_voiced(pred, ref)) acc.add(pred.f0_hz[static_cast<std::size_t>(t)], ref.f0_hz[static_cast<std::size_t>(t)]);
  return acc.corr();
}

double vuv_error(const F0Contour& pred, const F0Contour& ref) {
  require_same_length(pred, ref, "vuv_error");
  if (pred.size() == 0) throw MetricError("V/UV error undefined for empty contours");
  long bad = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) bad += pred.voiced[t] != ref.voiced[t];
  return 100.0 * static_cast<double>(bad) / static_cast<double>(pred.size());
}

double mcd(std::span<const double> pred, std::span<const double> ref, int frames) {
  return mcd_impl(pred, ref, frames);
}

double mcd(std::span<const float> pred, std::span<const float> ref, int frames) {
  return mcd_impl(pred, ref, frames);
}

F0Contour note_reference(const NoteContour& notes) { return F0Contour::from_hz(notes); }

void F0Accumulator::add(double p, double r) {
  pred.push_back(p);
  ref.push_back(r);
}

void F0Accumulator::merge(const F0Accumulator& o) {
  pred.insert(pred.end(), o.pred.begin(), o.pred.end());
  ref.insert(ref.end(), o.ref.begin(), o.ref.end());
}

double F0Accumulator::rmse() const { return rms(pred, ref); }
double F0Accumulator::corr() const { return pearson(pred, ref); }

void EvalAccumulator::add_f0(const F0Contour& pred, const F0Contour& ref, const NoteContour& notes) {
  require_same_length(pred, ref, "evaluate");
  if (notes.size() != pred.size()) throw DimensionError("evaluate: note contour length differs from prediction");
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred.voiced[t] && ref.voiced[t]) natural.add(pred.f0_hz[t], ref.f0_hz[t]);
    if (pred.voiced[t] && notes[t] > 0) note.add(pred.f0_hz[t], notes[t]);
    vuv_mismatch += pred.voiced[t] != ref.voiced[t];
  }
  vuv_frames += static_cast<long>(pred.size());
}

void EvalAccumulator::add_spectral(std::span<const float> pred, std::span<const float> ref, int frames) {
  mcd_sum += mcd(pred, ref, frames) * frames;
  spec_frames += frames;
}

void EvalAccumulator::merge(const EvalAccumulator& o) {
  natural.merge(o.natural);
  note.merge(o.note);
  vuv_frames += o.vuv_frames;
  vuv_mismatch += o.vuv_mismatch;
  spec_frames += o.spec_frames;
  mcd_sum += o.mcd_sum;
}

EvalReport EvalReport::from(const EvalAccumulator& acc) {
  EvalReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.f0_rmse_natural = acc.natural.pred.empty() ? nan : acc.natural.rmse();
  r.f0_rmse_note = acc.note.pred.empty() ? nan : acc.note.rmse();
  // Undefined correlations (too few frames, flat contours) report as NaN.
  auto corr = [&](const F0Accumulator& a) {
    try {
      return a.corr();
    } catch (const MetricError&) {
      return nan;
    }
  };
  r.corr_natural = corr(acc.natural);
  r.corr_note = corr(acc.note);
  r.vuv_error = acc.vuv_frames ? 100.0 * static_cast<double>(acc.vuv_mismatch) / static_cast<double>(acc.vuv_frames) : nan;
  r.mcd = acc.spec_frames ? acc.mcd_sum / static_cast<double>(acc.spec_frames) : nan;
  r.n_frames_compared = static_cast<long>(acc.natural.pred.size());
  return r;
}

std::string EvalReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# aggregation: frame-weighted over all utterances\n"
                "f0_rmse_natural_hz = %.4f\n"
                "f0_rmse_note_hz = %.4f\n"
                "corr_natural = %.4f\n"
                "corr_note = %.4f\n"
                "vuv_error_percent = %.4f\n"
                "mcd_db = %.4f\n"
                "n_frames_compared = %ld\n",
                f0_rmse_natural, f0_rmse_note, corr_natural, corr_note, vuv_error, mcd, n_frames_compared);
  return buf;
}

std::string EvalReport::csv_header() {
  return "system,f0_rmse_natural,f0_rmse_note,corr_natural,corr_note,vuv_error,mcd,n_frames";
}

std::string EvalReport::to_csv(const std::string& system) const {
  char buf[384];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%ld", system.c_str(), f0_rmse_natural, f0_rmse_note,
                corr_natural, corr_note, vuv_error, mcd, n_frames_compared);
  return buf;
}

}  // namespace darsvs
