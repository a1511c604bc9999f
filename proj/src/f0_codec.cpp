#include "darsvs/f0_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "darsvs/errors.hpp"

namespace darsvs {

F0Contour F0Contour::from_hz(std::vector<double> hz) {
  F0Contour c;
  c.voiced.resize(hz.size());
  for (std::size_t t = 0; t < hz.size(); ++t) c.voiced[t] = hz[t] > 0;
  c.f0_hz = std::move(hz);
  return c;
}

void F0Contour::validate() const {
  if (f0_hz.size() != voiced.size()) throw DimensionError("F0 contour: f0 and voicing lengths differ");
  for (std::size_t t = 0; t < f0_hz.size(); ++t) {
    if (voiced[t] ? !(f0_hz[t] > 0) : f0_hz[t] != 0)
      throw DomainError("F0 contour: frame " + std::to_string(t) + " violates the voicing invariant");
  }
}

void QuantizerConfig::validate() const {
  if (n_levels < 2) throw ConfigError("quantizer: n_levels must be >= 2");
  if (!(mel_low < mel_high)) throw ConfigError("quantizer: mel_low must be below mel_high");
  if (mel_low < 0) throw ConfigError("quantizer: mel_low must be non-negative");
}

double hz_to_mel(double hz) {
  if (!(hz >= 0)) throw DomainError("hz_to_mel: negative frequency");
  return 1127.0 * std::log1p(hz / 700.0);
}

double mel_to_hz(double mel) {
  if (!(mel >= 0)) throw DomainError("mel_to_hz: negative mel value");
  return 700.0 * std::expm1(mel / 1127.0);
}

int mel_to_class(double mel, const QuantizerConfig& cfg) {
  const double m = std::clamp(mel, cfg.mel_low, cfg.mel_high);
  const int k = 1 + static_cast<int>(std::floor((m - cfg.mel_low) / cfg.bin_width()));
  return std::min(k, cfg.n_levels);
}

QuantizedF0Sequence quantize(const F0Contour& contour, const QuantizerConfig& cfg) {
  QuantizedF0Sequence out(contour.size(), 0);
  for (std::size_t t = 0; t < contour.size(); ++t)
    if (contour.voiced[t] && contour.f0_hz[t] > 0) out[t] = mel_to_class(hz_to_mel(contour.f0_hz[t]), cfg);
  return out;
}

DecodedF0 dequantize_mean(std::span<const double> posterior, const QuantizerConfig& cfg) {
  if (static_cast<int>(posterior.size()) != cfg.n_classes())
    throw DimensionError("dequantize_mean: posterior has " + std::to_string(posterior.size()) + " entries, expected " +
                         std::to_string(cfg.n_classes()));
  double total = 0;
  for (double p : posterior) {
    if (!(p >= 0)) throw DomainError("dequantize_mean: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("dequantize_mean: posterior does not sum to 1");
  DecodedF0 out;
  if (posterior[0] >= 0.5) return out;
  double mass = 0, mel = 0;
  for (int k = 1; k < cfg.n_classes(); ++k) {
    mass += posterior[static_cast<std::size_t>(k)];
    mel += posterior[static_cast<std::size_t>(k)] * cfg.bin_center(k);
  }
  mel /= mass;
  out.voiced = true;
  out.mel = mel;
  out.f0_hz = mel_to_hz(mel);
  out.class_index = mel_to_class(mel, cfg);
  return out;
}

F0Contour dequantize_classes(const QuantizedF0Sequence& classes, const QuantizerConfig& cfg) {
  F0Contour c;
  c.f0_hz.resize(classes.size());
  c.voiced.resize(classes.size());
  for (std::size_t t = 0; t < classes.size(); ++t) {
    const int k = classes[t];
    if (k < 0 || k > cfg.n_levels) throw DomainError("dequantize: class " + std::to_string(k) + " out of range");
    if (k == 0) continue;
    c.voiced[t] = true;
    c.f0_hz[t] = mel_to_hz(cfg.bin_center(k));
  }
  return c;
}

}  // namespace darsvs
