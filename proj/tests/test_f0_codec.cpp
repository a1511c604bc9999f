#include <cmath>
#include <random>

#include "darsvs/errors.hpp"
#include "darsvs/f0_codec.hpp"
#include "doctest.h"

using namespace darsvs;

namespace {

// Constants written out rather than read from QuantizerConfig so a changed
// default fails loudly.
constexpr double kMelLow = 106.0;
constexpr double kMelHigh = 831.0;
constexpr int kLevels = 255;
constexpr double kDelta = (kMelHigh - kMelLow) / kLevels;

F0Contour voiced_contour(std::vector<double> hz) { return F0Contour::from_hz(std::move(hz)); }

// Linear scan over the bin edges, independent of the closed-form index.
int brute_force_class(double mel) {
  mel = std::clamp(mel, kMelLow, kMelHigh);
  for (int k = 1; k <= kLevels; ++k)
    if (mel < kMelLow + k * kDelta) return k;
  return kLevels;
}

}  // namespace

TEST_CASE("default quantizer matches the published range and level count") {
  QuantizerConfig q;
  CHECK(q.n_levels == kLevels);
  CHECK(q.mel_low == kMelLow);
  CHECK(q.mel_high == kMelHigh);
  CHECK(q.n_classes() == 256);
  CHECK(q.bin_width() == doctest::Approx(kDelta).epsilon(1e-15));
}

TEST_CASE("hz_to_mel values") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.1768724910584).epsilon(1e-12));
  CHECK_THROWS_AS(hz_to_mel(-1.0), DomainError);
  for (double f : {50.0, 200.0, 600.0}) CHECK(std::abs(mel_to_hz(hz_to_mel(f)) - f) / f < 1e-9);
}

TEST_CASE("mel_to_hz values") {
  CHECK(mel_to_hz(0.0) == 0.0);
  CHECK(mel_to_hz(kMelLow) == doctest::Approx(69.03412809095263).epsilon(1e-12));
  CHECK(mel_to_hz(kMelHigh) == doctest::Approx(763.2805511675007).epsilon(1e-12));
  CHECK_THROWS_AS(mel_to_hz(-0.5), DomainError);
}

TEST_CASE("hz_to_mel is strictly increasing") {
  double prev = -1;
  for (double f = 0; f < 2000; f += 0.37) {
    const double m = hz_to_mel(f);
    CHECK(m > prev);
    prev = m;
  }
}

TEST_CASE("quantize boundaries") {
  QuantizerConfig q;
  auto cls = [&](double mel) { return quantize(voiced_contour({mel_to_hz(mel)}), q)[0]; };
  CHECK(quantize(voiced_contour({0.0}), q)[0] == 0);
  CHECK(cls(kMelLow) == 1);
  CHECK(cls(kMelHigh) == kLevels);
  CHECK(cls(kMelLow + 0.5 * kDelta) == 1);
  CHECK(cls(kMelLow - 40) == 1);   // clamped below
  CHECK(cls(kMelHigh + 90) == kLevels);  // clamped above
}

TEST_CASE("every bin centre lands in its own class") {
  QuantizerConfig q;
  for (int k = 1; k <= kLevels; ++k) {
    const double centre = kMelLow + (k - 0.5) * kDelta;
    CHECK(q.bin_center(k) == doctest::Approx(centre).epsilon(1e-13));
    CHECK(brute_force_class(centre) == k);
    CHECK(mel_to_class(centre, q) == k);
  }
}

TEST_CASE("quantize agrees with a brute-force bin scan on random F0") {
  QuantizerConfig q;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> hz(30.0, 1000.0);
  for (int i = 0; i < 2000; ++i) {
    const double f = hz(rng);
    CHECK(quantize(voiced_contour({f}), q)[0] == brute_force_class(hz_to_mel(f)));
  }
}

TEST_CASE("quantize is monotone") {
  QuantizerConfig q;
  std::vector<double> hz;
  for (double f = 40; f < 900; f += 0.5) hz.push_back(f);
  const auto c = quantize(voiced_contour(hz), q);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] >= c[i - 1]);
}

TEST_CASE("one-hot round trip stays within half a bin and keeps voicing") {
  QuantizerConfig q;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> hz(69.1, 763.2);
  std::bernoulli_distribution voiced(0.7);
  std::vector<double> f(1000);
  for (auto& v : f) v = voiced(rng) ? hz(rng) : 0.0;
  const auto contour = voiced_contour(f);
  const auto back = dequantize_classes(quantize(contour, q), q);
  REQUIRE(back.size() == contour.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    CHECK(back.voiced[t] == contour.voiced[t]);
    if (contour.voiced[t]) CHECK(std::abs(hz_to_mel(back.f0_hz[t]) - hz_to_mel(f[t])) <= kDelta / 2 + 1e-9);
  }
}

TEST_CASE("dequantize_mean special cases") {
  QuantizerConfig q;
  std::vector<double> p(256, 0.0);
  p[0] = 1.0;
  auto d = dequantize_mean(p, q);
  CHECK_FALSE(d.voiced);
  CHECK(d.f0_hz == 0.0);
  CHECK(d.class_index == 0);

  for (int k : {1, 17, 128, 255}) {
    std::fill(p.begin(), p.end(), 0.0);
    p[static_cast<std::size_t>(k)] = 1.0;
    d = dequantize_mean(p, q);
    CHECK(d.voiced);
    CHECK(d.class_index == k);
    CHECK(d.f0_hz == doctest::Approx(mel_to_hz(kMelLow + (k - 0.5) * kDelta)).epsilon(1e-12));
  }

  std::fill(p.begin(), p.end(), 1.0 / 255);
  p[0] = 0;
  d = dequantize_mean(p, q);
  CHECK(d.mel == doctest::Approx(468.5).epsilon(1e-12));
}

TEST_CASE("dequantize_mean voicing threshold and renormalisation") {
  QuantizerConfig q;
  std::vector<double> p(256, 0.0);
  p[0] = 0.5;
  p[10] = 0.5;
  CHECK_FALSE(dequantize_mean(p, q).voiced);  // ties go to unvoiced
  p[0] = 0.4;
  p[10] = 0.3;
  p[20] = 0.3;
  const auto d = dequantize_mean(p, q);
  CHECK(d.voiced);
  // Voiced mass renormalised: equal weights on classes 10 and 20.
  CHECK(d.mel == doctest::Approx(kMelLow + 14.5 * kDelta).epsilon(1e-12));
  CHECK(d.class_index == 15);
}

TEST_CASE("dequantize_mean rejects unnormalised posteriors") {
  QuantizerConfig q;
  std::vector<double> p(256, 0.0);
  p[3] = 0.9;
  CHECK_THROWS_AS(dequantize_mean(p, q), DomainError);
  std::vector<double> short_p(10, 0.1);
  CHECK_THROWS(dequantize_mean(short_p, q));
}

TEST_CASE("contour invariants are enforced") {
  F0Contour c;
  c.f0_hz = {100.0, 0.0};
  c.voiced = {true, true};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.voiced = {false, false};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.voiced = {true, false};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("quantizer config validation") {
  QuantizerConfig q;
  q.n_levels = 1;
  CHECK_THROWS_AS(q.validate(), ConfigError);
  q = {};
  q.mel_high = q.mel_low;
  CHECK_THROWS_AS(q.validate(), ConfigError);
}
