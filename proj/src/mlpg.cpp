#include "darsvs/mlpg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "darsvs/errors.hpp"

namespace darsvs {

namespace {

struct Tap {
  int col;
  double coef;
};

// Nonzero coefficients of one window row at frame t, with edge replication
// folded in (coefficients landing on the same frame are summed).
std::vector<Tap> window_row(const std::array<double, 3>& w, int t, int frames) {
  std::vector<Tap> taps;
  for (int j = -1; j <= 1; ++j) {
    const double c = w[static_cast<std::size_t>(j + 1)];
    if (c == 0.0) continue;
    const int col = std::clamp(t + j, 0, frames - 1);
    auto it = std::find_if(taps.begin(), taps.end(), [col](const Tap& tp) { return tp.col == col; });
    if (it != taps.end())
      it->coef += c;
    else
      taps.push_back({col, c});
  }
  std::erase_if(taps, [](const Tap& tp) { return tp.coef == 0.0; });
  return taps;
}

}  // namespace

Deltas compute_deltas(std::span<const double> x) {
  const int T = static_cast<int>(x.size());
  Deltas d{std::vector<double>(x.size()), std::vector<double>(x.size())};
  auto at = [&](int t) { return x[static_cast<std::size_t>(std::clamp(t, 0, T - 1))]; };
  for (int t = 0; t < T; ++t) {
    double a = 0, b = 0;
    for (int j = -1; j <= 1; ++j) {
      a += DeltaWindows::delta[static_cast<std::size_t>(j + 1)] * at(t + j);
      b += DeltaWindows::delta2[static_cast<std::size_t>(j + 1)] * at(t + j);
    }
    d.delta[static_cast<std::size_t>(t)] = a;
    d.delta2[static_cast<std::size_t>(t)] = b;
  }
  return d;
}

Eigen::MatrixXd delta_window_matrix(int frames) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3 * frames, frames);
  for (int t = 0; t < frames; ++t) {
    w(t, t) = 1.0;
    for (const auto& tp : window_row(DeltaWindows::delta, t, frames)) w(frames + t, tp.col) += tp.coef;
    for (const auto& tp : window_row(DeltaWindows::delta2, t, frames)) w(2 * frames + t, tp.col) += tp.coef;
  }
  return w;
}

std::vector<double> mlpg(std::span<const double> static_mean, std::span<const double> delta_mean,
                         std::span<const double> delta2_mean, const std::array<double, 3>& variances) {
  const int T = static_cast<int>(static_mean.size());
  if (delta_mean.size() != static_mean.size() || delta2_mean.size() != static_mean.size())
    throw DimensionError("mlpg: stream lengths differ");
  for (double v : variances)
    if (!(v > 0)) throw DomainError("mlpg: variances must be positive");
  if (T == 0) return {};

  constexpr int kBand = 2;
  // lower band storage: a[t][d] = A(t, t - d)
  std::vector<std::array<double, kBand + 1>> a(static_cast<std::size_t>(T), {0.0, 0.0, 0.0});
  std::vector<double> rhs(static_cast<std::size_t>(T), 0.0);
  auto accumulate = [&](const std::vector<Tap>& taps, double precision, double mean) {
    for (const auto& ti : taps) {
      rhs[static_cast<std::size_t>(ti.col)] += ti.coef * precision * mean;
      for (const auto& tj : taps)
        if (tj.col <= ti.col) a[static_cast<std::size_t>(ti.col)][static_cast<std::size_t>(ti.col - tj.col)] +=
            ti.coef * tj.coef * precision;
    }
  };
  for (int t = 0; t < T; ++t) {
    const auto st = static_cast<std::size_t>(t);
    accumulate({{t, 1.0}}, 1.0 / variances[0], static_mean[st]);
    accumulate(window_row(DeltaWindows::delta, t, T), 1.0 / variances[1], delta_mean[st]);
    accumulate(window_row(DeltaWindows::delta2, t, T), 1.0 / variances[2], delta2_mean[st]);
  }

  // banded Cholesky A = L L'
  std::vector<std::array<double, kBand + 1>> l(static_cast<std::size_t>(T), {0.0, 0.0, 0.0});
  auto L = [&](int i, int j) -> double& { return l[static_cast<std::size_t>(i)][static_cast<std::size_t>(i - j)]; };
  for (int i = 0; i < T; ++i) {
    for (int j = std::max(0, i - kBand); j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(i - j)];
      for (int k = std::max(0, i - kBand); k < j; ++k) s -= L(i, k) * L(j, k);
      if (i == j) {
        if (!(s > 0)) throw std::logic_error("mlpg: system is not positive definite at frame " + std::to_string(i));
        L(i, i) = std::sqrt(s);
      } else {
        L(i, j) = s / L(j, j);
      }
    }
  }
  std::vector<double> y(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    double s = rhs[static_cast<std::size_t>(i)];
    for (int k = std::max(0, i - kBand); k < i; ++k) s -= L(i, k) * y[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(i)] = s / L(i, i);
  }
  std::vector<double> c(static_cast<std::size_t>(T));
  for (int i = T - 1; i >= 0; --i) {
    double s = y[static_cast<std::size_t>(i)];
    for (int k = i + 1; k <= std::min(T - 1, i + kBand); ++k) s -= L(k, i) * c[static_cast<std::size_t>(k)];
    c[static_cast<std::size_t>(i)] = s / L(i, i);
  }
  return c;
}

}  // namespace darsvs
