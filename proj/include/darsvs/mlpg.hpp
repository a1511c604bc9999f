#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace darsvs {

// Regression windows: static [1], delta [-0.5, 0, 0.5], delta-delta [1, -2, 1].
// Frames beyond either end replicate the edge frame.
struct DeltaWindows {
  static constexpr std::array<double, 3> delta{-0.5, 0.0, 0.5};
  static constexpr std::array<double, 3> delta2{1.0, -2.0, 1.0};
};

struct Deltas {
  std::vector<double> delta;
  std::vector<double> delta2;
};

Deltas compute_deltas(std::span<const double> x);

// Dense [3T x T] matrix mapping a static trajectory to its stacked
// [static; delta; delta-delta] features.
Eigen::MatrixXd delta_window_matrix(int frames);

// Maximum-likelihood static trajectory c solving (W' P W) c = W' P mu, where P
// holds the inverse variances of the static/delta/delta-delta streams.
// Solved by banded Cholesky in O(T).
std::vector<double> mlpg(std::span<const double> static_mean, std::span<const double> delta_mean,
                         std::span<const double> delta2_mean, const std::array<double, 3>& variances);

}  // namespace darsvs
