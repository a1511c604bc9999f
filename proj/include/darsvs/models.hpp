#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "darsvs/autograd.hpp"
#include "darsvs/config.hpp"
#include "darsvs/f0_codec.hpp"
#include "darsvs/layers.hpp"
#include "darsvs/metrics.hpp"

namespace darsvs {

// Sinusoidal code: p[2i] = sin(pos / 10000^(2i/d)), p[2i+1] = cos(same).
std::vector<double> positional_code(int pos, int d);

// Context FC stack and bidirectional GRU shared by both DAR models.
template <class Real>
class DarTrunk {
 public:
  DarTrunk() = default;
  DarTrunk(ParameterSet<Real>& ps, const DarTrunkConfig& cfg, int ctx_dim, std::mt19937_64& rng);

  // [T x ctx_dim] -> [T x 2*bigru_units]
  Var<Real> encode(Graph<Real>& g, const Tensor<Real>& ctx) const;
  int out_dim() const { return bigru_.out(); }

 private:
  AffineLayer<Real> fc1_, fc2_;
  BiGruLayer<Real> bigru_;
};

struct F0Generation {
  F0Contour contour;
  QuantizedF0Sequence classes;  // decoded classes, as fed back
};

template <class Real>
class F0Model {
 public:
  F0Model(const F0ModelConfig& cfg, int ctx_dim, std::uint64_t seed);
  F0Model(const F0Model&) = delete;
  F0Model& operator=(const F0Model&) = delete;

  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }
  const F0ModelConfig& config() const { return cfg_; }
  int ctx_dim() const { return ctx_dim_; }
  int padding_class() const { return cfg_.n_classes(); }
  // A dropout rate of 1 severs the feedback link at training and generation alike.
  bool feedback_active() const { return cfg_.trunk.feedback_dropout < 1.0; }

  // Teacher-forced output logits [T x n_classes]. Data dropout is applied when
  // `dropout_rng` is given.
  Var<Real> logits(Graph<Real>& g, const Tensor<Real>& ctx, const QuantizedF0Sequence& targets,
                   std::mt19937_64* dropout_rng) const;
  Var<Real> loss(Graph<Real>& g, const Tensor<Real>& ctx, const QuantizedF0Sequence& targets,
                 std::mt19937_64* dropout_rng) const;
  std::vector<std::vector<double>> posteriors(const Tensor<Real>& ctx, const QuantizedF0Sequence& targets) const;

  // History classes for frame t, oldest first, padded before the sequence start.
  std::vector<int> history(const QuantizedF0Sequence& classes, int t) const;

  F0Generation generate(const Tensor<Real>& ctx) const;

 private:
  Var<Real> feedback(Graph<Real>& g, const std::vector<int>& hist_rows, int frames, std::mt19937_64* rng) const;
  Var<Real> head(Var<Real> h) const;

  F0ModelConfig cfg_;
  int ctx_dim_;
  ParameterSet<Real> params_;
  DarTrunk<Real> trunk_;
  Parameter<Real>* embedding_ = nullptr;  // [n_classes + 1, embed_dim], last row is padding
  GruLayer<Real> unigru_;
  AffineLayer<Real> linear_, out_;
};

// Prenet over K-frame history windows laid out as consecutive row groups.
template <class Real>
class Prenet {
 public:
  Prenet() = default;
  Prenet(ParameterSet<Real>& ps, const PrenetConfig& cfg, int frame_dim, std::mt19937_64& rng);

  // [W*K x frame_dim] windows -> [W x conv_channels], the last position of each window.
  // Training mode enables FC dropout and batch statistics.
  Var<Real> operator()(Var<Real> windows, bool training, std::mt19937_64* rng) const;
  int out_dim() const { return cfg_.conv_channels; }

 private:
  PrenetConfig cfg_;
  AffineLayer<Real> fc1_, fc2_;
  CausalConv1dLayer<Real> conv_;
  BatchNormLayer<Real> bn_;
  std::vector<MultiHeadSelfAttention<Real>> attention_;
  AffineLayer<Real> final_;
  Tensor<Real> pos_codes_;  // [K x d]
  Tensor<Real> mask_;       // [K x K]
};

template <class Real>
class SpectralModel {
 public:
  SpectralModel(const SpectralModelConfig& cfg, int ctx_dim, std::uint64_t seed);
  SpectralModel(const SpectralModel&) = delete;
  SpectralModel& operator=(const SpectralModel&) = delete;

  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }
  const SpectralModelConfig& config() const { return cfg_; }
  int ctx_dim() const { return ctx_dim_; }
  bool feedback_active() const { return cfg_.trunk.feedback_dropout < 1.0; }

  // Teacher-forced predictions [T x kSpecDim] in the normalised target domain.
  // `training` enables both dropouts (needs `rng`) and batch statistics.
  Var<Real> predict(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets, bool training,
                    std::mt19937_64* rng) const;
  Var<Real> loss(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets, bool training,
                 std::mt19937_64* rng) const;

  // Frame indices of the history window for frame t, oldest first; -1 is the padding frame.
  std::vector<int> window(int t) const;

  Tensor<Real> generate(const Tensor<Real>& ctx) const;

 private:
  Var<Real> windows(Graph<Real>& g, const Tensor<Real>& frames, const std::vector<int>& rows) const;
  Var<Real> head(Var<Real> h) const;

  SpectralModelConfig cfg_;
  int ctx_dim_;
  ParameterSet<Real> params_;
  DarTrunk<Real> trunk_;
  Parameter<Real>* pad_frame_ = nullptr;  // [1 x kSpecDim]
  Prenet<Real> prenet_;
  GruLayer<Real> unigru_;
  AffineLayer<Real> linear_, out_;
};

// Output layout of the baseline: [static | delta | delta-delta | vuv], where
// static is 40 MCC, energy and interpolated log-F0.
constexpr int kBaselineStatic = kSpecDim + 1;
constexpr int kBaselineOut = 3 * kBaselineStatic + 1;
constexpr int kBaselineVuv = kBaselineOut - 1;

template <class Real>
class BaselineModel {
 public:
  BaselineModel(const BaselineConfig& cfg, int ctx_dim, std::uint64_t seed);
  BaselineModel(const BaselineModel&) = delete;
  BaselineModel& operator=(const BaselineModel&) = delete;

  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }
  const BaselineConfig& config() const { return cfg_; }
  int ctx_dim() const { return ctx_dim_; }

  Var<Real> predict(Graph<Real>& g, const Tensor<Real>& ctx) const;  // [T x kBaselineOut]
  Var<Real> loss(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets) const;

 private:
  BaselineConfig cfg_;
  int ctx_dim_;
  ParameterSet<Real> params_;
  std::vector<BiGruLayer<Real>> layers_;
  AffineLayer<Real> out_;
};

extern template class DarTrunk<float>;
extern template class DarTrunk<double>;
extern template class F0Model<float>;
extern template class F0Model<double>;
extern template class Prenet<float>;
extern template class Prenet<double>;
extern template class SpectralModel<float>;
extern template class SpectralModel<double>;
extern template class BaselineModel<float>;
extern template class BaselineModel<double>;

}  // namespace darsvs
