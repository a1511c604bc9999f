#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "darsvs/adam.hpp"
#include "darsvs/config.hpp"
#include "darsvs/corpus.hpp"
#include "darsvs/models.hpp"

namespace darsvs {

enum class ModelKind { dar_f0, dar_spectral, baseline };

const char* kind_name(ModelKind k);
ModelKind parse_kind(const std::string& s);  // ConfigError on unknown names

Tensor<float> context_tensor(const Utterance& u);

struct F0Sample {
  std::string id;
  Tensor<float> ctx;
  QuantizedF0Sequence classes;
  int frames() const { return ctx.rows(); }
};

struct SpectralSample {
  std::string id;
  Tensor<float> ctx;
  Tensor<float> target;  // z-scored [T x kSpecDim]
  int frames() const { return ctx.rows(); }
};

struct BaselineSample {
  std::string id;
  Tensor<float> ctx;
  Tensor<float> target;  // [T x kBaselineOut], first 126 columns z-scored, vuv raw
  int frames() const { return ctx.rows(); }
};

std::vector<F0Sample> make_f0_samples(const std::vector<const Utterance*>& utts, const QuantizerConfig& q);
std::vector<SpectralSample> make_spectral_samples(const std::vector<const Utterance*>& utts, const NormStats& norm);

// Log-Hz F0 interpolated linearly through unvoiced frames; edges hold the
// nearest voiced value. Contours without voiced frames use log(kFallbackF0).
constexpr double kFallbackF0 = 200.0;
std::vector<double> interpolate_log_f0(const F0Contour& c);

// Raw baseline targets [T x kBaselineOut].
std::vector<float> baseline_features(const Utterance& u);
NormStats baseline_norm_stats(const std::vector<const Utterance*>& utts);  // first 126 columns
std::vector<BaselineSample> make_baseline_samples(const std::vector<const Utterance*>& utts, const NormStats& norm);

// Per-utterance losses (mean over frames) in evaluation mode.
double evaluation_loss(const F0Model<float>& m, const F0Sample& s);
double evaluation_loss(const SpectralModel<float>& m, const SpectralSample& s);
double evaluation_loss(const BaselineModel<float>& m, const BaselineSample& s);

struct EpochRecord {
  int epoch = 0;  // 0 evaluates the initial parameters without training
  double train_loss = 0;
  double valid_loss = 0;
  double learning_rate = 0;
  long steps = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_valid = 0;
  AdamState best_optimizer;
};

struct TrainOptions {
  TrainConfig config;
  std::uint64_t seed = 0;
  int start_epoch = 0;                 // > 0 when resuming
  const AdamState* resume = nullptr;   // optimizer state to continue from
  double resume_best_valid = 0;        // best loss recorded before resuming
  std::function<void(const EpochRecord&)> on_epoch;
};

// Per-utterance Adam steps with a seeded shuffle per epoch. On return the
// model holds the best-validation parameters.
TrainResult train(F0Model<float>& m, const std::vector<F0Sample>& train, const std::vector<F0Sample>& valid,
                  const TrainOptions& opt);
TrainResult train(SpectralModel<float>& m, const std::vector<SpectralSample>& train,
                  const std::vector<SpectralSample>& valid, const TrainOptions& opt);
TrainResult train(BaselineModel<float>& m, const std::vector<BaselineSample>& train,
                  const std::vector<BaselineSample>& valid, const TrainOptions& opt);

// Frame-weighted mean loss over a sample set.
template <class Model, class Sample>
double mean_loss(const Model& m, const std::vector<Sample>& samples) {
  double total = 0;
  long frames = 0;
  for (const auto& s : samples) {
    total += evaluation_loss(m, s) * s.frames();
    frames += s.frames();
  }
  return frames ? total / static_cast<double>(frames) : 0.0;
}

std::string format_epoch(const EpochRecord& r);
std::string loss_log_header();

// Per-column mean squared residual of the baseline on `samples`, in the
// normalised domain; used as the global MLPG variances.
std::vector<double> baseline_residual_variance(const BaselineModel<float>& m, const std::vector<BaselineSample>& samples);

struct AcousticPrediction {
  F0Contour f0;
  std::vector<float> spec;  // [T x kSpecDim], raw scale
};

AcousticPrediction baseline_generate(const BaselineModel<float>& m, const Tensor<float>& ctx, const NormStats& norm,
                                     const std::vector<double>& mlpg_variance);

}  // namespace darsvs
