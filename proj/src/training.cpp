#include "darsvs/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "darsvs/errors.hpp"
#include "darsvs/mlpg.hpp"

namespace darsvs {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x2545F4914F6CDD1Dull));
}

std::vector<Tensor<float>> snapshot(const ParameterSet<float>& ps) {
  std::vector<Tensor<float>> s;
  for (const auto& p : ps) s.push_back(p->value);
  return s;
}

void restore(ParameterSet<float>& ps, const std::vector<Tensor<float>>& s) {
  std::size_t i = 0;
  for (auto& p : ps) p->value = s[i++];
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw TrainingError(what + " is not finite (" + std::to_string(v) + ")");
}

template <class Model, class Sample, class StepLoss>
TrainResult run_training(Model& m, const std::vector<Sample>& train_set, const std::vector<Sample>& valid_set,
                         const TrainOptions& opt, StepLoss step_loss) {
  opt.config.validate();
  if (train_set.empty()) throw DataError("training split is empty");
  auto& ps = m.params();
  Adam<float> adam(ps, opt.config.adam);
  if (opt.resume) adam.restore(*opt.resume);
  const auto& selection = valid_set.empty() ? train_set : valid_set;

  TrainResult res;
  std::vector<Tensor<float>> best = snapshot(ps);
  auto report = [&](const EpochRecord& r) {
    res.log.push_back(r);
    if (opt.on_epoch) opt.on_epoch(r);
  };
  if (opt.start_epoch == 0) {
    EpochRecord r{0, mean_loss(m, train_set), mean_loss(m, selection), adam.effective_lr(), 0};
    require_finite(r.train_loss, "initial training loss");
    require_finite(r.valid_loss, "initial validation loss");
    res.best_epoch = 0;
    res.best_valid = r.valid_loss;
    res.best_optimizer = adam.state();
    report(r);
  } else {
    res.best_epoch = opt.start_epoch;
    res.best_valid = opt.resume_best_valid;
    res.best_optimizer = adam.state();
  }

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = opt.start_epoch + 1; epoch <= opt.config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(stream_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    long frames = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Sample& s = train_set[order[i]];
      std::mt19937_64 drop_rng(stream_seed(opt.seed, static_cast<std::uint64_t>(epoch), i + 1));
      ps.zero_grad();
      Graph<float> g;
      auto loss = step_loss(g, m, s, drop_rng);
      const double l = loss.value()[0];
      const std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(adam.step_count() + 1) +
                                ", utterance " + s.id;
      if (!std::isfinite(l)) throw TrainingError("loss diverged at " + where + " (loss " + std::to_string(l) + ")");
      g.backward(loss);
      try {
        adam.step();
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at " + where);
      }
      total += l * s.frames();
      frames += s.frames();
    }
    EpochRecord r{epoch, total / static_cast<double>(frames), mean_loss(m, selection), adam.effective_lr(),
                  adam.step_count()};
    require_finite(r.valid_loss, "validation loss at epoch " + std::to_string(epoch));
    if (r.valid_loss < res.best_valid) {
      res.best_valid = r.valid_loss;
      res.best_epoch = epoch;
      res.best_optimizer = adam.state();
      best = snapshot(ps);
    }
    report(r);
  }
  restore(ps, best);
  return res;
}

}  // namespace

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::dar_f0: return "dar-f0";
    case ModelKind::dar_spectral: return "dar-spectral";
    case ModelKind::baseline: return "baseline";
  }
  return "?";
}

ModelKind parse_kind(const std::string& s) {
  if (s == "dar-f0") return ModelKind::dar_f0;
  if (s == "dar-spectral") return ModelKind::dar_spectral;
  if (s == "baseline") return ModelKind::baseline;
  throw ConfigError("unknown model kind '" + s + "' (expected dar-f0, dar-spectral or baseline)");
}

Tensor<float> context_tensor(const Utterance& u) { return Tensor<float>({u.frames(), u.ctx_dim}, u.ctx); }

std::vector<F0Sample> make_f0_samples(const std::vector<const Utterance*>& utts, const QuantizerConfig& q) {
  std::vector<F0Sample> out;
  for (const auto* u : utts) out.push_back({u->id, context_tensor(*u), quantize(u->ref_f0, q)});
  return out;
}

std::vector<SpectralSample> make_spectral_samples(const std::vector<const Utterance*>& utts, const NormStats& norm) {
  std::vector<SpectralSample> out;
  for (const auto* u : utts) {
    std::vector<float> spec = u->spec;
    norm.apply(spec);
    out.push_back({u->id, context_tensor(*u), Tensor<float>({u->frames(), kSpecDim}, std::move(spec))});
  }
  return out;
}

std::vector<double> interpolate_log_f0(const F0Contour& c) {
  const int T = static_cast<int>(c.size());
  std::vector<double> out(static_cast<std::size_t>(T), std::log(kFallbackF0));
  std::vector<int> voiced;
  for (int t = 0; t < T; ++t)
    if (c.voiced[static_cast<std::size_t>(t)]) voiced.push_back(t);
  if (voiced.empty()) return out;
  auto lf = [&](int t) { return std::log(c.f0_hz[static_cast<std::size_t>(t)]); };
  for (int t = 0; t <= voiced.front(); ++t) out[static_cast<std::size_t>(t)] = lf(voiced.front());
  for (int t = voiced.back(); t < T; ++t) out[static_cast<std::size_t>(t)] = lf(voiced.back());
  for (std::size_t i = 0; i + 1 < voiced.size(); ++i) {
    const int a = voiced[i], b = voiced[i + 1];
    for (int t = a; t <= b; ++t)
      out[static_cast<std::size_t>(t)] = lf(a) + (lf(b) - lf(a)) * (t - a) / static_cast<double>(b - a);
  }
  return out;
}

std::vector<float> baseline_features(const Utterance& u) {
  const int T = u.frames();
  const auto lf0 = interpolate_log_f0(u.ref_f0);
  std::vector<float> out(static_cast<std::size_t>(T) * kBaselineOut);
  std::vector<double> column(static_cast<std::size_t>(T));
  for (int d = 0; d < kBaselineStatic; ++d) {
    for (int t = 0; t < T; ++t)
      column[static_cast<std::size_t>(t)] =
          d < kSpecDim ? u.spec[static_cast<std::size_t>(t) * kSpecDim + d] : lf0[static_cast<std::size_t>(t)];
    const Deltas dl = compute_deltas(column);
    for (int t = 0; t < T; ++t) {
      float* row = out.data() + static_cast<std::size_t>(t) * kBaselineOut;
      row[d] = static_cast<float>(column[static_cast<std::size_t>(t)]);
      row[kBaselineStatic + d] = static_cast<float>(dl.delta[static_cast<std::size_t>(t)]);
      row[2 * kBaselineStatic + d] = static_cast<float>(dl.delta2[static_cast<std::size_t>(t)]);
    }
  }
  for (int t = 0; t < T; ++t)
    out[static_cast<std::size_t>(t) * kBaselineOut + kBaselineVuv] = u.ref_f0.voiced[static_cast<std::size_t>(t)] ? 1.f : 0.f;
  return out;
}

namespace {

std::vector<float> leading_columns(const std::vector<float>& rows, int width, int keep) {
  std::vector<float> out;
  const std::size_t n = rows.size() / static_cast<std::size_t>(width);
  out.reserve(n * static_cast<std::size_t>(keep));
  for (std::size_t r = 0; r < n; ++r)
    out.insert(out.end(), rows.begin() + static_cast<long>(r * width), rows.begin() + static_cast<long>(r * width + keep));
  return out;
}

}  // namespace

NormStats baseline_norm_stats(const std::vector<const Utterance*>& utts) {
  std::vector<std::vector<float>> seqs;
  for (const auto* u : utts) seqs.push_back(leading_columns(baseline_features(*u), kBaselineOut, kBaselineVuv));
  return compute_norm_stats(seqs, kBaselineVuv);
}

std::vector<BaselineSample> make_baseline_samples(const std::vector<const Utterance*>& utts, const NormStats& norm) {
  if (norm.dims() != static_cast<std::size_t>(kBaselineVuv)) throw DimensionError("baseline: normalisation needs 126 dims");
  std::vector<BaselineSample> out;
  for (const auto* u : utts) {
    std::vector<float> f = baseline_features(*u);
    for (int t = 0; t < u->frames(); ++t)
      norm.apply(std::span<float>(f.data() + static_cast<std::size_t>(t) * kBaselineOut, kBaselineVuv));
    out.push_back({u->id, context_tensor(*u), Tensor<float>({u->frames(), kBaselineOut}, std::move(f))});
  }
  return out;
}

double evaluation_loss(const F0Model<float>& m, const F0Sample& s) {
  Graph<float> g(false);
  return m.loss(g, s.ctx, s.classes, nullptr).value()[0];
}

double evaluation_loss(const SpectralModel<float>& m, const SpectralSample& s) {
  Graph<float> g(false);
  return m.loss(g, s.ctx, s.target, false, nullptr).value()[0];
}

double evaluation_loss(const BaselineModel<float>& m, const BaselineSample& s) {
  Graph<float> g(false);
  return m.loss(g, s.ctx, s.target).value()[0];
}

TrainResult train(F0Model<float>& m, const std::vector<F0Sample>& train_set, const std::vector<F0Sample>& valid_set,
                  const TrainOptions& opt) {
  return run_training(m, train_set, valid_set, opt,
                      [](Graph<float>& g, const F0Model<float>& model, const F0Sample& s, std::mt19937_64& rng) {
                        return model.loss(g, s.ctx, s.classes, &rng);
                      });
}

TrainResult train(SpectralModel<float>& m, const std::vector<SpectralSample>& train_set,
                  const std::vector<SpectralSample>& valid_set, const TrainOptions& opt) {
  return run_training(m, train_set, valid_set, opt,
                      [](Graph<float>& g, const SpectralModel<float>& model, const SpectralSample& s,
                         std::mt19937_64& rng) { return model.loss(g, s.ctx, s.target, true, &rng); });
}

TrainResult train(BaselineModel<float>& m, const std::vector<BaselineSample>& train_set,
                  const std::vector<BaselineSample>& valid_set, const TrainOptions& opt) {
  return run_training(m, train_set, valid_set, opt,
                      [](Graph<float>& g, const BaselineModel<float>& model, const BaselineSample& s,
                         std::mt19937_64&) { return model.loss(g, s.ctx, s.target); });
}

std::string loss_log_header() { return "# epoch train_loss valid_loss learning_rate steps"; }

std::string format_epoch(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.9g %.9g %.9g %ld", r.epoch, r.train_loss, r.valid_loss, r.learning_rate, r.steps);
  return buf;
}

std::vector<double> baseline_residual_variance(const BaselineModel<float>& m,
                                               const std::vector<BaselineSample>& samples) {
  std::vector<double> sum(static_cast<std::size_t>(kBaselineVuv), 0.0);
  long frames = 0;
  for (const auto& s : samples) {
    Graph<float> g(false);
    const auto& pred = m.predict(g, s.ctx).value();
    for (int t = 0; t < s.frames(); ++t)
      for (int k = 0; k < kBaselineVuv; ++k) {
        const double d = static_cast<double>(pred.at(t, k)) - s.target.at(t, k);
        sum[static_cast<std::size_t>(k)] += d * d;
      }
    frames += s.frames();
  }
  if (frames == 0) throw DataError("baseline: no frames to estimate residual variances");
  for (auto& v : sum) v = std::max(v / static_cast<double>(frames), 1e-6);
  return sum;
}

AcousticPrediction baseline_generate(const BaselineModel<float>& m, const Tensor<float>& ctx, const NormStats& norm,
                                     const std::vector<double>& mlpg_variance) {
  if (mlpg_variance.size() != static_cast<std::size_t>(kBaselineVuv) || norm.dims() != mlpg_variance.size())
    throw DimensionError("baseline: MLPG variances and normalisation must cover 126 dims");
  Graph<float> g(false);
  const auto& pred = m.predict(g, ctx).value();
  const int T = pred.rows();
  AcousticPrediction out;
  out.spec.assign(static_cast<std::size_t>(T) * kSpecDim, 0.f);
  std::vector<double> lf0;
  std::vector<double> mean[3];
  for (int d = 0; d < kBaselineStatic; ++d) {
    std::array<double, 3> var{};
    for (int s = 0; s < 3; ++s) {
      const auto k = static_cast<std::size_t>(s * kBaselineStatic + d);
      mean[s].resize(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t)
        mean[s][static_cast<std::size_t>(t)] = pred.at(t, static_cast<int>(k)) * norm.stddev[k] + norm.mean[k];
      var[static_cast<std::size_t>(s)] = mlpg_variance[k] * norm.stddev[k] * norm.stddev[k];
    }
    const auto traj = mlpg(mean[0], mean[1], mean[2], var);
    if (d < kSpecDim) {
      for (int t = 0; t < T; ++t)
        out.spec[static_cast<std::size_t>(t) * kSpecDim + d] = static_cast<float>(traj[static_cast<std::size_t>(t)]);
    } else {
      lf0 = traj;
    }
  }
  out.f0.f0_hz.resize(static_cast<std::size_t>(T));
  out.f0.voiced.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const bool v = pred.at(t, kBaselineVuv) >= m.config().vuv_threshold;
    out.f0.voiced[static_cast<std::size_t>(t)] = v;
    out.f0.f0_hz[static_cast<std::size_t>(t)] = v ? std::exp(lf0[static_cast<std::size_t>(t)]) : 0.0;
  }
  return out;
}

}  // namespace darsvs
