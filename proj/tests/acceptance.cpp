// End-to-end acceptance run: one PASS/FAIL line per criterion, tolerances and
// training budgets pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "darsvs/commands.hpp"
#include "darsvs/layers.hpp"
#include "darsvs/mlpg.hpp"
#include "gradcheck.hpp"

using namespace darsvs;
using darsvs::testing::grad_check;
using darsvs::testing::project;
using darsvs::testing::random_param;
using darsvs::testing::random_tensor;

namespace {

// 1
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSeconds = 60;
// 2
constexpr int kCodecSamples = 1000;
// 3: Hz values round at ~1e-13, so "exact" is pinned at 1e-9 Hz.
constexpr double kAlgebraTol = 1e-9;
// 4
constexpr int kCausalTrials = 20;
// 5
constexpr double kMlpgTol = 1e-8;
constexpr int kMlpgTrials = 50;
// 6
constexpr double kMetricTol = 1e-10;
constexpr double kMcdUnitTol = 1e-9;
// 7
// One update per utterance rather than per minibatch, so the default F0 rate overshoots.
constexpr double kF0LearningRate = 3e-3;
constexpr int kF0Epochs = 30;
constexpr int kSpectralEpochs = 20;
constexpr int kBaselineEpochs = 12;
constexpr double kTableBudgetSeconds = 15 * 60;
// 8
constexpr int kVibratoUtterances = 5;
constexpr int kVibratoEpochs = 150;
constexpr double kVibratoLow = 4.5, kVibratoHigh = 6.5;
constexpr double kVibratoProminenceDb = 6.0;
constexpr double kVibratoBudgetSeconds = 5 * 60;
// 9
constexpr int kSweepEpochs = 2;
constexpr int kSweepTrainUtterances = 24;
// 10
constexpr double kReloadTol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, testing::GradCheckResult>> results;
  std::mt19937_64 rng(101);
  auto run = [&](const std::string& name, ParameterSet<double>& ps, const std::function<Var<double>(Graph<double>&)>& f) {
    results.emplace_back(name, grad_check(ps, f));
  };
  {
    ParameterSet<double> ps;
    AffineLayer<double> layer(ps, "affine", 3, 4, rng);
    init_uniform(ps.get("affine.bias"), 0.5, rng);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    run("affine", ps, [&](Graph<double>& g) { return project(layer(g.param(x))); });
  }
  for (bool reverse : {false, true}) {
    ParameterSet<double> ps;
    GruLayer<double> gru(ps, "gru", 3, 4, rng);
    for (auto& p : ps) init_uniform(*p, 0.6, rng);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    auto& h0 = random_param(ps, "h0", {1, 4}, rng, 0.5);
    run(reverse ? "gru backward" : "gru forward", ps,
        [&](Graph<double>& g) { return project(gru(g.param(x), reverse, g.param(h0))); });
  }
  {
    ParameterSet<double> ps;
    auto& table = random_param(ps, "table", {6, 3}, rng);
    run("embedding", ps, [&](Graph<double>& g) { return project(ops::embedding(g.param(table), {5, 1, 5, 0})); });
  }
  {
    ParameterSet<double> ps;
    CausalConv1dLayer<double> conv(ps, "conv", 2, 3, 4, rng);
    init_uniform(ps.get("conv.bias"), 0.5, rng);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    run("conv1d", ps, [&](Graph<double>& g) { return project(conv(g.param(x), 2)); });
  }
  for (bool training : {true, false}) {
    ParameterSet<double> ps;
    BatchNormLayer<double> bn(ps, "bn", 3);
    init_uniform(ps.get("bn.gamma"), 1.0, rng);
    init_uniform(ps.get("bn.beta"), 1.0, rng);
    ps.get("bn.running_var").value.fill(1.3);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    run(training ? "batch norm (batch stats)" : "batch norm (running stats)", ps,
        [&](Graph<double>& g) { return project(bn(g.param(x), training)); });
  }
  {
    ParameterSet<double> ps;
    MultiHeadSelfAttention<double> mha(ps, "attn", 4, 4, 2, rng);
    for (auto& p : ps) init_uniform(*p, 0.8, rng);
    auto& x = random_param(ps, "x", {4, 4}, rng);
    const auto mask = ops::causal_mask<double>(2);
    run("attention", ps, [&](Graph<double>& g) { return project(mha(g.param(x), 2, mask)); });
  }
  {
    ParameterSet<double> ps;
    auto& logits = random_param(ps, "logits", {4, 6}, rng, 2.0);
    run("h-softmax", ps, [&](Graph<double>& g) { return ops::hsoftmax_nll(g.param(logits), {0, 3, 5, 1}); });
  }
  {
    F0ModelConfig cfg;
    cfg.trunk.fc_units = 4;
    cfg.trunk.bigru_units = 3;
    cfg.trunk.unigru_units = 3;
    cfg.trunk.linear_units = 4;
    cfg.trunk.feedback_dropout = 0.5;
    cfg.embed_dim = 2;
    cfg.quantizer.n_levels = 6;
    F0Model<double> m(cfg, 3, 5);
    const auto ctx = random_tensor({4, 3}, rng);
    run("full f0 model", m.params(), [&](Graph<double>& g) {
      std::mt19937_64 drop(7);
      return m.loss(g, ctx, {2, 0, 6, 4}, &drop);
    });
  }
  {
    SpectralModelConfig cfg;
    cfg.trunk.fc_units = 4;
    cfg.trunk.bigru_units = 3;
    cfg.trunk.unigru_units = 3;
    cfg.trunk.linear_units = 4;
    cfg.trunk.feedback_dropout = 0.5;
    cfg.prenet = {3, 0.1, 2, 4, 4, 2, 2, 4, 2};
    SpectralModel<double> m(cfg, 3, 6);
    for (auto& p : m.params())
      if (p->trainable) init_uniform(*p, 0.5, rng);
    const auto ctx = random_tensor({4, 3}, rng);
    const auto target = random_tensor({4, kSpecDim}, rng);
    run("full spectral model", m.params(), [&](Graph<double>& g) {
      std::mt19937_64 drop(8);
      return m.loss(g, ctx, target, true, &drop);
    });
  }
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, r] : results)
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = name + ": " + r.worst;
  const bool pass = worst <= kGradTol && secs < kGradBudgetSeconds;
  return {pass, fmt("%zu checks, max rel error %.2e (%s), %.1f s", results.size(), worst, worst_name.c_str(), secs)};
}

Outcome codec_round_trip() {
  const QuantizerConfig q;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> hz(69.0, 763.0);
  std::bernoulli_distribution voiced(0.8);
  std::vector<double> f(kCodecSamples);
  for (auto& v : f) v = voiced(rng) ? hz(rng) : 0.0;
  const auto contour = F0Contour::from_hz(f);
  const auto back = dequantize_classes(quantize(contour, q), q);
  double worst = 0;
  int n_voiced = 0;
  bool flags = back.voiced == contour.voiced;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (contour.voiced[i]) {
      ++n_voiced;
      worst = std::max(worst, std::abs(hz_to_mel(back.f0_hz[i]) - hz_to_mel(f[i])));
    }
  const double bound = q.bin_width() / 2;
  return {flags && worst <= bound + 1e-9,
          fmt("%d voiced of %d, max error %.4f mel (bound %.4f), V/UV %s", n_voiced, kCodecSamples, worst, bound,
              flags ? "preserved" : "CHANGED")};
}

Outcome postprocess_algebra() {
  std::mt19937_64 rng(303);
  std::bernoulli_distribution voiced(0.85);
  std::uniform_real_distribution<double> hz(120, 520);
  std::uniform_int_distribution<int> run(5, 40);
  double identity = 0, constant = 0, residual = 0;
  int clamped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 50 + 7 * trial;
    std::vector<double> f(static_cast<std::size_t>(T)), flat(static_cast<std::size_t>(T));
    NoteContour notes;
    while (static_cast<int>(notes.size()) < T) {
      const double v = hz(rng);
      for (int k = run(rng); k > 0 && static_cast<int>(notes.size()) < T; --k) notes.push_back(v);
    }
    for (int t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      const bool on = voiced(rng);
      f[i] = on ? notes[i] + 20 * std::sin(0.17 * t) + hz(rng) * 0.05 : 0.0;
      flat[i] = on ? 300.0 : 0.0;
    }
    const auto fc = F0Contour::from_hz(f);
    const int w = trial % 25;
    const auto out = postprocess_f0(fc, notes, w);
    for (const auto& seg : segment_voiced(fc)) {
      const auto smooth = moving_average(seg.values, w);
      for (int k = 0; k < seg.length(); ++k) {
        const auto t = static_cast<std::size_t>(seg.start + k);
        const double shift = notes[t] - smooth[static_cast<std::size_t>(k)];
        if (f[t] + shift > 0)
          identity = std::max(identity, std::abs((out.f0_hz[t] - f[t]) - shift));
        else
          identity = std::max(identity, std::abs(out.f0_hz[t])), ++clamped;
      }
    }
    // Constant segments: one level per voiced run.
    const auto fl = F0Contour::from_hz(flat);
    const auto out_flat = postprocess_f0(fl, notes, w);
    for (std::size_t t = 0; t < flat.size(); ++t)
      if (fl.voiced[t]) constant = std::max(constant, std::abs(out_flat.f0_hz[t] - notes[t]));
    // w = 0: output residual equals input residual.
    const auto out0 = postprocess_f0(fc, notes, 0);
    for (const auto& seg : segment_voiced(fc)) {
      const auto smooth0 = moving_average(seg.values, 0);
      for (int k = 0; k < seg.length(); ++k) {
        const auto t = static_cast<std::size_t>(seg.start + k);
        residual = std::max(residual, std::abs((out0.f0_hz[t] - notes[t]) - (f[t] - smooth0[static_cast<std::size_t>(k)])));
      }
    }
  }
  const bool pass = identity <= kAlgebraTol && constant <= kAlgebraTol && residual <= kAlgebraTol;
  return {pass, fmt("identity %.1e Hz (%d frames clamped at 0 Hz), constant segments %.1e Hz, w=0 residual %.1e Hz "
                    "(tol %.0e)",
                    identity, clamped, constant, residual, kAlgebraTol)};
}

Outcome causality() {
  std::mt19937_64 rng(404);
  F0Model<float> f0(RunConfig{}.f0, 8, 1);
  SpectralModel<float> spec(RunConfig{}.spectral, 8, 2);
  auto random = [&](int T, int D) {
    Tensor<float> t({T, D});
    std::uniform_real_distribution<float> u(-1, 1);
    for (auto& v : t.values()) v = u(rng);
    return t;
  };
  int f0_bad = 0, spec_bad = 0;
  for (int trial = 0; trial < kCausalTrials; ++trial) {
    const int T = 12 + trial;
    const int t = std::uniform_int_distribution<int>(0, T - 1)(rng);
    const auto ctx = random(T, 8);
    {
      QuantizedF0Sequence a(static_cast<std::size_t>(T));
      std::uniform_int_distribution<int> cls(0, f0.config().n_classes() - 1);
      for (auto& c : a) c = cls(rng);
      auto b = a;
      for (int k = t; k < T; ++k) b[static_cast<std::size_t>(k)] = cls(rng);
      Graph<float> g(false);
      const auto ya = f0.logits(g, ctx, a, nullptr).value(), yb = f0.logits(g, ctx, b, nullptr).value();
      for (int r = 0; r <= t; ++r)
        for (int c = 0; c < ya.cols(); ++c) f0_bad += ya.at(r, c) != yb.at(r, c);
    }
    {
      const auto a = random(T, kSpecDim);
      auto b = a;
      std::normal_distribution<float> n(0, 1);
      for (int r = t; r < T; ++r)
        for (int c = 0; c < kSpecDim; ++c) b.at(r, c) += n(rng);
      Graph<float> g(false);
      const auto ya = spec.predict(g, ctx, a, false, nullptr).value(), yb = spec.predict(g, ctx, b, false, nullptr).value();
      for (int r = 0; r <= t; ++r)
        for (int c = 0; c < kSpecDim; ++c) spec_bad += ya.at(r, c) != yb.at(r, c);
    }
  }
  return {f0_bad == 0 && spec_bad == 0,
          fmt("%d trials per model, differing outputs at frames <= t: f0 %d, spectral %d", kCausalTrials, f0_bad, spec_bad)};
}

std::vector<double> dense_mlpg(const std::vector<double>& m0, const std::vector<double>& m1,
                               const std::vector<double>& m2, const std::array<double, 3>& var) {
  const int T = static_cast<int>(m0.size());
  // Window matrix built by hand, edge frames replicated.
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3 * T, T);
  auto c = [&](int t) { return std::clamp(t, 0, T - 1); };
  for (int t = 0; t < T; ++t) {
    W(t, t) = 1;
    W(T + t, c(t - 1)) -= 0.5;
    W(T + t, c(t + 1)) += 0.5;
    W(2 * T + t, c(t - 1)) += 1;
    W(2 * T + t, t) -= 2;
    W(2 * T + t, c(t + 1)) += 1;
  }
  Eigen::VectorXd mu(3 * T), p(3 * T);
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    mu(t) = m0[i], mu(T + t) = m1[i], mu(2 * T + t) = m2[i];
    p(t) = 1 / var[0], p(T + t) = 1 / var[1], p(2 * T + t) = 1 / var[2];
  }
  // Weighted least squares through QR on the whitened system.
  const Eigen::VectorXd s = p.cwiseSqrt();
  const Eigen::VectorXd x = (s.asDiagonal() * W).colPivHouseholderQr().solve(s.asDiagonal() * mu);
  return {x.data(), x.data() + T};
}

Outcome mlpg_oracle() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> len(1, 16);
  std::uniform_real_distribution<double> var(0.05, 5.0), val(-3, 3);
  double worst = 0;
  for (int trial = 0; trial < kMlpgTrials; ++trial) {
    const int T = len(rng);
    std::vector<double> m[3];
    for (auto& v : m) {
      v.resize(static_cast<std::size_t>(T));
      for (auto& x : v) x = val(rng);
    }
    const std::array<double, 3> vars{var(rng), var(rng), var(rng)};
    const auto fast = mlpg(m[0], m[1], m[2], vars);
    const auto ref = dense_mlpg(m[0], m[1], m[2], vars);
    for (int t = 0; t < T; ++t)
      worst = std::max(worst, std::abs(fast[static_cast<std::size_t>(t)] - ref[static_cast<std::size_t>(t)]));
  }
  return {worst <= kMlpgTol, fmt("%d instances, T <= 16, max abs difference %.2e (tol %.0e)", kMlpgTrials, worst, kMlpgTol)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(606);
  std::bernoulli_distribution on(0.8);
  std::uniform_real_distribution<double> hz(80, 600);
  std::normal_distribution<double> n(0, 1);
  double worst = 0;
  int trials = 0;
  for (int k = 0; k < 200; ++k) {
    const int T = 5 + k;
    std::vector<double> a(static_cast<std::size_t>(T)), b(static_cast<std::size_t>(T));
    for (auto& v : a) v = on(rng) ? hz(rng) : 0.0;
    for (auto& v : b) v = on(rng) ? hz(rng) : 0.0;
    double s2 = 0, sa = 0, sb = 0, cov = 0, va = 0, vb = 0;
    int joint = 0, flips = 0;
    for (int t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      flips += (a[i] > 0) != (b[i] > 0);
      if (a[i] > 0 && b[i] > 0) s2 += (a[i] - b[i]) * (a[i] - b[i]), sa += a[i], sb += b[i], ++joint;
    }
    if (joint < 2) continue;
    ++trials;
    for (int t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      if (a[i] > 0 && b[i] > 0) {
        cov += (a[i] - sa / joint) * (b[i] - sb / joint);
        va += (a[i] - sa / joint) * (a[i] - sa / joint);
        vb += (b[i] - sb / joint) * (b[i] - sb / joint);
      }
    }
    const auto ca = F0Contour::from_hz(a), cb = F0Contour::from_hz(b);
    worst = std::max(worst, std::abs(f0_rmse(ca, cb) - std::sqrt(s2 / joint)));
    worst = std::max(worst, std::abs(f0_corr(ca, cb) - cov / std::sqrt(va * vb)));
    worst = std::max(worst, std::abs(vuv_error(ca, cb) - 100.0 * flips / T));
    std::vector<double> x(static_cast<std::size_t>(T * kSpecDim)), y(x.size());
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    double total = 0;
    for (int t = 0; t < T; ++t) {
      double s = 0;
      for (int c = 0; c < kMccDim; ++c) {
        const auto i = static_cast<std::size_t>(t * kSpecDim + c);
        s += (x[i] - y[i]) * (x[i] - y[i]);
      }
      total += 10.0 / std::log(10.0) * std::sqrt(2.0 * s);
    }
    worst = std::max(worst, std::abs(mcd(x, y, T) - total / T));
  }
  std::vector<double> zero(kSpecDim, 0.0), one = zero;
  one[7] = std::log(10.0) / (10.0 * std::sqrt(2.0));
  const double unit = std::abs(mcd(zero, one, 1) - 1.0);
  return {worst <= kMetricTol && unit <= kMcdUnitTol,
          fmt("%d random instances, max deviation %.2e (tol %.0e); unit MCD error %.2e dB", trials, worst, kMetricTol, unit)};
}

// ---------------------------------------------------------------------------

RunConfig table_config() {
  RunConfig cfg;
  cfg.train_f0.epochs = kF0Epochs;
  cfg.train_f0.adam.base_lr = kF0LearningRate;
  cfg.train_spectral.epochs = kSpectralEpochs;
  cfg.train_baseline.epochs = kBaselineEpochs;
  return cfg;
}

struct Systems {
  EvalReport dar, dar_post, baseline;
};

Systems evaluate_systems(const Dataset& ds, const Checkpoint& f0_ck, const Checkpoint& spec_ck, const Checkpoint& base_ck,
                         int window) {
  const auto f0 = restore_f0(f0_ck);
  const auto spec = restore_spectral(spec_ck);
  const auto base = restore_baseline(base_ck);
  const SynthesisSystem dar{&f0, &spec, nullptr, false, window};
  const SynthesisSystem post{&f0, &spec, nullptr, true, window};
  const SynthesisSystem baseline{nullptr, nullptr, &base, false, window};
  EvalAccumulator a, b, c;
  for (const auto* u : ds.split(Split::test)) {
    auto add = [&](EvalAccumulator& acc, const SynthesisSystem& sys) {
      const auto p = predict_utterance(*u, sys);
      acc.add_f0(contour_of(p), u->ref_f0, u->note_f0);
      acc.add_spectral(p.spec, u->spec, u->frames());
    };
    add(a, dar);
    add(b, post);
    add(c, baseline);
  }
  return {EvalReport::from(a), EvalReport::from(b), EvalReport::from(c)};
}

Outcome table3(const Dataset& ds, std::string& extra) {
  const RunConfig cfg = table_config();
  const auto t0 = Clock::now();
  const auto f0 = train_model(ModelKind::dar_f0, cfg, ds);
  const double t_f0 = seconds_since(t0);
  const auto spec = train_model(ModelKind::dar_spectral, cfg, ds);
  const double t_spec = seconds_since(t0) - t_f0;
  const auto base = train_model(ModelKind::baseline, cfg, ds);
  const double train_secs = seconds_since(t0);
  const double t_base = train_secs - t_f0 - t_spec;
  const auto s = evaluate_systems(ds, f0.checkpoint, spec.checkpoint, base.checkpoint, cfg.postprocess_window);

  const bool a = s.dar.f0_rmse_natural < s.baseline.f0_rmse_natural;
  const bool b = s.dar_post.f0_rmse_note < s.dar.f0_rmse_note && s.dar_post.corr_note >= s.dar.corr_note;
  const bool c = s.dar.mcd < s.baseline.mcd;
  const bool budget = train_secs <= kTableBudgetSeconds;

  std::ostringstream os;
  os << "    test split, " << ds.split(Split::test).size() << " utterances; training " << fmt("%.0f", train_secs)
     << " s (f0 " << fmt("%.0f", t_f0) << ", spectral " << fmt("%.0f", t_spec) << ", baseline " << fmt("%.0f", t_base)
     << "; best epochs " << f0.result.best_epoch << "/" << spec.result.best_epoch << "/" << base.result.best_epoch << ")\n";
  os << "    " << EvalReport::csv_header() << "\n";
  os << "    " << s.dar.to_csv("dar") << "\n    " << s.dar_post.to_csv("dar+postprocess") << "\n    "
     << s.baseline.to_csv("baseline") << "\n";
  extra = os.str();
  return {a && b && c && budget,
          fmt("(a) rmse %.2f vs %.2f Hz %s; (b) note rmse %.2f vs %.2f Hz, corr %.3f vs %.3f %s; (c) mcd %.3f vs %.3f dB "
              "%s; budget %.0f/%.0f s %s",
              s.dar.f0_rmse_natural, s.baseline.f0_rmse_natural, a ? "ok" : "FAIL", s.dar_post.f0_rmse_note,
              s.dar.f0_rmse_note, s.dar_post.corr_note, s.dar.corr_note, b ? "ok" : "FAIL", s.dar.mcd, s.baseline.mcd,
              c ? "ok" : "FAIL", train_secs, kTableBudgetSeconds, budget ? "ok" : "FAIL")};
}

// ---------------------------------------------------------------------------

// Frames belonging to sustained notes, where vibrato is fully developed.
struct Span {
  int start, end;  // [start, end)
};

std::vector<Span> sustained_spans(const NoteContour& notes) {
  std::vector<Span> out;
  int t = 0;
  const int T = static_cast<int>(notes.size());
  while (t < T) {
    int e = t;
    while (e < T && notes[static_cast<std::size_t>(e)] == notes[static_cast<std::size_t>(t)]) ++e;
    const int len = e - t;
    if (notes[static_cast<std::size_t>(t)] > 0 && len >= 120) out.push_back({t + len / 3, e - 10});
    t = e;
  }
  return out;
}

struct VibratoSpectrum {
  std::vector<double> freq, power;
  double prominence_db(double* peak_hz = nullptr) const {
    double peak = 0, at = 0;
    std::vector<double> band;
    for (std::size_t i = 0; i < freq.size(); ++i) {
      if (freq[i] >= kVibratoLow && freq[i] <= kVibratoHigh) {
        if (power[i] > peak) peak = power[i], at = freq[i];
      } else if ((freq[i] >= 1.5 && freq[i] < 4.0) || (freq[i] > 7.0 && freq[i] <= 12.0)) {
        band.push_back(power[i]);
      }
    }
    if (peak_hz) *peak_hz = at;
    std::nth_element(band.begin(), band.begin() + static_cast<std::ptrdiff_t>(band.size() / 2), band.end());
    const double median = band[band.size() / 2];
    return 10 * std::log10(std::max(peak, 1e-30) / std::max(median, 1e-30));
  }
};

// Power of the cent deviation from the note over sustained spans, each span
// mean-removed, linearly detrended and Hann-windowed.
VibratoSpectrum vibrato_spectrum(const std::vector<std::pair<F0Contour, NoteContour>>& items) {
  VibratoSpectrum s;
  for (double f = 0.5; f <= 15.0 + 1e-9; f += 0.05) s.freq.push_back(f);
  s.power.assign(s.freq.size(), 0.0);
  for (const auto& [f0, notes] : items)
    for (const auto& span : sustained_spans(notes)) {
      std::vector<double> x;
      for (int t = span.start; t < span.end; ++t) {
        const auto i = static_cast<std::size_t>(t);
        x.push_back(f0.voiced[i] && f0.f0_hz[i] > 0 ? 1200 * std::log2(f0.f0_hz[i] / notes[i]) : 0.0);
      }
      const int n = static_cast<int>(x.size());
      double mt = (n - 1) / 2.0, mx = 0, sxy = 0, sxx = 0;
      for (double v : x) mx += v / n;
      for (int t = 0; t < n; ++t) sxy += (t - mt) * (x[static_cast<std::size_t>(t)] - mx), sxx += (t - mt) * (t - mt);
      const double slope = sxx > 0 ? sxy / sxx : 0;
      for (int t = 0; t < n; ++t) {
        const double hann = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * t / std::max(1, n - 1));
        x[static_cast<std::size_t>(t)] = (x[static_cast<std::size_t>(t)] - mx - slope * (t - mt)) * hann;
      }
      for (std::size_t k = 0; k < s.freq.size(); ++k) {
        double re = 0, im = 0;
        const double w = 2 * std::numbers::pi * s.freq[k] / kFrameRate;
        for (int t = 0; t < n; ++t) re += x[static_cast<std::size_t>(t)] * std::cos(w * t), im -= x[static_cast<std::size_t>(t)] * std::sin(w * t);
        s.power[k] += re * re + im * im;
      }
    }
  return s;
}

Outcome vibrato(const Dataset& full, std::string& extra) {
  const auto t0 = Clock::now();
  // The training utterances with the most sustained-note frames.
  auto train = full.split(Split::train);
  auto sustained = [](const Utterance* u) {
    int n = 0;
    for (const auto& s : sustained_spans(u->note_f0)) n += s.end - s.start;
    return n;
  };
  std::stable_sort(train.begin(), train.end(), [&](auto* a, auto* b) { return sustained(a) > sustained(b); });
  Dataset ds;
  ds.config = full.config;
  ds.ctx_dim = full.ctx_dim;
  for (int i = 0; i < kVibratoUtterances; ++i) ds.utterances.push_back(*train[static_cast<std::size_t>(i)]);

  RunConfig cfg;
  cfg.train_f0.epochs = cfg.train_baseline.epochs = kVibratoEpochs;
  cfg.train_f0.adam.base_lr = cfg.train_baseline.adam.base_lr = 3e-3;
  cfg.train_f0.adam.decay_rate = cfg.train_baseline.adam.decay_rate = 1.0;
  const auto f0 = restore_f0(train_model(ModelKind::dar_f0, cfg, ds).checkpoint);
  const auto base = restore_baseline(train_model(ModelKind::baseline, cfg, ds).checkpoint);

  std::vector<std::pair<F0Contour, NoteContour>> nat, dar, bas;
  for (const auto& u : ds.utterances) {
    const auto ctx = context_tensor(u);
    nat.emplace_back(u.ref_f0, u.note_f0);
    dar.emplace_back(f0.model->generate(ctx).contour, u.note_f0);
    bas.emplace_back(baseline_generate(*base.model, ctx, base.norm, base.mlpg_variance).f0, u.note_f0);
  }
  double hz_nat = 0, hz_dar = 0, hz_bas = 0;
  const double p_nat = vibrato_spectrum(nat).prominence_db(&hz_nat);
  const double p_dar = vibrato_spectrum(dar).prominence_db(&hz_dar);
  const double p_bas = vibrato_spectrum(bas).prominence_db(&hz_bas);
  const double secs = seconds_since(t0);
  extra = fmt("    natural reference: peak %.2f Hz, %.1f dB above band median\n", hz_nat, p_nat);
  const bool pass = p_dar >= kVibratoProminenceDb && p_bas < p_dar && secs < kVibratoBudgetSeconds;
  return {pass, fmt("dar peak %.2f Hz at %.1f dB (need >= %.0f), baseline peak %.2f Hz at %.1f dB, %.0f s (limit %.0f)",
                    hz_dar, p_dar, kVibratoProminenceDb, hz_bas, p_bas, secs, kVibratoBudgetSeconds)};
}

// ---------------------------------------------------------------------------

bool well_formed(const std::string& csv, std::size_t rows, const std::string& header, std::string& why) {
  std::istringstream is(csv);
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  if (lines.size() != rows + 1) return why = "row count", false;
  if (lines[0] != header) return why = "header", false;
  const auto cols = std::count(header.begin(), header.end(), ',') + 1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    int n = 0;
    for (std::string cell; std::getline(row, cell, ','); ++n) {
      try {
        std::size_t used = 0;
        std::stod(cell, &used);
        if (used != cell.size()) return why = "cell '" + cell + "'", false;
      } catch (const std::exception&) {
        if (cell != "nan" && cell != "-nan") return why = "cell '" + cell + "'", false;
      }
    }
    if (n != cols) return why = "column count on row " + std::to_string(i), false;
  }
  return true;
}

Outcome sweeps(const Dataset& ds, std::string& extra) {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.train_f0.epochs = cfg.train_spectral.epochs = kSweepEpochs;
  cfg.train_f0.max_train_utterances = cfg.train_spectral.max_train_utterances = kSweepTrainUtterances;
  const auto f0 = cmd_sweep(ModelKind::dar_f0, {{1, 2, 3, 4}, {}, {}}, cfg, ds);
  const auto spec = cmd_sweep(ModelKind::dar_spectral, {{1, 2}, {1, 2}, {1, 2}}, cfg, ds);
  std::string why_f0, why_spec;
  const bool ok_f0 = well_formed(f0.csv(), 4, "K,f0_rmse_natural,f0_rmse_note,corr_natural,corr_note,vuv_error,best_valid_loss", why_f0);
  const bool ok_spec = well_formed(spec.csv(), 8, "K,h,N,mcd,best_valid_loss", why_spec);
  const auto& bf = f0.cells[f0.best];
  const auto& bs = spec.cells[spec.best];
  std::string indented;
  for (const auto* table : {&f0, &spec}) {
    std::istringstream is(table->csv());
    for (std::string l; std::getline(is, l);) indented += "    " + l + "\n";
  }
  extra = indented;
  return {ok_f0 && ok_spec,
          fmt("f0 grid 4 cells %s, optimum K=%d; spectral grid 8 cells %s, optimum K=%d h=%d N=%d; %.0f s",
              ok_f0 ? "well-formed" : ("MALFORMED " + why_f0).c_str(), bf.history,
              ok_spec ? "well-formed" : ("MALFORMED " + why_spec).c_str(), bs.history, bs.heads, bs.layers,
              seconds_since(t0))};
}

Outcome determinism(const Dataset& ds) {
  RunConfig cfg;
  for (TrainConfig* tc : {&cfg.train_f0, &cfg.train_spectral, &cfg.train_baseline}) {
    tc->epochs = 2;
    tc->max_train_utterances = 8;
    tc->max_valid_utterances = 4;
  }
  bool logs_equal = true, bytes_equal = true;
  double worst = 0;
  for (ModelKind kind : {ModelKind::dar_f0, ModelKind::dar_spectral, ModelKind::baseline}) {
    const auto a = train_model(kind, cfg, ds);
    const auto b = train_model(kind, cfg, ds);
    logs_equal &= a.result.log.size() == b.result.log.size();
    for (std::size_t i = 0; logs_equal && i < a.result.log.size(); ++i)
      logs_equal &= format_epoch(a.result.log[i]) == format_epoch(b.result.log[i]);
    const std::string bytes = serialize_checkpoint(a.checkpoint);
    bytes_equal &= bytes == serialize_checkpoint(b.checkpoint);
    const double reload = checkpoint_validation_loss(parse_checkpoint(bytes), cfg, ds);
    worst = std::max(worst, std::abs(reload - a.result.best_valid));
  }
  return {logs_equal && bytes_equal && worst <= kReloadTol,
          fmt("loss logs %s, checkpoints %s, reload validation loss deviation %.1e (tol %.0e)",
              logs_equal ? "identical" : "DIFFER", bytes_equal ? "identical" : "DIFFER", worst, kReloadTol)};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  std::printf("building default corpus...\n");
  std::fflush(stdout);
  const Dataset ds = build_corpus(CorpusConfig{});
  const auto counts = split_counts(ds);
  std::printf("corpus: %d train / %d validation / %d test utterances\n", counts.train, counts.validation, counts.test);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome(std::string&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", [](std::string&) { return gradient_suite(); }},
      {2, "codec round trip", [](std::string&) { return codec_round_trip(); }},
      {3, "post-processing algebra", [](std::string&) { return postprocess_algebra(); }},
      {4, "causality", [](std::string&) { return causality(); }},
      {5, "MLPG oracle", [](std::string&) { return mlpg_oracle(); }},
      {6, "metric oracles", [](std::string&) { return metric_oracles(); }},
      {7, "directional table reproduction", [&](std::string& e) { return table3(ds, e); }},
      {8, "vibrato reproduction", [&](std::string& e) { return vibrato(ds, e); }},
      {9, "sweep harness", [&](std::string& e) { return sweeps(ds, e); }},
      {10, "determinism and persistence", [&](std::string&) { return determinism(ds); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    std::string extra;
    Outcome o;
    try {
      o = c.run(extra);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    if (!extra.empty()) std::printf("%s", extra.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed in %.0f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
