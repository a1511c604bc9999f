#include "darsvs/models.hpp"

#include <cmath>
#include <string>

#include "darsvs/errors.hpp"

namespace darsvs {

std::vector<double> positional_code(int pos, int d) {
  if (d <= 0 || d % 2 != 0) throw ConfigError("positional code width must be positive and even, got " + std::to_string(d));
  if (pos < 0) throw DomainError("positional code position must be >= 0");
  std::vector<double> p(static_cast<std::size_t>(d));
  for (int i = 0; i < d / 2; ++i) {
    const double angle = pos / std::pow(10000.0, 2.0 * i / d);
    p[static_cast<std::size_t>(2 * i)] = std::sin(angle);
    p[static_cast<std::size_t>(2 * i + 1)] = std::cos(angle);
  }
  return p;
}

namespace {

template <class Real>
Tensor<Real> row_of(const Tensor<Real>& m, int r) {
  auto src = m.row(r);
  return Tensor<Real>({1, m.cols()}, std::vector<Real>(src.begin(), src.end()));
}

void require_frames(std::size_t got, int want, const char* what) {
  if (got != static_cast<std::size_t>(want))
    throw DimensionError(std::string(what) + ": " + std::to_string(got) + " target frames for " + std::to_string(want) +
                         " context frames");
}

}  // namespace

// ---------------------------------------------------------------------------

template <class Real>
DarTrunk<Real>::DarTrunk(ParameterSet<Real>& ps, const DarTrunkConfig& cfg, int ctx_dim, std::mt19937_64& rng)
    : fc1_(ps, "trunk.fc1", ctx_dim, cfg.fc_units, rng),
      fc2_(ps, "trunk.fc2", cfg.fc_units, cfg.fc_units, rng),
      bigru_(ps, "trunk.bigru", cfg.fc_units, cfg.bigru_units, rng) {}

template <class Real>
Var<Real> DarTrunk<Real>::encode(Graph<Real>& g, const Tensor<Real>& ctx) const {
  auto x = ops::tanh(fc1_(g.constant(ctx)));
  x = ops::tanh(fc2_(x));
  return bigru_(x);
}

// ---------------------------------------------------------------------------

template <class Real>
F0Model<Real>::F0Model(const F0ModelConfig& cfg, int ctx_dim, std::uint64_t seed) : cfg_(cfg), ctx_dim_(ctx_dim) {
  cfg_.validate();
  if (ctx_dim <= 0) throw ConfigError("f0 model: context dimension must be positive");
  std::mt19937_64 rng(seed);
  trunk_ = DarTrunk<Real>(params_, cfg_.trunk, ctx_dim, rng);
  embedding_ = &params_.add("f0.embedding", {cfg_.n_classes() + 1, cfg_.embed_dim});
  init_uniform(*embedding_, 0.5, rng);
  unigru_ = GruLayer<Real>(params_, "f0.unigru", trunk_.out_dim() + cfg_.history_len * cfg_.embed_dim,
                           cfg_.trunk.unigru_units, rng);
  linear_ = AffineLayer<Real>(params_, "f0.linear", cfg_.trunk.unigru_units, cfg_.trunk.linear_units, rng);
  out_ = AffineLayer<Real>(params_, "f0.out", cfg_.trunk.linear_units, cfg_.n_classes(), rng);
}

template <class Real>
std::vector<int> F0Model<Real>::history(const QuantizedF0Sequence& classes, int t) const {
  const int K = cfg_.history_len;
  std::vector<int> h(static_cast<std::size_t>(K));
  for (int p = 0; p < K; ++p) {
    const int s = t - K + p;
    h[static_cast<std::size_t>(p)] = s < 0 ? padding_class() : classes[static_cast<std::size_t>(s)];
  }
  return h;
}

template <class Real>
Var<Real> F0Model<Real>::feedback(Graph<Real>& g, const std::vector<int>& hist_rows, int frames,
                                  std::mt19937_64* rng) const {
  const int width = cfg_.history_len * cfg_.embed_dim;
  if (!feedback_active()) return g.constant(Tensor<Real>::matrix(frames, width));
  auto e = ops::reshape(ops::embedding(g.param(*embedding_), hist_rows), {frames, width});
  if (rng) e = ops::block_dropout(e, cfg_.embed_dim, cfg_.trunk.feedback_dropout, *rng);
  return e;
}

template <class Real>
Var<Real> F0Model<Real>::head(Var<Real> h) const {
  return out_(linear_(h));
}

template <class Real>
Var<Real> F0Model<Real>::logits(Graph<Real>& g, const Tensor<Real>& ctx, const QuantizedF0Sequence& targets,
                                std::mt19937_64* dropout_rng) const {
  const int T = ctx.rows();
  if (ctx.cols() != ctx_dim_)
    throw DimensionError("f0 model: context has " + std::to_string(ctx.cols()) + " features, expected " +
                         std::to_string(ctx_dim_));
  require_frames(targets.size(), T, "f0 model");
  for (int c : targets)
    if (c < 0 || c >= cfg_.n_classes()) throw DomainError("f0 model: target class " + std::to_string(c) + " out of range");
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(T * cfg_.history_len));
  for (int t = 0; t < T; ++t)
    for (int c : history(targets, t)) rows.push_back(c);
  auto enc = trunk_.encode(g, ctx);
  auto x = ops::concat_cols<Real>({enc, feedback(g, rows, T, dropout_rng)});
  return head(unigru_(x));
}

template <class Real>
Var<Real> F0Model<Real>::loss(Graph<Real>& g, const Tensor<Real>& ctx, const QuantizedF0Sequence& targets,
                              std::mt19937_64* dropout_rng) const {
  return ops::hsoftmax_nll(logits(g, ctx, targets, dropout_rng), targets);
}

template <class Real>
std::vector<std::vector<double>> F0Model<Real>::posteriors(const Tensor<Real>& ctx,
                                                           const QuantizedF0Sequence& targets) const {
  Graph<Real> g(false);
  const auto& l = logits(g, ctx, targets, nullptr).value();
  std::vector<std::vector<double>> post;
  for (int t = 0; t < l.rows(); ++t) post.push_back(ops::hsoftmax_posterior<Real>(l.row(t)));
  return post;
}

template <class Real>
F0Generation F0Model<Real>::generate(const Tensor<Real>& ctx) const {
  const int T = ctx.rows();
  Graph<Real> pre(false);
  const Tensor<Real> enc = trunk_.encode(pre, ctx).value();
  F0Generation out;
  Tensor<Real> h = Tensor<Real>::matrix(1, cfg_.trunk.unigru_units);
  for (int t = 0; t < T; ++t) {
    Graph<Real> g(false);
    auto x = ops::concat_cols<Real>({g.constant(row_of(enc, t)), feedback(g, history(out.classes, t), 1, nullptr)});
    auto ht = unigru_(x, false, g.constant(h));
    const auto post = ops::hsoftmax_posterior<Real>(head(ht).value().row(0));
    const DecodedF0 d = dequantize_mean(post, cfg_.quantizer);
    out.classes.push_back(d.class_index);
    out.contour.voiced.push_back(d.voiced);
    out.contour.f0_hz.push_back(d.f0_hz);
    h = ht.value();
  }
  return out;
}

// ---------------------------------------------------------------------------

template <class Real>
Prenet<Real>::Prenet(ParameterSet<Real>& ps, const PrenetConfig& cfg, int frame_dim, std::mt19937_64& rng)
    : cfg_(cfg),
      fc1_(ps, "prenet.fc1", frame_dim, cfg.fc_units, rng),
      fc2_(ps, "prenet.fc2", cfg.fc_units, cfg.fc_units, rng),
      conv_(ps, "prenet.conv", cfg.conv_kernel, cfg.fc_units, cfg.conv_channels, rng),
      bn_(ps, "prenet.bn", cfg.conv_channels) {
  cfg_.validate();
  for (int i = 0; i < cfg.attn_layers; ++i)
    attention_.emplace_back(ps, "prenet.attn" + std::to_string(i), cfg.conv_channels, cfg.proj_dim, cfg.heads, rng);
  final_ = AffineLayer<Real>(ps, "prenet.final", cfg.conv_channels, cfg.conv_channels, rng);
  const int K = cfg.history_len;
  pos_codes_ = Tensor<Real>::matrix(K, cfg.pos_dim);
  for (int p = 0; p < K; ++p) {
    const auto code = positional_code(p, cfg.pos_dim);
    for (int c = 0; c < cfg.pos_dim; ++c) pos_codes_.at(p, c) = static_cast<Real>(code[static_cast<std::size_t>(c)]);
  }
  mask_ = ops::causal_mask<Real>(K);
}

template <class Real>
Var<Real> Prenet<Real>::operator()(Var<Real> windows, bool training, std::mt19937_64* rng) const {
  Graph<Real>& g = *windows.graph;
  const int K = cfg_.history_len;
  const int N = windows.rows();
  if (N % K != 0) throw DimensionError("prenet: " + std::to_string(N) + " rows are not whole windows of " + std::to_string(K));
  const bool drop = training && cfg_.fc_dropout > 0;
  if (drop && !rng) throw DomainError("prenet: training mode needs a dropout generator");
  auto x = ops::relu(fc1_(windows));
  if (drop) x = ops::dropout(x, cfg_.fc_dropout, *rng);
  x = ops::relu(fc2_(x));
  if (drop) x = ops::dropout(x, cfg_.fc_dropout, *rng);
  x = ops::relu(bn_(conv_(x, K), training));
  Tensor<Real> codes = Tensor<Real>::matrix(N, cfg_.pos_dim);
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < cfg_.pos_dim; ++c) codes.at(r, c) = pos_codes_.at(r % K, c);
  x = ops::add(x, g.constant(std::move(codes)));
  const auto attn_in = x;
  for (const auto& layer : attention_) x = ops::add(x, layer(x, K, mask_));
  auto y = ops::add(final_(x), attn_in);
  std::vector<int> last;
  for (int w = 0; w < N / K; ++w) last.push_back(w * K + K - 1);
  return ops::gather_rows(y, std::move(last));
}

// ---------------------------------------------------------------------------

template <class Real>
SpectralModel<Real>::SpectralModel(const SpectralModelConfig& cfg, int ctx_dim, std::uint64_t seed)
    : cfg_(cfg), ctx_dim_(ctx_dim) {
  cfg_.validate();
  if (ctx_dim <= 0) throw ConfigError("spectral model: context dimension must be positive");
  std::mt19937_64 rng(seed);
  trunk_ = DarTrunk<Real>(params_, cfg_.trunk, ctx_dim, rng);
  pad_frame_ = &params_.add("spectral.pad_frame", {1, kSpecDim});
  prenet_ = Prenet<Real>(params_, cfg_.prenet, kSpecDim, rng);
  unigru_ = GruLayer<Real>(params_, "spectral.unigru", trunk_.out_dim() + prenet_.out_dim(), cfg_.trunk.unigru_units, rng);
  linear_ = AffineLayer<Real>(params_, "spectral.linear", cfg_.trunk.unigru_units, cfg_.trunk.linear_units, rng);
  out_ = AffineLayer<Real>(params_, "spectral.out", cfg_.trunk.linear_units, kSpecDim, rng);
}

template <class Real>
std::vector<int> SpectralModel<Real>::window(int t) const {
  const int K = cfg_.prenet.history_len;
  std::vector<int> w(static_cast<std::size_t>(K));
  for (int p = 0; p < K; ++p) w[static_cast<std::size_t>(p)] = std::max(-1, t - K + p);
  return w;
}

template <class Real>
Var<Real> SpectralModel<Real>::windows(Graph<Real>& g, const Tensor<Real>& frames, const std::vector<int>& rows) const {
  auto pad = g.param(*pad_frame_);
  auto source = frames.rows() > 0 && !frames.empty() ? ops::concat_rows<Real>({pad, g.constant(frames)}) : pad;
  std::vector<int> idx;
  idx.reserve(rows.size());
  for (int r : rows) idx.push_back(r + 1);
  return ops::gather_rows(source, std::move(idx));
}

template <class Real>
Var<Real> SpectralModel<Real>::head(Var<Real> h) const {
  return out_(linear_(h));
}

template <class Real>
Var<Real> SpectralModel<Real>::predict(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets,
                                       bool training, std::mt19937_64* rng) const {
  const int T = ctx.rows();
  if (ctx.cols() != ctx_dim_)
    throw DimensionError("spectral model: context has " + std::to_string(ctx.cols()) + " features, expected " +
                         std::to_string(ctx_dim_));
  require_frames(static_cast<std::size_t>(targets.rows()), T, "spectral model");
  if (targets.cols() != kSpecDim) throw DimensionError("spectral model: targets must have 41 columns");
  if (training && !rng) throw DomainError("spectral model: training mode needs a dropout generator");
  auto enc = trunk_.encode(g, ctx);
  Var<Real> fb;
  if (feedback_active()) {
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(T * cfg_.prenet.history_len));
    for (int t = 0; t < T; ++t)
      for (int s : window(t)) rows.push_back(s);
    fb = prenet_(windows(g, targets, rows), training, rng);
    if (training) fb = ops::block_dropout(fb, prenet_.out_dim(), cfg_.trunk.feedback_dropout, *rng);
  } else {
    fb = g.constant(Tensor<Real>::matrix(T, prenet_.out_dim()));
  }
  return head(unigru_(ops::concat_cols<Real>({enc, fb})));
}

template <class Real>
Var<Real> SpectralModel<Real>::loss(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets,
                                    bool training, std::mt19937_64* rng) const {
  return ops::mse(predict(g, ctx, targets, training, rng), targets);
}

template <class Real>
Tensor<Real> SpectralModel<Real>::generate(const Tensor<Real>& ctx) const {
  const int T = ctx.rows();
  const int K = cfg_.prenet.history_len;
  Graph<Real> pre(false);
  const Tensor<Real> enc = trunk_.encode(pre, ctx).value();
  Tensor<Real> out = Tensor<Real>::matrix(T, kSpecDim);
  Tensor<Real> h = Tensor<Real>::matrix(1, cfg_.trunk.unigru_units);
  for (int t = 0; t < T; ++t) {
    Graph<Real> g(false);
    Var<Real> fb;
    if (feedback_active()) {
      // Only the K most recent emitted frames are visible to the prenet.
      const int first = std::max(0, t - K);
      Tensor<Real> recent = Tensor<Real>::matrix(t - first, kSpecDim);
      for (int s = first; s < t; ++s)
        std::copy(out.row(s).begin(), out.row(s).end(), recent.row(s - first).begin());
      std::vector<int> rows;
      for (int s : window(t)) rows.push_back(s < 0 ? -1 : s - first);
      fb = prenet_(windows(g, recent, rows), false, nullptr);
    } else {
      fb = g.constant(Tensor<Real>::matrix(1, prenet_.out_dim()));
    }
    auto ht = unigru_(ops::concat_cols<Real>({g.constant(row_of(enc, t)), fb}), false, g.constant(h));
    const auto& y = head(ht).value();
    std::copy(y.values().begin(), y.values().end(), out.row(t).begin());
    h = ht.value();
  }
  return out;
}

// ---------------------------------------------------------------------------

template <class Real>
BaselineModel<Real>::BaselineModel(const BaselineConfig& cfg, int ctx_dim, std::uint64_t seed)
    : cfg_(cfg), ctx_dim_(ctx_dim) {
  cfg_.validate();
  if (ctx_dim <= 0) throw ConfigError("baseline: context dimension must be positive");
  std::mt19937_64 rng(seed);
  int in = ctx_dim;
  layers_.reserve(static_cast<std::size_t>(cfg_.n_layers));
  for (int i = 0; i < cfg_.n_layers; ++i) {
    layers_.emplace_back(params_, "baseline.bigru" + std::to_string(i), in, cfg_.units, rng);
    in = layers_.back().out();
  }
  out_ = AffineLayer<Real>(params_, "baseline.out", in, kBaselineOut, rng);
}

template <class Real>
Var<Real> BaselineModel<Real>::predict(Graph<Real>& g, const Tensor<Real>& ctx) const {
  if (ctx.cols() != ctx_dim_)
    throw DimensionError("baseline: context has " + std::to_string(ctx.cols()) + " features, expected " +
                         std::to_string(ctx_dim_));
  auto x = g.constant(ctx);
  for (const auto& layer : layers_) x = layer(x);
  return out_(x);
}

template <class Real>
Var<Real> BaselineModel<Real>::loss(Graph<Real>& g, const Tensor<Real>& ctx, const Tensor<Real>& targets) const {
  if (targets.rows() != ctx.rows() || targets.cols() != kBaselineOut)
    throw DimensionError("baseline: targets must be [T x 127], got " + shape_string(targets.shape()));
  return ops::mse(predict(g, ctx), targets);
}

template class DarTrunk<float>;
template class DarTrunk<double>;
template class F0Model<float>;
template class F0Model<double>;
template class Prenet<float>;
template class Prenet<double>;
template class SpectralModel<float>;
template class SpectralModel<double>;
template class BaselineModel<float>;
template class BaselineModel<double>;

}  // namespace darsvs
