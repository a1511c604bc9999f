#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "darsvs/adam.hpp"
#include "darsvs/autograd.hpp"
#include "darsvs/layers.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace darsvs;
using darsvs::testing::grad_check;
using darsvs::testing::project;
using darsvs::testing::random_param;
using darsvs::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;

Tensor<double> identity(int n) {
  Tensor<double> t = Tensor<double>::matrix(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1;
  return t;
}

ops::GruVars<double> bind_gru(Graph<double>& g, ParameterSet<double>& ps, const std::string& pre) {
  return {g.param(ps.get(pre + "wz")), g.param(ps.get(pre + "wr")), g.param(ps.get(pre + "wh")),
          g.param(ps.get(pre + "uz")), g.param(ps.get(pre + "ur")), g.param(ps.get(pre + "uh")),
          g.param(ps.get(pre + "bz")), g.param(ps.get(pre + "br")), g.param(ps.get(pre + "bh"))};
}

void add_gru(ParameterSet<double>& ps, const std::string& pre, int D, int H, std::mt19937_64& rng, double scale) {
  for (const char* n : {"wz", "wr", "wh"}) random_param(ps, pre + n, {D, H}, rng, scale);
  for (const char* n : {"uz", "ur", "uh"}) random_param(ps, pre + n, {H, H}, rng, scale);
  for (const char* n : {"bz", "br", "bh"}) random_param(ps, pre + n, {H}, rng, scale);
}

}  // namespace

TEST_CASE("tensor shape invariant") {
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(5)), DimensionError);
  CHECK_THROWS_AS(t.reshape({4, 2}), DimensionError);
  t.reshape({3, 2});
  CHECK(t.rows() == 3);
}

TEST_CASE("affine forward cases") {
  Graph<double> g(false);
  auto x = g.constant(identity(2));
  auto w = g.constant(identity(2));
  auto b = g.constant(Tensor<double>({2}));
  auto y = ops::affine(x, w, b);
  CHECK(y.value().storage() == identity(2).storage());

  auto zeros = g.constant(Tensor<double>::matrix(3, 2));
  auto bias = g.constant(Tensor<double>({2}, std::vector<double>{0.5, -1.5}));
  auto z = ops::affine(zeros, w, bias);
  for (int r = 0; r < 3; ++r) {
    CHECK(z.value().at(r, 0) == 0.5);
    CHECK(z.value().at(r, 1) == -1.5);
  }
}

TEST_CASE("affine shape mismatch names operands") {
  Graph<double> g(false);
  auto x = g.constant(Tensor<double>::matrix(2, 3));
  auto w = g.constant(Tensor<double>::matrix(4, 2));
  try {
    ops::affine(x, w);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("affine gradients") {
  std::mt19937_64 rng(1);
  ParameterSet<double> ps;
  auto& x = random_param(ps, "x", {3, 4}, rng);
  auto& w = random_param(ps, "w", {4, 2}, rng);
  auto& b = random_param(ps, "b", {2}, rng);
  auto r = grad_check(ps, [&](Graph<double>& g) { return project(ops::affine(g.param(x), g.param(w), g.param(b))); });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("elementwise, concat, gather and reshape gradients") {
  std::mt19937_64 rng(2);
  ParameterSet<double> ps;
  auto& a = random_param(ps, "a", {3, 2}, rng);
  auto& b = random_param(ps, "b", {3, 2}, rng);
  auto& c = random_param(ps, "c", {2, 2}, rng);
  auto r = grad_check(ps, [&](Graph<double>& g) {
    auto x = ops::add(ops::tanh(g.param(a)), ops::scale(ops::sigmoid(g.param(b)), 0.7));
    auto y = ops::relu(ops::concat_cols<double>({x, g.param(b)}));
    auto z = ops::concat_rows<double>({g.param(c), ops::gather_rows(g.param(a), {2, 0, 2})});
    auto zz = ops::reshape(z, {5, 2});
    return ops::add(project(y, 5), project(zz, 6));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("embedding gradients with repeated indices") {
  std::mt19937_64 rng(3);
  ParameterSet<double> ps;
  auto& table = random_param(ps, "table", {5, 3}, rng);
  auto r = grad_check(ps, [&](Graph<double>& g) { return project(ops::embedding(g.param(table), {4, 1, 4, 0})); });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("dropout variants") {
  std::mt19937_64 rng(4);
  ParameterSet<double> ps;
  auto& x = random_param(ps, "x", {4, 6}, rng);
  auto r = grad_check(ps, [&](Graph<double>& g) {
    std::mt19937_64 drng(11);
    auto y = ops::dropout(g.param(x), 0.3, drng);
    return project(ops::block_dropout(y, 3, 0.5, drng));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);

  Graph<double> g(false);
  std::mt19937_64 drng(5);
  CHECK_THROWS_AS(ops::dropout(g.param(x), 1.0, drng), DomainError);
  auto all = ops::block_dropout(g.param(x), 3, 1.0, drng);
  for (double v : all.value().values()) CHECK(v == 0.0);
  auto none = ops::block_dropout(g.param(x), 3, 0.0, drng);
  CHECK(none.value().storage() == x.value.storage());
  // whole blocks are kept or dropped, kept values scale by 1/(1-p)
  auto half = ops::block_dropout(g.param(x), 3, 0.5, drng);
  for (int r2 = 0; r2 < 4; ++r2)
    for (int blk = 0; blk < 2; ++blk) {
      const bool dropped = half.value().at(r2, blk * 3) == 0.0;
      for (int c = 0; c < 3; ++c)
        CHECK(half.value().at(r2, blk * 3 + c) == (dropped ? 0.0 : 2.0 * x.value.at(r2, blk * 3 + c)));
    }
}

TEST_CASE("gru with zero weights stays at zero") {
  ParameterSet<double> ps;
  std::mt19937_64 rng(0);
  add_gru(ps, "", 3, 4, rng, 0.0);
  Graph<double> g(false);
  auto x = g.constant(random_tensor({5, 3}, rng));
  for (bool rev : {false, true}) {
    auto y = ops::gru(x, bind_gru(g, ps, ""), rev);
    for (double v : y.value().values()) CHECK(v == 0.0);
  }
}

TEST_CASE("gru single frame is direction independent") {
  ParameterSet<double> ps;
  std::mt19937_64 rng(6);
  add_gru(ps, "", 3, 4, rng, 0.5);
  Graph<double> g(false);
  auto x = g.constant(random_tensor({1, 3}, rng));
  auto f = ops::gru(x, bind_gru(g, ps, ""), false);
  auto b = ops::gru(x, bind_gru(g, ps, ""), true);
  CHECK(f.value().storage() == b.value().storage());
}

TEST_CASE("gru matches a hand-rolled recurrence") {
  ParameterSet<double> ps;
  std::mt19937_64 rng(7);
  add_gru(ps, "", 2, 3, rng, 0.6);
  Tensor<double> xs = random_tensor({4, 2}, rng);
  Graph<double> g(false);
  auto y = ops::gru(g.constant(xs), bind_gru(g, ps, ""), true);
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  std::vector<double> h(3, 0.0);
  for (int t = 3; t >= 0; --t) {
    std::vector<double> z(3), r(3), n(3);
    for (int j = 0; j < 3; ++j) {
      double az = ps.get("bz").value[j], ar = ps.get("br").value[j];
      for (int i = 0; i < 2; ++i) {
        az += xs.at(t, i) * ps.get("wz").value.at(i, j);
        ar += xs.at(t, i) * ps.get("wr").value.at(i, j);
      }
      for (int i = 0; i < 3; ++i) {
        az += h[i] * ps.get("uz").value.at(i, j);
        ar += h[i] * ps.get("ur").value.at(i, j);
      }
      z[j] = sig(az);
      r[j] = sig(ar);
    }
    for (int j = 0; j < 3; ++j) {
      double an = ps.get("bh").value[j];
      for (int i = 0; i < 2; ++i) an += xs.at(t, i) * ps.get("wh").value.at(i, j);
      for (int i = 0; i < 3; ++i) an += r[i] * h[i] * ps.get("uh").value.at(i, j);
      n[j] = std::tanh(an);
    }
    for (int j = 0; j < 3; ++j) h[j] = (1 - z[j]) * h[j] + z[j] * n[j];
    for (int j = 0; j < 3; ++j) CHECK(y.value().at(t, j) == doctest::Approx(h[j]).epsilon(1e-12));
  }
}

TEST_CASE("gru gradients for all nine weights, both directions, with initial state") {
  for (bool rev : {false, true}) {
    std::mt19937_64 rng(rev ? 8 : 9);
    ParameterSet<double> ps;
    add_gru(ps, "", 3, 4, rng, 0.7);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    auto& h0 = random_param(ps, "h0", {1, 4}, rng);
    auto r = grad_check(
        ps, [&](Graph<double>& g) { return project(ops::gru(g.param(x), bind_gru(g, ps, ""), rev, g.param(h0))); });
    INFO(r.worst);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("causal conv1d cases") {
  Graph<double> g(false);
  std::mt19937_64 rng(10);
  SUBCASE("k=1 identity kernel") {
    Tensor<double> k({1, 3, 3});
    for (int i = 0; i < 3; ++i) k[static_cast<std::size_t>(i * 3 + i)] = 1;
    auto x = g.constant(random_tensor({5, 3}, rng));
    auto y = ops::conv1d_causal(x, g.constant(k), Var<double>{}, 5);
    CHECK(y.value().storage() == x.value().storage());
  }
  SUBCASE("k=2 impulse response") {
    Tensor<double> x = Tensor<double>::matrix(6, 2);
    x.at(0, 0) = 1;
    auto y = ops::conv1d_causal(g.constant(x), g.constant(random_tensor({2, 2, 3}, rng)), Var<double>{}, 6);
    for (int t = 0; t < 6; ++t) {
      double norm = 0;
      for (int c = 0; c < 3; ++c) norm += std::abs(y.value().at(t, c));
      if (t <= 1)
        CHECK(norm > 0);
      else
        CHECK(norm == 0);
    }
  }
  SUBCASE("segments never read across their boundary") {
    auto kernel = g.constant(random_tensor({2, 2, 2}, rng));
    Tensor<double> a = random_tensor({4, 2}, rng);
    Tensor<double> b = a;
    b.at(1, 0) += 3.0;  // last row of the first segment
    auto ya = ops::conv1d_causal(g.constant(a), kernel, Var<double>{}, 2);
    auto yb = ops::conv1d_causal(g.constant(b), kernel, Var<double>{}, 2);
    for (int c = 0; c < 2; ++c) {
      CHECK(ya.value().at(2, c) == yb.value().at(2, c));
      CHECK(ya.value().at(3, c) == yb.value().at(3, c));
    }
  }
}

TEST_CASE("conv1d gradients") {
  std::mt19937_64 rng(11);
  ParameterSet<double> ps;
  auto& x = random_param(ps, "x", {4, 3}, rng);
  auto& k = random_param(ps, "k", {2, 3, 2}, rng);
  auto& b = random_param(ps, "b", {2}, rng);
  for (int seg : {4, 2}) {
    auto r = grad_check(ps, [&](Graph<double>& g) {
      return project(ops::conv1d_causal(g.param(x), g.param(k), g.param(b), seg));
    });
    INFO(r.worst);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("batch norm statistics and modes") {
  std::mt19937_64 rng(12);
  ParameterSet<double> ps;
  BatchNormLayer<double> bn(ps, "bn", 2);
  // per-channel mean 5, variance 4
  Tensor<double> x = Tensor<double>::matrix(4, 2);
  const double col[4] = {3, 7, 3, 7};
  for (int r = 0; r < 4; ++r) x.at(r, 0) = x.at(r, 1) = col[r];
  {
    Graph<double> g(false);
    auto y = bn(g.constant(x), true);
    for (int c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (int r = 0; r < 4; ++r) m += y.value().at(r, c) / 4;
      for (int r = 0; r < 4; ++r) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m) / 4;
      CHECK(std::abs(m) < 1e-12);
      CHECK(v == doctest::Approx(4.0 / (4.0 + 1e-5)).epsilon(1e-12));
    }
    CHECK(ps.get("bn.running_mean").value[0] == doctest::Approx(0.5));
    CHECK(ps.get("bn.running_var").value[0] == doctest::Approx(0.9 + 0.1 * 16.0 / 3.0));
  }
  {
    ps.get("bn.gamma").value.fill(2.0);
    ps.get("bn.beta").value.fill(5.0);
    Graph<double> g(false);
    auto y = bn(g.constant(x), true);
    for (int r = 0; r < 4; ++r) CHECK(y.value().at(r, 0) == doctest::Approx(x.at(r, 0)).epsilon(1e-5));
  }
  {
    ps.get("bn.gamma").value.fill(1.0);
    ps.get("bn.beta").value.fill(0.0);
    ps.get("bn.running_mean").value.fill(0.0);
    ps.get("bn.running_var").value.fill(1.0);
    Graph<double> g(false);
    auto y = bn(g.constant(x), false);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i]).epsilon(1e-5));
  }
  Graph<double> g(false);
  CHECK_THROWS_AS(bn(g.constant(Tensor<double>::matrix(1, 2)), true), DomainError);
}

TEST_CASE("batch norm gradients in both modes") {
  for (bool training : {true, false}) {
    std::mt19937_64 rng(13);
    ParameterSet<double> ps;
    BatchNormLayer<double> bn(ps, "bn", 3);
    init_uniform(ps.get("bn.gamma"), 1.0, rng);
    init_uniform(ps.get("bn.beta"), 1.0, rng);
    ps.get("bn.running_var").value.fill(1.7);
    auto& x = random_param(ps, "x", {4, 3}, rng);
    auto r = grad_check(ps, [&](Graph<double>& g) { return project(bn(g.param(x), training)); });
    INFO(r.worst);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("attention closed forms") {
  Graph<double> g(false);
  std::mt19937_64 rng(14);
  SUBCASE("single position returns V") {
    auto q = g.constant(random_tensor({1, 4}, rng));
    auto v = g.constant(random_tensor({1, 3}, rng));
    auto y = ops::scaled_dot_attention(q, q, v, Tensor<double>{});
    CHECK(y.value().storage() == v.value().storage());
  }
  SUBCASE("2x2 softmax closed form") {
    Tensor<double> qk({2, 2}, std::vector<double>{3, 0, 0, 1});
    Tensor<double> vv({2, 2}, std::vector<double>{1, 2, -4, 8});
    auto y = ops::scaled_dot_attention(g.constant(qk), g.constant(qk), g.constant(vv), Tensor<double>{});
    const double s = 1 / std::sqrt(2.0);
    // row 0 logits [9s, 0], row 1 logits [0, s]
    const double p00 = 1 / (1 + std::exp(-9 * s));
    const double p10 = 1 / (1 + std::exp(s));
    CHECK(y.value().at(0, 0) == doctest::Approx(p00 * 1 + (1 - p00) * -4).epsilon(1e-12));
    CHECK(y.value().at(0, 1) == doctest::Approx(p00 * 2 + (1 - p00) * 8).epsilon(1e-12));
    CHECK(y.value().at(1, 0) == doctest::Approx(p10 * 1 + (1 - p10) * -4).epsilon(1e-12));
    CHECK(p00 > 0.998);
  }
  SUBCASE("softmax rows sum to one") {
    auto q = g.constant(random_tensor({5, 4}, rng, 3.0));
    auto k = g.constant(random_tensor({5, 4}, rng, 3.0));
    auto y = ops::scaled_dot_attention(q, k, g.constant(identity(5)), ops::causal_mask<double>(5));
    for (int r = 0; r < 5; ++r) {
      double s = 0;
      for (int c = 0; c < 5; ++c) s += y.value().at(r, c);
      CHECK(std::abs(s - 1) <= 1e-9);
      for (int c = r + 1; c < 5; ++c) CHECK(y.value().at(r, c) == 0.0);
    }
  }
  SUBCASE("fully masked row is rejected") {
    Tensor<double> mask = Tensor<double>::matrix(2, 2);
    mask.at(0, 0) = mask.at(0, 1) = -std::numeric_limits<double>::infinity();
    auto x = g.constant(random_tensor({2, 2}, rng));
    CHECK_THROWS_AS(ops::scaled_dot_attention(x, x, x, mask), DomainError);
  }
}

TEST_CASE("causal mask layout") {
  CHECK(ops::causal_mask<double>(1).at(0, 0) == 0.0);
  auto m = ops::causal_mask<double>(3);
  int masked = 0;
  for (double v : m.values()) masked += std::isinf(v);
  CHECK(masked == 3);
  CHECK_THROWS_AS(ops::causal_mask<double>(0), DimensionError);
}

TEST_CASE("causally masked attention ignores later positions") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 6;
    Tensor<double> q = random_tensor({T, 4}, rng), k = random_tensor({T, 4}, rng), v = random_tensor({T, 4}, rng);
    const int t = static_cast<int>(rng() % T);
    Tensor<double> k2 = k, v2 = v;
    for (int r = t + 1; r < T; ++r)
      for (int c = 0; c < 4; ++c) {
        k2.at(r, c) += 1.0;
        v2.at(r, c) -= 2.0;
      }
    Graph<double> g(false);
    auto mask = ops::causal_mask<double>(T);
    auto a = ops::scaled_dot_attention(g.constant(q), g.constant(k), g.constant(v), mask, 2, T);
    auto b = ops::scaled_dot_attention(g.constant(q), g.constant(k2), g.constant(v2), mask, 2, T);
    for (int r = 0; r <= t; ++r)
      for (int c = 0; c < 4; ++c) CHECK(a.value().at(r, c) == b.value().at(r, c));
  }
}

TEST_CASE("attention gradients, grouped multi-head with mask") {
  std::mt19937_64 rng(16);
  ParameterSet<double> ps;
  auto& q = random_param(ps, "q", {4, 4}, rng);
  auto& k = random_param(ps, "k", {4, 4}, rng);
  auto& v = random_param(ps, "v", {4, 6}, rng);
  auto mask = ops::causal_mask<double>(2);
  auto r = grad_check(ps, [&](Graph<double>& g) {
    return project(ops::scaled_dot_attention(g.param(q), g.param(k), g.param(v), mask, 2, 2));
  });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("hierarchical softmax posterior") {
  std::vector<double> logits(256, 0.0);
  logits[0] = 0;
  auto p = ops::hsoftmax_posterior<double>(logits);
  CHECK(p[0] == doctest::Approx(0.5));
  for (int c = 1; c < 256; ++c) CHECK(p[static_cast<std::size_t>(c)] == doctest::Approx(0.5 / 255));
  logits[0] = 60;
  p = ops::hsoftmax_posterior<double>(logits);
  CHECK(p[0] > 1 - 1e-12);
  std::mt19937_64 rng(17);
  for (auto& v : logits) v = std::normal_distribution<double>(0, 4)(rng);
  p = ops::hsoftmax_posterior<double>(logits);
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1) < 1e-12);
}

TEST_CASE("hierarchical softmax nll matches -log posterior and has exact gradients") {
  std::mt19937_64 rng(18);
  ParameterSet<double> ps;
  auto& logits = random_param(ps, "logits", {4, 6}, rng, 2.0);
  const std::vector<int> targets{0, 3, 5, 1};
  {
    Graph<double> g(false);
    auto nll = ops::hsoftmax_nll(g.param(logits), targets);
    double expect = 0;
    for (int t = 0; t < 4; ++t) expect -= std::log(ops::hsoftmax_posterior<double>(logits.value.row(t))[targets[t]]) / 4;
    CHECK(nll.value()[0] == doctest::Approx(expect).epsilon(1e-12));
  }
  auto r = grad_check(ps, [&](Graph<double>& g) { return ops::hsoftmax_nll(g.param(logits), targets); });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("mse gradients") {
  std::mt19937_64 rng(19);
  ParameterSet<double> ps;
  auto& x = random_param(ps, "x", {3, 4}, rng);
  const Tensor<double> target = random_tensor({3, 4}, rng);
  auto r = grad_check(ps, [&](Graph<double>& g) { return ops::mse(g.param(x), target); });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("multi-head self-attention layer gradients") {
  std::mt19937_64 rng(20);
  ParameterSet<double> ps;
  MultiHeadSelfAttention<double> mha(ps, "mha", 4, 4, 2, rng);
  for (auto& p : ps) init_uniform(*p, 0.8, rng);
  auto& x = random_param(ps, "x", {6, 4}, rng);
  auto mask = ops::causal_mask<double>(3);
  auto r = grad_check(ps, [&](Graph<double>& g) { return project(mha(g.param(x), 3, mask)); });
  INFO(r.worst);
  CHECK(r.max_rel_error <= kTol);
}

TEST_CASE("adam learning-rate schedule") {
  AdamConfig cfg;
  cfg.base_lr = 0.01;
  cfg.decay_rate = 0.9886;
  cfg.decay_interval = 5000;
  CHECK(decayed_learning_rate(cfg, 0) == doctest::Approx(0.01));
  CHECK(decayed_learning_rate(cfg, 5000) == doctest::Approx(0.009886).epsilon(1e-12));
  double prev = 1;
  for (long s = 0; s < 20000; s += 137) {
    const double lr = decayed_learning_rate(cfg, s);
    CHECK(lr > 0);
    CHECK(lr <= prev);
    prev = lr;
  }
  AdamConfig spec;
  spec.base_lr = 0.001;
  spec.decay_rate = 0.9886;
  spec.decay_interval = 250;
  CHECK(decayed_learning_rate(spec, 250) == doctest::Approx(0.001 * 0.9886).epsilon(1e-12));
  AdamConfig bad = cfg;
  bad.decay_rate = 1.5;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ParameterSet<float> ps;
  auto& w = ps.add("w", {3});
  w.value = Tensor<float>({3}, std::vector<float>{1, -2, 3});
  Adam<float> opt(ps, {});
  ps.zero_grad();
  opt.step();
  CHECK(w.value.storage() == std::vector<float>{1, -2, 3});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam descends a scalar quadratic monotonically") {
  ParameterSet<double> ps;
  auto& w = ps.add("w", {1});
  w.value[0] = 1.0;
  AdamConfig cfg;
  cfg.base_lr = 0.01;
  Adam<double> opt(ps, cfg);
  double prev = 1.0;
  for (int i = 0; i < 100; ++i) {
    ps.zero_grad();
    w.grad[0] = 2 * w.value[0];
    opt.step();
    CHECK(std::abs(w.value[0]) < std::abs(prev));
    prev = w.value[0];
  }
  CHECK(prev < 0.5);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  ParameterSet<float> ps;
  ps.add("layer.weight", {2});
  Adam<float> opt(ps, {});
  ps.zero_grad();
  ps.get("layer.weight").grad[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    opt.step();
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
}

TEST_CASE("forward passes are deterministic") {
  auto run = [] {
    std::mt19937_64 rng(21);
    ParameterSet<float> ps;
    BiGruLayer<float> gru(ps, "g", 3, 4, rng);
    Graph<float> g(false);
    Tensor<float> x({5, 3});
    for (auto& v : x.values()) v = std::uniform_real_distribution<float>(-1, 1)(rng);
    return gru(g.constant(x)).value().storage();
  };
  CHECK(run() == run());
}
