#pragma once

#include <cmath>
#include <random>
#include <string>

#include "darsvs/autograd.hpp"

namespace darsvs {

template <class Real>
class AffineLayer {
 public:
  AffineLayer() = default;
  AffineLayer(ParameterSet<Real>& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
              bool with_bias = true)
      : in_(in), out_(out) {
    weight_ = &ps.add(name + ".weight", {in, out});
    init_uniform(*weight_, std::sqrt(6.0 / (in + out)), rng);
    if (with_bias) bias_ = &ps.add(name + ".bias", {out});
  }

  Var<Real> operator()(Var<Real> x) const {
    Graph<Real>& g = *x.graph;
    return ops::affine(x, g.param(*weight_), bias_ ? g.param(*bias_) : Var<Real>{});
  }

  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter<Real>* weight_ = nullptr;
  Parameter<Real>* bias_ = nullptr;
  int in_ = 0, out_ = 0;
};

template <class Real>
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(ParameterSet<Real>& ps, const std::string& name, int in, int units, std::mt19937_64& rng) : units_(units) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(units));
    const char* gates[] = {"z", "r", "h"};
    for (int i = 0; i < 3; ++i) {
      w_[i] = &ps.add(name + ".w_" + gates[i], {in, units});
      u_[i] = &ps.add(name + ".u_" + gates[i], {units, units});
      b_[i] = &ps.add(name + ".b_" + gates[i], {units});
      init_uniform(*w_[i], bound, rng);
      init_uniform(*u_[i], bound, rng);
      init_uniform(*b_[i], bound, rng);
    }
  }

  ops::GruVars<Real> bind(Graph<Real>& g) const {
    return {g.param(*w_[0]), g.param(*w_[1]), g.param(*w_[2]), g.param(*u_[0]), g.param(*u_[1]),
            g.param(*u_[2]), g.param(*b_[0]), g.param(*b_[1]), g.param(*b_[2])};
  }

  Var<Real> operator()(Var<Real> x, bool reverse = false, Var<Real> h0 = {}) const {
    return ops::gru(x, bind(*x.graph), reverse, h0);
  }

  int units() const { return units_; }

 private:
  Parameter<Real>* w_[3] = {};
  Parameter<Real>* u_[3] = {};
  Parameter<Real>* b_[3] = {};
  int units_ = 0;
};

// Concatenates forward and backward GRU outputs per frame: [T x 2*units].
template <class Real>
class BiGruLayer {
 public:
  BiGruLayer() = default;
  BiGruLayer(ParameterSet<Real>& ps, const std::string& name, int in, int units, std::mt19937_64& rng)
      : fwd_(ps, name + ".fwd", in, units, rng), bwd_(ps, name + ".bwd", in, units, rng) {}

  Var<Real> operator()(Var<Real> x) const { return ops::concat_cols<Real>({fwd_(x, false), bwd_(x, true)}); }

  int out() const { return 2 * fwd_.units(); }

 private:
  GruLayer<Real> fwd_, bwd_;
};

template <class Real>
class CausalConv1dLayer {
 public:
  CausalConv1dLayer() = default;
  CausalConv1dLayer(ParameterSet<Real>& ps, const std::string& name, int kernel, int in, int out, std::mt19937_64& rng)
      : out_(out) {
    kernel_ = &ps.add(name + ".kernel", {kernel, in, out});
    bias_ = &ps.add(name + ".bias", {out});
    init_uniform(*kernel_, 1.0 / std::sqrt(static_cast<double>(kernel * in)), rng);
  }

  Var<Real> operator()(Var<Real> x, int segment_len) const {
    Graph<Real>& g = *x.graph;
    return ops::conv1d_causal(x, g.param(*kernel_), g.param(*bias_), segment_len);
  }

  int out() const { return out_; }

 private:
  Parameter<Real>* kernel_ = nullptr;
  Parameter<Real>* bias_ = nullptr;
  int out_ = 0;
};

template <class Real>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterSet<Real>& ps, const std::string& name, int channels) {
    gamma_ = &ps.add(name + ".gamma", {channels});
    beta_ = &ps.add(name + ".beta", {channels});
    gamma_->value.fill(Real(1));
    state_.running_mean = &ps.add(name + ".running_mean", {channels}, false);
    state_.running_var = &ps.add(name + ".running_var", {channels}, false);
    state_.running_var->value.fill(Real(1));
  }

  Var<Real> operator()(Var<Real> x, bool training) const {
    Graph<Real>& g = *x.graph;
    return ops::batch_norm(x, g.param(*gamma_), g.param(*beta_), state_, training);
  }

 private:
  Parameter<Real>* gamma_ = nullptr;
  Parameter<Real>* beta_ = nullptr;
  ops::BatchNormState<Real> state_;
};

// Q/K/V projections, per-group masked scaled dot-product attention over
// `heads` heads, and an output projection.
template <class Real>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterSet<Real>& ps, const std::string& name, int model_dim, int proj_dim, int heads,
                         std::mt19937_64& rng)
      : heads_(heads) {
    if (heads < 1 || proj_dim % heads != 0)
      throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide projection width " +
                        std::to_string(proj_dim));
    q_ = AffineLayer<Real>(ps, name + ".query", model_dim, proj_dim, rng);
    k_ = AffineLayer<Real>(ps, name + ".key", model_dim, proj_dim, rng);
    v_ = AffineLayer<Real>(ps, name + ".value", model_dim, proj_dim, rng);
    o_ = AffineLayer<Real>(ps, name + ".output", proj_dim, model_dim, rng);
  }

  Var<Real> operator()(Var<Real> x, int group_len, const Tensor<Real>& mask) const {
    return o_(ops::scaled_dot_attention(q_(x), k_(x), v_(x), mask, heads_, group_len));
  }

 private:
  AffineLayer<Real> q_, k_, v_, o_;
  int heads_ = 1;
};

}  // namespace darsvs
