#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "darsvs/tensor.hpp"

namespace darsvs {

struct AdamConfig {
  double base_lr = 1e-3;
  double decay_rate = 1.0;     // multiplicative factor per decay_interval steps
  long decay_interval = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;      // global gradient-norm clip; 0 disables
};

// lr(step) = base_lr * decay_rate^(step / decay_interval), continuous in step.
inline double decayed_learning_rate(const AdamConfig& cfg, long step) {
  return cfg.base_lr * std::pow(cfg.decay_rate, static_cast<double>(step) / static_cast<double>(cfg.decay_interval));
}

inline void validate(const AdamConfig& cfg) {
  if (!(cfg.base_lr > 0)) throw ConfigError("adam: base learning rate must be positive");
  if (!(cfg.decay_rate > 0 && cfg.decay_rate <= 1)) throw ConfigError("adam: decay rate must lie in (0, 1]");
  if (cfg.decay_interval <= 0) throw ConfigError("adam: decay interval must be positive");
  if (cfg.clip_norm < 0) throw ConfigError("adam: clip norm must be >= 0");
}

struct AdamMoments {
  std::string name;
  std::vector<double> first;
  std::vector<double> second;
};

// Adam state is kept in double regardless of parameter precision.
struct AdamState {
  long step_count = 0;
  std::vector<AdamMoments> moments;
};

template <class Real>
class Adam {
 public:
  Adam(ParameterSet<Real>& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    validate(cfg_);
    for (auto& p : params_) {
      if (!p->trainable) continue;
      state_.moments.push_back({p->name, std::vector<double>(p->value.size()), std::vector<double>(p->value.size())});
    }
  }

  const AdamConfig& config() const { return cfg_; }
  const AdamState& state() const { return state_; }
  long step_count() const { return state_.step_count; }
  double effective_lr() const { return decayed_learning_rate(cfg_, state_.step_count); }

  void restore(AdamState s) {
    for (const auto& m : s.moments) {
      const auto* p = params_.find(m.name);
      if (!p || p->value.size() != m.first.size() || m.first.size() != m.second.size())
        throw DataError("optimizer state does not match parameter " + m.name);
    }
    if (s.moments.size() != state_.moments.size()) throw DataError("optimizer state covers a different parameter set");
    state_ = std::move(s);
  }

  // Applies one update from the gradients currently stored on the parameters.
  void step() {
    double norm2 = 0;
    for (auto& p : params_) {
      if (!p->trainable) continue;
      if (!p->grad.same_shape(p->value)) p->zero_grad();
      for (Real gval : p->grad.values()) {
        if (!std::isfinite(static_cast<double>(gval)))
          throw TrainingError("non-finite gradient in parameter " + p->name);
        norm2 += static_cast<double>(gval) * gval;
      }
    }
    double clip = 1.0;
    if (cfg_.clip_norm > 0 && norm2 > cfg_.clip_norm * cfg_.clip_norm) clip = cfg_.clip_norm / std::sqrt(norm2);

    const double lr = effective_lr();
    const long t = state_.step_count + 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    std::size_t slot = 0;
    for (auto& p : params_) {
      if (!p->trainable) continue;
      auto& m = state_.moments[slot++];
      auto values = p->value.values();
      auto grads = p->grad.values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double gi = clip * static_cast<double>(grads[i]);
        m.first[i] = cfg_.beta1 * m.first[i] + (1 - cfg_.beta1) * gi;
        m.second[i] = cfg_.beta2 * m.second[i] + (1 - cfg_.beta2) * gi * gi;
        const double mhat = m.first[i] / bc1;
        const double vhat = m.second[i] / bc2;
        values[i] = static_cast<Real>(values[i] - lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
    state_.step_count = t;
  }

 private:
  ParameterSet<Real>& params_;
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace darsvs
