#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ga2c/common.hpp"
#include "ga2c/tensor.hpp"

namespace ga2c {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient, classic style
};

// Standard Adam with bias correction. Moment buffers are keyed by position,
// so the parameter list must stay stable across steps.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {
    decay_.assign(params_.size(), config_.weight_decay);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
      v_[i].assign(params_[i].size(), 0.0);
    }
  }

  // Per-parameter weight decay override (e.g. decay on the first GCN layer only).
  void set_weight_decay(std::size_t param_idx, double decay) { decay_.at(param_idx) = decay; }

  std::size_t step_count() const { return step_; }

  // One update from the gradients currently held by the parameters.
  // A parameter without a populated gradient is treated as zero-gradient.
  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& w = params_[p].values();
      const bool has_grad = params_[p].has_grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        double g = has_grad ? params_[p].grad()[i] : 0.0;
        if (std::isnan(g))
          throw TrainingError("NaN gradient in parameter " + std::to_string(p) +
                              " at index " + std::to_string(i) + " on Adam step " +
                              std::to_string(step_));
        g += decay_[p] * w[i];
        m_[p][i] = config_.beta1 * m_[p][i] + (1.0 - config_.beta1) * g;
        v_[p][i] = config_.beta2 * v_[p][i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m_[p][i] / bc1;
        const double vhat = v_[p][i] / bc2;
        w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<double> decay_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

// Glorot-uniform initialization for a fan_in x fan_out weight matrix.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * limit;
  return Tensor({fan_in, fan_out}, std::move(w), /*requires_grad=*/true);
}

}  // namespace ga2c
