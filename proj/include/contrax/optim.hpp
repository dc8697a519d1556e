#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "contrax/common.hpp"
#include "contrax/encoder.hpp"

namespace contrax {

// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total_steps)) / 2
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
  if (total_steps == 0) throw Error("cosine_lr: total_steps must be >= 1");
  if (step > total_steps) throw Error("cosine_lr: step out of range");
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with bias correction followed by decoupled weight decay
// p <- p - lr * weight_decay * p. Moments are allocated on the first step and
// matched to tensors by position.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const AdamWConfig& config) : config_(config) {}

  const AdamWConfig& config() const { return config_; }

  // step_index counts from 1.
  void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads, double lr,
            std::size_t step_index) {
    if (params.size() != grads.size()) throw Error("adamw: parameter/gradient tensor count mismatch");
    if (step_index == 0) throw Error("adamw: step_index counts from 1");
    for (std::size_t t = 0; t < grads.size(); ++t) {
      if (grads[t].data.size() != params[t].data.size()) {
        throw Error("adamw: gradient shape mismatch for tensor '" + params[t].name + "'");
      }
      for (double g : grads[t].data) {
        if (!std::isfinite(g)) throw Error("adamw: non-finite gradient in tensor '" + params[t].name + "'");
      }
    }
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.data.size(), 0.0);
        second_.emplace_back(p.data.size(), 0.0);
      }
    } else if (first_.size() != params.size()) {
      throw Error("adamw: tensor list changed between steps");
    }

    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const auto t = static_cast<double>(step_index);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    const double decay = lr * config_.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k].data;
      const auto g = grads[k].data;
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        p[i] -= decay * p[i];
      }
    }
  }

  const std::vector<std::vector<double>>& first_moments() const { return first_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_; }

 private:
  AdamWConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace contrax
