#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "prorank/common.hpp"
#include "prorank/model.hpp"

namespace prorank {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class T>
struct OptimizerState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;

  static OptimizerState zeros(std::size_t n) { return {std::vector<T>(n, T(0)), std::vector<T>(n, T(0)), 0}; }
};

// Decoupled weight decay Adam. Updates policy and state in place.
template <class T>
void adamw_step(PolicyState<T>& policy, const GradientSet<T>& grads, OptimizerState<T>& opt, const AdamWConfig& cfg) {
  if (grads.size() != policy.params.size() || opt.m.size() != policy.params.size() ||
      opt.v.size() != policy.params.size()) {
    throw usage_error("adamw: gradient/optimizer shapes do not match the policy");
  }
  if (!(cfg.lr > 0.0)) throw usage_error("adamw: learning rate must be positive");
  for (auto g : grads) {
    if (!std::isfinite(static_cast<double>(g))) throw divergence_error("adamw: non-finite gradient entry");
  }
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
    opt.m[i] = static_cast<T>(m);
    opt.v[i] = static_cast<T>(v);
    const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    policy.params[i] = static_cast<T>(static_cast<double>(policy.params[i]) * decay - cfg.lr * update);
  }
}

}  // namespace prorank
