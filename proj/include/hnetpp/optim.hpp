#ifndef HNETPP_OPTIM_HPP
#define HNETPP_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"

namespace hnetpp {

struct OptimizerConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 50'000;
  double min_lr = 1e-6;
  double clip_norm = 1.0;
  std::size_t total_steps = 500'000;  // cosine horizon

  void validate() const {
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) throw ConfigError("optim.beta1/beta2 must lie in (0, 1)");
    if (!(lr > 0)) throw ConfigError("optim.lr must be positive");
    if (!(min_lr >= 0 && min_lr <= lr)) throw ConfigError("optim.min_lr must lie in [0, optim.lr]");
    if (!(weight_decay >= 0)) throw ConfigError("optim.weight_decay must be nonnegative");
    if (!(eps > 0)) throw ConfigError("optim.eps must be positive");
    if (!(clip_norm > 0)) throw ConfigError("optim.clip_norm must be positive");
  }
};

/// Linear 0 -> lr over warmup_steps, then cosine from lr to min_lr, reaching
/// min_lr exactly at total_steps and staying there.
inline double lr_schedule(std::size_t step, const OptimizerConfig& c) {
  if (step < c.warmup_steps) return c.lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  if (step >= c.total_steps) return c.min_lr;
  if (step == c.warmup_steps) return c.lr;
  const double progress =
      static_cast<double>(step - c.warmup_steps) / static_cast<double>(c.total_steps - c.warmup_steps);
  return c.min_lr + (c.lr - c.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Global L2 norm of all parameter gradients.
template <typename Real>
double gradient_norm(const ParameterStore<Real>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (Real g : p->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Scales every gradient by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
template <typename Real>
double clip_gradients(ParameterStore<Real>& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const Real scale = static_cast<Real>(max_norm / norm);
    for (auto& p : params)
      for (Real& g : p->grad.values()) g *= scale;
  }
  return norm;
}

template <typename Real>
struct AdamState {
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;
  std::size_t steps = 0;

  void init(const ParameterStore<Real>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(Tensor<Real>(p->value.shape()));
      v.push_back(Tensor<Real>(p->value.shape()));
    }
    steps = 0;
  }
};

/// One decoupled-weight-decay Adam update at learning rate `lr`:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr wd p - lr m_hat / (sqrt(v_hat) + eps)
template <typename Real>
void adamw_step(ParameterStore<Real>& params, AdamState<Real>& state, double lr, const OptimizerConfig& c) {
  if (state.m.size() != params.size()) state.init(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Real g : params[i].grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in " + params[i].name);
    }
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * g;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * g * g;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double w = static_cast<double>(p.value[j]);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + c.eps);
      p.value[j] = static_cast<Real>(w - lr * c.weight_decay * w - lr * update);
    }
  }
}

}  // namespace hnetpp

#endif  // HNETPP_OPTIM_HPP
