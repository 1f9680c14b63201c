#ifndef HNETPP_OBJECTIVE_HPP
#define HNETPP_OBJECTIVE_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/mixture.hpp"

namespace hnetpp {

struct LossWeights {
  double kl = 0.1;
  double morph = 0.1;
  double aux = 0.05;
  double label_smoothing = 0.1;

  void validate() const {
    if (!(kl >= 0) || !(morph >= 0) || !(aux >= 0)) throw ConfigError("loss weights must be nonnegative");
    if (!(label_smoothing >= 0 && label_smoothing < 1)) throw ConfigError("label smoothing must lie in [0, 1)");
  }
};

inline constexpr double kBceClamp = 1e-7;

/// Smoothed target distribution: 1 - eps on the target, eps / 255 elsewhere.
template <typename Real>
Tensor<Real> smoothed_targets(std::span<const std::uint8_t> targets, double eps) {
  auto q = Tensor<Real>::matrix(targets.size(), kByteValues, static_cast<Real>(eps / 255.0));
  for (std::size_t t = 0; t < targets.size(); ++t) q(t, targets[t]) = static_cast<Real>(1.0 - eps);
  return q;
}

/// mean_t sum_b -q_{t,b} log p_t(b), from a T x 256 log-PMF.
template <typename Real>
Var<Real> lm_loss_from_log_pmf(const Var<Real>& log_pmf, std::span<const std::uint8_t> targets, double eps) {
  if (log_pmf.rows() != targets.size() || log_pmf.cols() != kByteValues) {
    throw ShapeError("lm_loss: " + shape_string(log_pmf.shape()) + " log-PMF for " + std::to_string(targets.size()) +
                     " targets");
  }
  Var<Real> q = log_pmf.graph().constant(smoothed_targets<Real>(targets, eps));
  return ad::scale(ad::sum(q * log_pmf), static_cast<Real>(-1.0 / static_cast<double>(targets.size())));
}

/// Label-smoothed NLL from T x 15 mixture parameters.
template <typename Real>
Var<Real> lm_loss(const Var<Real>& mixture_params, std::span<const std::uint8_t> targets, double eps) {
  return lm_loss_from_log_pmf(ad::mixture_log_pmf(mixture_params), targets, eps);
}

/// 0/1 indicator column over `length` positions; offset 0 is always a start.
template <typename Real>
Tensor<Real> boundary_indicator(const std::vector<std::size_t>& gold, std::size_t length) {
  auto y = Tensor<Real>::matrix(length, 1);
  y[0] = Real{1};
  for (std::size_t off : gold) {
    if (off >= length) {
      throw DataError("morph_loss: gold offset " + std::to_string(off) + " outside document of length " +
                      std::to_string(length));
    }
    y[off] = Real{1};
  }
  return y;
}

/// Mean BCE between level-1 boundary probabilities (T x 1) and gold starts.
template <typename Real>
Var<Real> morph_loss(const Var<Real>& probs, const std::vector<std::size_t>& gold) {
  const std::size_t n = probs.rows();
  Graph<Real>& g = probs.graph();
  const auto y = boundary_indicator<Real>(gold, n);
  auto one_minus_y = Tensor<Real>::matrix(n, 1);
  for (std::size_t t = 0; t < n; ++t) one_minus_y[t] = Real{1} - y[t];
  const Real lo = static_cast<Real>(kBceClamp);
  Var<Real> p = ad::clamp(probs, lo, Real{1} - lo);
  Var<Real> ll = g.constant(y) * ad::log(p) + g.constant(std::move(one_minus_y)) * ad::log(Real{1} - p);
  return ad::scale(ad::sum(ll), static_cast<Real>(-1.0 / static_cast<double>(n)));
}

/// Plain BCE for testing.
inline double morph_loss_value(const std::vector<double>& probs, const std::vector<std::size_t>& gold) {
  std::vector<char> y(probs.size(), 0);
  y.at(0) = 1;
  for (std::size_t off : gold) y.at(off) = 1;
  double s = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double p = std::min(std::max(probs[t], kBceClamp), 1.0 - kBceClamp);
    s += y[t] ? -std::log(p) : -std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

template <typename Real>
struct LossTerms {
  Var<Real> lm, kl, morph, aux, total;
};

namespace detail {

template <typename Real>
void require_finite(const Var<Real>& v, const char* name) {
  if (!v.valid()) return;
  if (!std::isfinite(static_cast<double>(v.item()))) {
    throw NumericError(std::string("non-finite ") + name + " loss: " + std::to_string(static_cast<double>(v.item())));
  }
}

}  // namespace detail

/// lm + lambda_kl kl + lambda_morph morph + lambda_aux aux. Missing terms
/// (invalid Vars) contribute nothing.
template <typename Real>
Var<Real> total_loss(const Var<Real>& lm, const Var<Real>& kl, const Var<Real>& morph, const Var<Real>& aux,
                     double kl_weight, double morph_weight, double aux_weight) {
  detail::require_finite(lm, "lm");
  detail::require_finite(kl, "kl");
  detail::require_finite(morph, "morph");
  detail::require_finite(aux, "aux");
  Var<Real> total = lm;
  auto add = [&](const Var<Real>& term, double w) {
    if (term.valid() && w != 0.0) total = total + ad::scale(term, static_cast<Real>(w));
  };
  add(kl, kl_weight);
  add(morph, morph_weight);
  add(aux, aux_weight);
  return total;
}

}  // namespace hnetpp

#endif  // HNETPP_OBJECTIVE_HPP
