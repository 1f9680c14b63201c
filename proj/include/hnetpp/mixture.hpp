#ifndef HNETPP_MIXTURE_HPP
#define HNETPP_MIXTURE_HPP

// Discretized logistic mixture over byte values 0..255.
//
// Component k puts mass sigma((b + 0.5 - mu_k)/s_k) - sigma((b - 0.5 - mu_k)/s_k)
// on bin b, with the lowest bin open to -inf and the highest to +inf, so the
// PMF sums to one exactly in real arithmetic. s_k = exp(max(log_scale, -7)).
// Bin log-masses use
//   log(sigma(a) - sigma(c)) = log sigma(a) + log sigma(-c) + log(1 - exp(c - a))
// which stays finite for any finite parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hnetpp/autodiff.hpp"

namespace hnetpp {

inline constexpr std::size_t kMixtureComponents = 5;
inline constexpr std::size_t kMixtureWidth = 3 * kMixtureComponents;
inline constexpr std::size_t kByteValues = 256;
inline constexpr double kMinLogScale = -7.0;

/// One position: locations on the byte scale, log-scales, weight logits.
struct MixtureParams {
  std::array<double, kMixtureComponents> location{};
  std::array<double, kMixtureComponents> log_scale{};
  std::array<double, kMixtureComponents> logit{};
};

namespace detail {

/// log sigma(x), stable for any finite x.
inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Log bin mass of one logistic component for all 256 bins, and optionally
/// d/d location and d/d log_scale per bin.
inline void component_log_bins(double mu, double log_scale, double* log_bins, double* d_mu = nullptr,
                               double* d_log_scale = nullptr) {
  const bool clamped = !(log_scale > kMinLogScale);
  const double inv = std::exp(-std::max(log_scale, kMinLogScale));
  // edge j sits at j - 0.5 for j = 1..255
  std::array<double, kByteValues + 1> x{};
  std::array<double, kByteValues + 1> ls{};
  for (std::size_t j = 1; j < kByteValues; ++j) {
    x[j] = (static_cast<double>(j) - 0.5 - mu) * inv;
    ls[j] = log_sigmoid(x[j]);
  }
  const double width_term = std::log(-std::expm1(-inv));
  const double width_slope = -inv / std::expm1(inv);
  for (std::size_t b = 0; b < kByteValues; ++b) {
    const bool open_low = b == 0;
    const bool open_high = b == kByteValues - 1;
    double lp = 0.0, gmu = 0.0, gls = 0.0;
    if (open_low) {
      const double a = x[1];
      lp = ls[1];
      const double s = sigmoid(-a);
      gmu = -inv * s;
      gls = -a * s;
    } else if (open_high) {
      const double c = x[kByteValues - 1];
      lp = ls[kByteValues - 1] - c;  // log sigma(-c)
      const double s = sigmoid(c);
      gmu = inv * s;
      gls = c * s;
    } else {
      const double a = x[b + 1];
      const double c = x[b];
      lp = ls[b + 1] + (ls[b] - c) + width_term;
      const double sa = sigmoid(-a);
      const double sc = sigmoid(c);
      gmu = -inv * (sa - sc);
      gls = -a * sa + c * sc + width_slope;
    }
    log_bins[b] = lp;
    if (d_mu) d_mu[b] = gmu;
    if (d_log_scale) d_log_scale[b] = clamped ? 0.0 : gls;
  }
}

inline std::array<double, kMixtureComponents> log_softmax(const std::array<double, kMixtureComponents>& w) {
  const double mx = *std::max_element(w.begin(), w.end());
  double z = 0.0;
  for (double v : w) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  std::array<double, kMixtureComponents> out{};
  for (std::size_t k = 0; k < kMixtureComponents; ++k) out[k] = w[k] - lz;
  return out;
}

}  // namespace detail

/// Log-probabilities of all 256 byte values.
inline std::array<double, kByteValues> mixture_log_pmf(const MixtureParams& p) {
  const auto lw = detail::log_softmax(p.logit);
  std::array<std::array<double, kByteValues>, kMixtureComponents> lb{};
  for (std::size_t k = 0; k < kMixtureComponents; ++k) detail::component_log_bins(p.location[k], p.log_scale[k], lb[k].data());
  std::array<double, kByteValues> out{};
  for (std::size_t b = 0; b < kByteValues; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kMixtureComponents; ++k) mx = std::max(mx, lw[k] + lb[k][b]);
    double s = 0.0;
    for (std::size_t k = 0; k < kMixtureComponents; ++k) s += std::exp(lw[k] + lb[k][b] - mx);
    out[b] = mx + std::log(s);
  }
  return out;
}

inline double mixture_log_prob(const MixtureParams& p, std::size_t target) {
  if (target >= kByteValues) throw ShapeError("mixture_log_prob: target outside 0..255");
  return mixture_log_pmf(p)[target];
}

/// Reads row `t` of a T x 15 tensor laid out [locations | log-scales | logits].
template <typename Real>
MixtureParams mixture_row(const Tensor<Real>& params, std::size_t t) {
  MixtureParams p;
  const std::size_t c = kMixtureComponents;
  for (std::size_t k = 0; k < c; ++k) {
    p.location[k] = static_cast<double>(params(t, k));
    p.log_scale[k] = static_cast<double>(params(t, c + k));
    p.logit[k] = static_cast<double>(params(t, 2 * c + k));
  }
  return p;
}

namespace ad {

/// Fused primitive: T x 15 mixture parameters -> T x 256 log-PMF.
template <typename Real>
Var<Real> mixture_log_pmf(const Var<Real>& params) {
  const auto& pv = params.value();
  if (pv.cols() != kMixtureWidth) {
    throw ShapeError("mixture_log_pmf: expected T x 15 parameters, got " + shape_string(pv.shape()));
  }
  const std::size_t rows = pv.rows();
  auto out = Tensor<Real>::matrix(rows, kByteValues);
  for (std::size_t t = 0; t < rows; ++t) {
    const auto lp = hnetpp::mixture_log_pmf(mixture_row(pv, t));
    for (std::size_t b = 0; b < kByteValues; ++b) out(t, b) = static_cast<Real>(lp[b]);
  }
  const std::size_t ip = params.id();
  return params.graph().record("mixture_log_pmf", std::move(out), {ip}, [ip, rows](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* gp = g.grad_sink(ip);
    if (!gp) return;
    const auto& pv2 = g.value(ip);
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    constexpr std::size_t C = kMixtureComponents;
    std::array<std::array<double, kByteValues>, C> lb{}, dmu{}, dls{};
    for (std::size_t t = 0; t < rows; ++t) {
      const MixtureParams p = mixture_row(pv2, t);
      const auto lw = hnetpp::detail::log_softmax(p.logit);
      for (std::size_t k = 0; k < C; ++k) {
        hnetpp::detail::component_log_bins(p.location[k], p.log_scale[k], lb[k].data(), dmu[k].data(), dls[k].data());
      }
      std::array<double, C> g_mu{}, g_ls{}, g_w{};
      double g_total = 0.0;
      for (std::size_t b = 0; b < kByteValues; ++b) {
        const double up = static_cast<double>(gy(t, b));
        if (up == 0.0) continue;
        g_total += up;
        const double yb = static_cast<double>(y(t, b));
        for (std::size_t k = 0; k < C; ++k) {
          const double r = std::exp(lw[k] + lb[k][b] - yb) * up;  // responsibility times upstream
          g_mu[k] += r * dmu[k][b];
          g_ls[k] += r * dls[k][b];
          g_w[k] += r;
        }
      }
      for (std::size_t k = 0; k < C; ++k) {
        (*gp)(t, k) += static_cast<Real>(g_mu[k]);
        (*gp)(t, C + k) += static_cast<Real>(g_ls[k]);
        // d/dw_j of log_softmax term: r_j - pi_j per unit upstream
        (*gp)(t, 2 * C + k) += static_cast<Real>(g_w[k] - std::exp(lw[k]) * g_total);
      }
    }
  });
}

}  // namespace ad
}  // namespace hnetpp

#endif  // HNETPP_MIXTURE_HPP
