#ifndef HNETPP_LATENT_HPP
#define HNETPP_LATENT_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/nn.hpp"
#include "hnetpp/rng.hpp"

namespace hnetpp {

/// summary (1 x d) -> tanh(hidden) -> [mu, log sigma] (1 x 2 d_xi)
template <typename Real>
struct PriorHead {
  nn::Linear<Real> hidden;
  nn::Linear<Real> out;

  static PriorHead create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t width,
                          std::size_t latent_dim, Rng& rng) {
    PriorHead h;
    h.hidden = nn::Linear<Real>::create(store, name + ".hidden", in, width, rng);
    h.out = nn::Linear<Real>::create(store, name + ".out", width, 2 * latent_dim, rng);
    return h;
  }
};

/// Two independent heads over the same pooled summary, one per latent.
template <typename Real>
struct PriorHeads {
  std::array<PriorHead<Real>, 2> heads;
  std::size_t latent_dim = 0;

  static PriorHeads create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t width,
                           std::size_t latent_dim, Rng& rng) {
    if (latent_dim == 0) throw ConfigError(name + ": latent dimension must be positive");
    PriorHeads p;
    p.heads[0] = PriorHead<Real>::create(store, name + ".head1", in, width, latent_dim, rng);
    p.heads[1] = PriorHead<Real>::create(store, name + ".head2", in, width, latent_dim, rng);
    p.latent_dim = latent_dim;
    return p;
  }
};

template <typename Real>
struct Posterior {
  std::array<Var<Real>, 2> mu;
  std::array<Var<Real>, 2> log_sigma;
  std::array<Var<Real>, 2> sigma;
};

template <typename Real>
struct LatentSample {
  std::array<Var<Real>, 2> xi;
  std::array<Tensor<Real>, 2> noise;  // epsilon used, zeros in eval mode
};

/// Mean over chunk rows, then both heads.
template <typename Real>
Posterior<Real> infer_posterior(Graph<Real>& g, const Var<Real>& summary, const PriorHeads<Real>& heads) {
  Posterior<Real> post;
  const std::size_t d = heads.latent_dim;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& h = heads.heads[i];
    Var<Real> out = h.out(g, ad::tanh(h.hidden(g, summary)));
    post.mu[i] = ad::slice(out, 1, 0, d);
    post.log_sigma[i] = ad::slice(out, 1, d, 2 * d);
    post.sigma[i] = ad::exp(post.log_sigma[i]);
  }
  return post;
}

/// Reparameterized draw xi = mu + sigma * eps with eps ~ N(0, I) from `seed`.
template <typename Real>
Var<Real> reparameterize(const Var<Real>& mu, const Var<Real>& sigma, std::uint64_t seed, Tensor<Real>* noise_out = nullptr) {
  Rng rng(seed);
  Tensor<Real> eps(mu.shape());
  for (auto& e : eps.values()) e = static_cast<Real>(rng.normal());
  if (noise_out) *noise_out = eps;
  return mu + sigma * mu.graph().constant(std::move(eps));
}

/// Train mode samples both latents; eval mode returns xi = mu.
template <typename Real>
LatentSample<Real> sample_latent(const Posterior<Real>& post, std::uint64_t seed, bool train) {
  LatentSample<Real> s;
  for (std::size_t i = 0; i < 2; ++i) {
    if (train) {
      s.xi[i] = reparameterize(post.mu[i], post.sigma[i], derive_seed(seed, {i}), &s.noise[i]);
    } else {
      s.xi[i] = post.mu[i];
      s.noise[i] = Tensor<Real>(post.mu[i].shape());
    }
  }
  return s;
}

/// sum over both latents and all dims of 1/2 (mu^2 + sigma^2 - 1 - ln sigma^2).
template <typename Real>
Var<Real> kl_to_standard_normal(const Posterior<Real>& post) {
  Var<Real> total;
  for (std::size_t i = 0; i < 2; ++i) {
    Var<Real> term = ad::square(post.mu[i]) + ad::square(post.sigma[i]) - ad::scale(post.log_sigma[i], Real{2});
    Var<Real> kl = ad::scale(ad::add_scalar(term, Real{-1}), Real{0.5});
    total = total.valid() ? total + ad::sum(kl) : ad::sum(kl);
  }
  return total;
}

/// Closed form for plain values, one latent.
inline double kl_closed_form(std::span<const double> mu, std::span<const double> sigma) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    kl += 0.5 * (mu[i] * mu[i] + sigma[i] * sigma[i] - 1.0 - 2.0 * std::log(sigma[i]));
  }
  return kl;
}

/// Linear warm-up of the KL weight from 0 to `target` over `warmup_steps`.
inline double kl_weight(std::size_t step, double target, std::size_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return target;
  return target * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace hnetpp

#endif  // HNETPP_LATENT_HPP
