#ifndef HNETPP_MIXER_HPP
#define HNETPP_MIXER_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/byte_frontend.hpp"
#include "hnetpp/nn.hpp"

namespace hnetpp {

/// Single post-norm transformer block over chunk rows:
///   h  = x + pos
///   z~ = LayerNorm(MHA(h) + h)
///   z* = LayerNorm(FFN(z~) + z~),  FFN = W2 gelu(W1 z~)
template <typename Real>
struct MixerParams {
  nn::Linear<Real> query, key, value, output;
  nn::LayerNorm<Real> attn_norm;
  nn::Linear<Real> ffn_in, ffn_out;
  nn::LayerNorm<Real> ffn_norm;
  std::size_t heads = 4;
  Real dropout = Real{0.1};
  bool causal = false;

  static MixerParams create(ParameterStore<Real>& store, const std::string& name, std::size_t width,
                            std::size_t ffn_hidden, std::size_t heads, Real dropout, bool causal, Rng& rng) {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError(name + ": width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                        " heads");
    }
    if (width % 2 != 0) throw ConfigError(name + ": width must be even for positional encodings");
    if (ffn_hidden == 0) throw ConfigError(name + ": feed-forward width must be positive");
    MixerParams p;
    p.query = nn::Linear<Real>::create(store, name + ".query", width, width, rng);
    p.key = nn::Linear<Real>::create(store, name + ".key", width, width, rng);
    p.value = nn::Linear<Real>::create(store, name + ".value", width, width, rng);
    p.output = nn::Linear<Real>::create(store, name + ".output", width, width, rng);
    p.attn_norm = nn::LayerNorm<Real>::create(store, name + ".attn_norm", width);
    p.ffn_in = nn::Linear<Real>::create(store, name + ".ffn_in", width, ffn_hidden, rng);
    p.ffn_out = nn::Linear<Real>::create(store, name + ".ffn_out", ffn_hidden, width, rng);
    p.ffn_norm = nn::LayerNorm<Real>::create(store, name + ".ffn_norm", width);
    p.heads = heads;
    p.dropout = dropout;
    p.causal = causal;
    return p;
  }

  std::size_t width() const { return query.in_features(); }
  std::size_t ffn_hidden() const { return ffn_in.out_features(); }

  std::vector<Parameter<Real>*> parameters() const {
    return {query.weight, query.bias, key.weight,    key.bias,    value.weight,   value.bias,
            output.weight, output.bias, attn_norm.gamma, attn_norm.beta, ffn_in.weight, ffn_in.bias,
            ffn_out.weight, ffn_out.bias, ffn_norm.gamma, ffn_norm.beta};
  }
};

/// Trainable scalars in the block.
template <typename Real>
std::size_t count_mixer_params(const MixerParams<Real>& p) {
  std::size_t n = 0;
  for (const auto* param : p.parameters()) n += param->value.size();
  return n;
}

/// 4(d^2 + d) attention + (d f + f) + (f d + d) feed-forward + 4d norms.
constexpr std::size_t mixer_param_formula(std::size_t d, std::size_t f) {
  return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
}

/// Applies the block to K x d chunk rows. When `attention` is non-null the
/// per-head attention matrices (after softmax, before dropout) are stored.
template <typename Real>
Var<Real> mix(Graph<Real>& g, const Var<Real>& chunks, const MixerParams<Real>& p, bool train,
              std::vector<Tensor<Real>>* attention = nullptr) {
  using namespace ad;
  if (!chunks.valid() || chunks.rows() == 0) throw ShapeError("mix: empty chunk set");
  const std::size_t k = chunks.rows();
  const std::size_t d = p.width();
  if (chunks.cols() != d) {
    throw ShapeError("mix: chunk width " + std::to_string(chunks.cols()) + " != mixer width " + std::to_string(d));
  }
  const std::size_t dh = d / p.heads;
  Var<Real> h = chunks + g.constant(positional_table<Real>(k, d));
  Var<Real> q = p.query(g, h);
  Var<Real> kk = p.key(g, h);
  Var<Real> v = p.value(g, h);
  Var<Real> mask;
  if (p.causal && k > 1) {
    auto m = Tensor<Real>::matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) m(i, j) = static_cast<Real>(-1e9);
    mask = g.constant(std::move(m));
  }
  const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(dh));
  std::vector<Var<Real>> heads;
  for (std::size_t hd = 0; hd < p.heads; ++hd) {
    Var<Real> qh = slice(q, 1, hd * dh, (hd + 1) * dh);
    Var<Real> kh = slice(kk, 1, hd * dh, (hd + 1) * dh);
    Var<Real> vh = slice(v, 1, hd * dh, (hd + 1) * dh);
    Var<Real> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask.valid()) scores = scores + mask;
    Var<Real> weights = softmax(scores);
    if (attention) attention->push_back(weights.value());
    heads.push_back(matmul(dropout(weights, p.dropout, train), vh));
  }
  Var<Real> attended = p.output(g, concat(std::span<const Var<Real>>(heads), 1));
  Var<Real> mixed = p.attn_norm(g, attended + h);
  Var<Real> ff = p.ffn_out(g, dropout(gelu(p.ffn_in(g, mixed)), p.dropout, train));
  return p.ffn_norm(g, ff + mixed);
}

}  // namespace hnetpp

#endif  // HNETPP_MIXER_HPP
