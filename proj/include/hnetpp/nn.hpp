#ifndef HNETPP_NN_HPP
#define HNETPP_NN_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/rng.hpp"

namespace hnetpp::nn {

template <typename Real>
Tensor<Real> uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  auto t = Tensor<Real>::matrix(rows, cols);
  for (auto& v : t.values()) v = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

template <typename Real>
Tensor<Real> xavier_init(std::size_t in, std::size_t out, Rng& rng) {
  return uniform_init<Real>(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

/// y = x W + b with W stored in x out.
template <typename Real>
struct Linear {
  Parameter<Real>* weight = nullptr;
  Parameter<Real>* bias = nullptr;

  static Linear create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng) {
    Linear l;
    l.weight = &store.add(name + ".weight", xavier_init<Real>(in, out, rng));
    l.bias = &store.add(name + ".bias", Tensor<Real>::matrix(1, out));
    return l;
  }

  std::size_t in_features() const { return weight->value.rows(); }
  std::size_t out_features() const { return weight->value.cols(); }

  Var<Real> operator()(Graph<Real>& g, const Var<Real>& x) const {
    return ad::add(ad::matmul(x, g.param(*weight)), g.param(*bias));
  }
};

template <typename Real>
struct LayerNorm {
  Parameter<Real>* gamma = nullptr;
  Parameter<Real>* beta = nullptr;

  static LayerNorm create(ParameterStore<Real>& store, const std::string& name, std::size_t width) {
    LayerNorm ln;
    ln.gamma = &store.add(name + ".gamma", Tensor<Real>::matrix(1, width, Real{1}));
    ln.beta = &store.add(name + ".beta", Tensor<Real>::matrix(1, width, Real{0}));
    return ln;
  }

  Var<Real> operator()(Graph<Real>& g, const Var<Real>& x) const {
    return ad::layernorm(x, g.param(*gamma), g.param(*beta));
  }
};

/// One direction of a GRU layer, gate order [reset, update, candidate].
template <typename Real>
struct GruDirection {
  Parameter<Real>* w_input = nullptr;   // in x 3H
  Parameter<Real>* w_hidden = nullptr;  // H x 3H
  Parameter<Real>* b_input = nullptr;   // 1 x 3H
  Parameter<Real>* b_hidden = nullptr;  // 1 x 3H

  static GruDirection create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t hidden,
                             Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    GruDirection d;
    d.w_input = &store.add(name + ".w_input", uniform_init<Real>(in, 3 * hidden, bound, rng));
    d.w_hidden = &store.add(name + ".w_hidden", uniform_init<Real>(hidden, 3 * hidden, bound, rng));
    d.b_input = &store.add(name + ".b_input", uniform_init<Real>(1, 3 * hidden, bound, rng));
    d.b_hidden = &store.add(name + ".b_hidden", uniform_init<Real>(1, 3 * hidden, bound, rng));
    return d;
  }

  std::size_t hidden() const { return w_hidden->value.rows(); }

  /// Runs over the rows of `x` (T x in), right to left when `reverse`.
  /// Output rows stay aligned with input positions.
  Var<Real> run(Graph<Real>& g, const Var<Real>& x, bool reverse) const {
    using namespace ad;
    const std::size_t steps = x.rows();
    const std::size_t h = hidden();
    Var<Real> projected = add(matmul(x, g.param(*w_input)), g.param(*b_input));
    Var<Real> wh = g.param(*w_hidden);
    Var<Real> bh = g.param(*b_hidden);
    Var<Real> state = g.constant(Tensor<Real>::matrix(1, h));
    std::vector<Var<Real>> outputs(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      Var<Real> xt = slice(projected, 0, t, t + 1);
      Var<Real> ht = add(matmul(state, wh), bh);
      Var<Real> reset = sigmoid(slice(xt, 1, 0, h) + slice(ht, 1, 0, h));
      Var<Real> update = sigmoid(slice(xt, 1, h, 2 * h) + slice(ht, 1, h, 2 * h));
      Var<Real> candidate = tanh(slice(xt, 1, 2 * h, 3 * h) + reset * slice(ht, 1, 2 * h, 3 * h));
      state = candidate + update * (state - candidate);
      outputs[t] = state;
    }
    return concat(std::span<const Var<Real>>(outputs), 0);
  }
};

/// Stacked bidirectional GRU; each layer's output is [forward; backward].
template <typename Real>
struct BiGru {
  std::vector<GruDirection<Real>> forward;
  std::vector<GruDirection<Real>> backward;

  static BiGru create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t hidden,
                      std::size_t layers, Rng& rng) {
    BiGru b;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t width = l == 0 ? in : 2 * hidden;
      const std::string p = name + ".layer" + std::to_string(l);
      b.forward.push_back(GruDirection<Real>::create(store, p + ".fwd", width, hidden, rng));
      b.backward.push_back(GruDirection<Real>::create(store, p + ".bwd", width, hidden, rng));
    }
    return b;
  }

  std::size_t output_width() const { return 2 * forward.front().hidden(); }

  Var<Real> operator()(Graph<Real>& g, Var<Real> x) const {
    for (std::size_t l = 0; l < forward.size(); ++l) {
      x = ad::concat({forward[l].run(g, x, false), backward[l].run(g, x, true)}, 1);
    }
    return x;
  }
};

/// Unidirectional LSTM layer, gate order [input, forget, cell, output].
template <typename Real>
struct LstmLayer {
  Parameter<Real>* w_input = nullptr;   // in x 4H
  Parameter<Real>* w_hidden = nullptr;  // H x 4H
  Parameter<Real>* bias = nullptr;      // 1 x 4H

  static LstmLayer create(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t hidden,
                          Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    LstmLayer l;
    l.w_input = &store.add(name + ".w_input", uniform_init<Real>(in, 4 * hidden, bound, rng));
    l.w_hidden = &store.add(name + ".w_hidden", uniform_init<Real>(hidden, 4 * hidden, bound, rng));
    auto b = Tensor<Real>::matrix(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = Real{1};  // forget-gate bias
    l.bias = &store.add(name + ".bias", std::move(b));
    return l;
  }

  std::size_t hidden() const { return w_hidden->value.rows(); }

  /// `h0` is an optional 1 x H initial hidden state; the cell starts at 0.
  Var<Real> operator()(Graph<Real>& g, const Var<Real>& x, Var<Real> h0 = {}) const {
    using namespace ad;
    const std::size_t steps = x.rows();
    const std::size_t h = hidden();
    Var<Real> projected = add(matmul(x, g.param(*w_input)), g.param(*bias));
    Var<Real> wh = g.param(*w_hidden);
    Var<Real> state = h0.valid() ? h0 : g.constant(Tensor<Real>::matrix(1, h));
    Var<Real> cell = g.constant(Tensor<Real>::matrix(1, h));
    std::vector<Var<Real>> outputs(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      Var<Real> z = slice(projected, 0, t, t + 1) + matmul(state, wh);
      Var<Real> in_gate = sigmoid(slice(z, 1, 0, h));
      Var<Real> forget = sigmoid(slice(z, 1, h, 2 * h));
      Var<Real> cand = tanh(slice(z, 1, 2 * h, 3 * h));
      Var<Real> out_gate = sigmoid(slice(z, 1, 3 * h, 4 * h));
      cell = forget * cell + in_gate * cand;
      state = out_gate * tanh(cell);
      outputs[t] = state;
    }
    return concat(std::span<const Var<Real>>(outputs), 0);
  }
};

}  // namespace hnetpp::nn

#endif  // HNETPP_NN_HPP
