#ifndef HNETPP_ROUTER_HPP
#define HNETPP_ROUTER_HPP

// Hierarchical dynamic chunking. Each level runs a 2-layer BiGRU over its
// input rows, predicts a boundary probability per position, samples binary
// gates with the straight-through Gumbel-sigmoid estimator and mean-pools
// the hidden states of every gate span into one row of the next level.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/nn.hpp"
#include "hnetpp/rng.hpp"

namespace hnetpp {

enum class GateMode {
  Soft,    // relaxed gate values; spans from thresholding at 0.5
  HardST,  // binary forward, relaxed backward
  Argmax,  // noise-free 1{pi > 0.5}, gradient through pi
};

/// tau(t) = max(floor, start * decay^t).
struct TemperatureSchedule {
  double start = 5.0;
  double decay = 0.99995;
  double floor = 0.1;

  double operator()(std::size_t step) const {
    return std::max(floor, start * std::pow(decay, static_cast<double>(step)));
  }
};

struct GateSample {
  double value = 0.0;  // forward gate value
  double soft = 0.0;   // relaxed value sigmoid((logit + G1 - G2) / tau)
  double slope = 0.0;  // d soft / d logit, which is also the ST gradient
};

/// Scalar straight-through Gumbel-sigmoid draw. Two standard Gumbel draws
/// come from `noise_seed`.
inline GateSample sample_gate_st(double logit, double temperature, std::uint64_t noise_seed, bool hard) {
  Rng rng(noise_seed);
  const double g1 = rng.gumbel();
  const double g2 = rng.gumbel();
  const double z = (logit + g1 - g2) / temperature;
  const double soft = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  GateSample s;
  s.soft = soft;
  s.value = hard ? (soft > 0.5 ? 1.0 : 0.0) : soft;
  s.slope = soft * (1.0 - soft) / temperature;
  return s;
}

template <typename Real>
struct RouterLevelParams {
  nn::BiGru<Real> bigru;
  std::vector<nn::Linear<Real>> hidden_layers;
  nn::LayerNorm<Real> norm;
  nn::Linear<Real> head;
  Real dropout = Real{0.1};

  /// BiGRU(in -> hidden per direction, `gru_layers`) followed by the
  /// boundary MLP 2*hidden -> mlp_dims... -> 1 (ReLU, dropout after each
  /// hidden layer, LayerNorm on the last hidden layer).
  static RouterLevelParams create(ParameterStore<Real>& store, const std::string& name, std::size_t in,
                                  std::size_t hidden, const std::vector<std::size_t>& mlp_dims,
                                  std::size_t gru_layers, Real dropout, Rng& rng) {
    if (mlp_dims.empty()) throw ConfigError(name + ": boundary MLP needs at least one hidden layer");
    RouterLevelParams p;
    p.bigru = nn::BiGru<Real>::create(store, name + ".bigru", in, hidden, gru_layers, rng);
    std::size_t width = 2 * hidden;
    for (std::size_t i = 0; i < mlp_dims.size(); ++i) {
      p.hidden_layers.push_back(nn::Linear<Real>::create(store, name + ".mlp" + std::to_string(i), width, mlp_dims[i], rng));
      width = mlp_dims[i];
    }
    p.norm = nn::LayerNorm<Real>::create(store, name + ".mlp_norm", width);
    p.head = nn::Linear<Real>::create(store, name + ".mlp_out", width, 1, rng);
    p.dropout = dropout;
    return p;
  }

  std::size_t output_width() const { return bigru.output_width(); }

  Var<Real> boundary_logits(Graph<Real>& g, const Var<Real>& hidden, bool train) const {
    Var<Real> x = hidden;
    for (const auto& layer : hidden_layers) x = ad::dropout(ad::relu(layer(g, x)), dropout, train);
    return head(g, norm(g, x));
  }
};

template <typename Real>
struct LevelTrace {
  Var<Real> hidden;  // T x 2H
  Var<Real> logits;  // T x 1
  Var<Real> probs;   // T x 1, sigmoid(logits)
  Var<Real> gates;   // T x 1; gate 0 is the constant 1
  std::vector<std::size_t> starts;
  GateMode mode = GateMode::HardST;

  std::size_t length() const { return hidden.rows(); }
};

template <typename Real>
struct ChunkSet {
  std::vector<std::size_t> starts;  // strictly increasing, starts[0] == 0
  Var<Real> embeddings;             // K x d
  std::size_t input_length = 0;

  std::size_t size() const { return starts.size(); }

  /// Length of chunk k in input positions.
  std::size_t chunk_length(std::size_t k) const {
    return (k + 1 < starts.size() ? starts[k + 1] : input_length) - starts[k];
  }
};

namespace detail {

template <typename Real>
Var<Real> force_first_gate(Graph<Real>& g, const Var<Real>& gates) {
  Var<Real> one = g.constant(Tensor<Real>::scalar(Real{1}));
  if (gates.rows() == 1) return one;
  return ad::concat({one, ad::slice(gates, 0, 1, gates.rows())}, 0);
}

}  // namespace detail

/// Gate column for a column of boundary logits. In Soft/HardST modes each
/// position draws two Gumbel variables from a stream seeded by `seed`.
template <typename Real>
Var<Real> sample_gates(const Var<Real>& logits, const Var<Real>& probs, Real temperature, GateMode mode,
                       std::uint64_t seed) {
  Graph<Real>& g = logits.graph();
  const std::size_t n = logits.rows();
  Var<Real> gates;
  if (mode == GateMode::Argmax) {
    auto hard = Tensor<Real>::matrix(n, 1);
    for (std::size_t t = 0; t < n; ++t) hard[t] = probs.value()[t] > Real{0.5} ? Real{1} : Real{0};
    gates = ad::straight_through(std::move(hard), probs);
  } else {
    Rng rng(seed);
    auto noise = Tensor<Real>::matrix(n, 1);
    for (std::size_t t = 0; t < n; ++t) {
      const double g1 = rng.gumbel();
      const double g2 = rng.gumbel();
      noise[t] = static_cast<Real>(g1 - g2);
    }
    Var<Real> soft = ad::sigmoid(ad::scale(logits + g.constant(std::move(noise)), Real{1} / temperature));
    if (mode == GateMode::Soft) {
      gates = soft;
    } else {
      auto hard = Tensor<Real>::matrix(n, 1);
      for (std::size_t t = 0; t < n; ++t) hard[t] = soft.value()[t] > Real{0.5} ? Real{1} : Real{0};
      gates = ad::straight_through(std::move(hard), soft);
    }
  }
  return detail::force_first_gate(g, gates);
}

/// One router level over `inputs` (T x d).
template <typename Real>
LevelTrace<Real> run_level(Graph<Real>& g, const Var<Real>& inputs, const RouterLevelParams<Real>& params,
                           Real temperature, GateMode mode, std::uint64_t seed, bool train) {
  if (!inputs.valid() || inputs.rows() == 0) throw ShapeError("run_level: empty input");
  if (!(temperature > Real{0})) throw ConfigError("run_level: temperature must be positive");
  LevelTrace<Real> trace;
  trace.mode = mode;
  trace.hidden = params.bigru(g, inputs);
  trace.logits = params.boundary_logits(g, trace.hidden, train);
  trace.probs = ad::sigmoid(trace.logits);
  trace.gates = sample_gates(trace.logits, trace.probs, temperature, mode, seed);
  const auto& gv = trace.gates.value();
  for (std::size_t t = 0; t < gv.size(); ++t) {
    if (t == 0 || gv[t] > Real{0.5}) trace.starts.push_back(t);
  }
  return trace;
}

/// Mean-pools hidden rows over each gate span. Each row is scaled by a
/// multiplier whose forward value is 1 for binary gates (g at a span start,
/// 1 - g inside a span), so the forward pass is the exact mean while gate
/// gradients stay alive. With relaxed gates it is a weighted pooling whose
/// binary limit is the mean.
template <typename Real>
ChunkSet<Real> pool_chunks(const LevelTrace<Real>& trace) {
  Graph<Real>& g = trace.hidden.graph();
  const std::size_t n = trace.length();
  const auto& starts = trace.starts;
  if (starts.empty() || starts[0] != 0) throw ShapeError("pool_chunks: first gate must be set");
  const std::size_t k = starts.size();
  auto is_start = Tensor<Real>::matrix(n, 1);
  auto inside = Tensor<Real>::matrix(n, 1, Real{1});
  for (std::size_t s : starts) {
    is_start[s] = Real{1};
    inside[s] = Real{0};
  }
  auto average = Tensor<Real>::matrix(k, n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t end = c + 1 < k ? starts[c + 1] : n;
    const Real w = Real{1} / static_cast<Real>(end - starts[c]);
    for (std::size_t t = starts[c]; t < end; ++t) average(c, t) = w;
  }
  Var<Real> gates = trace.gates;
  Var<Real> multiplier = g.constant(std::move(is_start)) * gates + g.constant(std::move(inside)) * (Real{1} - gates);
  ChunkSet<Real> out;
  out.starts = starts;
  out.input_length = n;
  out.embeddings = ad::matmul(g.constant(std::move(average)), trace.hidden * multiplier);
  return out;
}

template <typename Real>
struct Hierarchy {
  std::vector<LevelTrace<Real>> traces;
  std::vector<ChunkSet<Real>> chunks;

  const ChunkSet<Real>& final_chunks() const { return chunks.back(); }

  std::vector<std::vector<std::size_t>> starts_per_level() const {
    std::vector<std::vector<std::size_t>> s;
    for (const auto& t : traces) s.push_back(t.starts);
    return s;
  }
};

/// Runs every level; level l+1 consumes level l's chunk embeddings.
template <typename Real>
Hierarchy<Real> run_hierarchy(Graph<Real>& g, const Var<Real>& byte_embeddings,
                              const std::vector<RouterLevelParams<Real>>& levels, Real temperature, GateMode mode,
                              std::uint64_t seed, bool train) {
  if (levels.empty()) throw ConfigError("run_hierarchy: need at least one level");
  Hierarchy<Real> h;
  Var<Real> input = byte_embeddings;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    h.traces.push_back(run_level(g, input, levels[l], temperature, mode, derive_seed(seed, {l}), train));
    h.chunks.push_back(pool_chunks(h.traces.back()));
    input = h.chunks.back().embeddings;
  }
  return h;
}

/// Byte offsets of chunk starts at `level` (1-based), composed through the
/// lower levels: a level-l chunk start maps to the first byte it covers.
inline std::vector<std::size_t> compose_boundaries(const std::vector<std::vector<std::size_t>>& starts_per_level,
                                                   std::size_t level = 1) {
  if (level == 0 || level > starts_per_level.size()) throw ConfigError("compose_boundaries: level out of range");
  std::vector<std::size_t> offsets = starts_per_level[0];
  for (std::size_t l = 1; l < level; ++l) {
    std::vector<std::size_t> next;
    next.reserve(starts_per_level[l].size());
    for (std::size_t s : starts_per_level[l]) next.push_back(offsets.at(s));
    offsets = std::move(next);
  }
  return offsets;
}

template <typename Real>
std::vector<std::size_t> extract_byte_boundaries(const std::vector<LevelTrace<Real>>& traces, std::size_t level = 1) {
  std::vector<std::vector<std::size_t>> s;
  for (const auto& t : traces) s.push_back(t.starts);
  return compose_boundaries(s, level);
}

/// For each of `length` bytes, the index of the top-level chunk containing it.
inline std::vector<std::size_t> byte_to_chunk(const std::vector<std::vector<std::size_t>>& starts_per_level,
                                              std::size_t length) {
  std::vector<std::size_t> index(length);
  for (std::size_t t = 0; t < length; ++t) index[t] = t;
  for (const auto& starts : starts_per_level) {
    for (auto& i : index) {
      i = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), i) - starts.begin()) - 1;
    }
  }
  return index;
}

struct AuxLossOptions {
  std::vector<double> target_rates{0.5};  // one per level, last value repeats
  double length_cap = 16.0;               // bytes, level 1
};

/// Load balancing sum_l (mean(pi_l) - target_l)^2 plus the level-1 chunk
/// length penalty mean_k max(0, len_k - cap)^2. Lengths are written through
/// the gates (len_k = 1 + sum over interior positions of 1 - g_t) so the
/// penalty has a straight-through gradient.
template <typename Real>
Var<Real> router_aux_loss(const std::vector<LevelTrace<Real>>& traces, const AuxLossOptions& opt) {
  if (traces.empty()) throw ConfigError("router_aux_loss: no traces");
  Graph<Real>& g = traces[0].probs.graph();
  Var<Real> total;
  for (std::size_t l = 0; l < traces.size(); ++l) {
    const double target = opt.target_rates.empty() ? 0.5 : opt.target_rates[std::min(l, opt.target_rates.size() - 1)];
    Var<Real> term = ad::square(ad::add_scalar(ad::mean(traces[l].probs), static_cast<Real>(-target)));
    total = total.valid() ? total + term : term;
  }
  const auto& first = traces[0];
  const std::size_t n = first.length();
  const std::size_t k = first.starts.size();
  auto interior = Tensor<Real>::matrix(k, n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t end = c + 1 < k ? first.starts[c + 1] : n;
    for (std::size_t t = first.starts[c] + 1; t < end; ++t) interior(c, t) = Real{1};
  }
  Var<Real> lengths = ad::add_scalar(ad::matmul(g.constant(std::move(interior)), Real{1} - first.gates), Real{1});
  Var<Real> excess = ad::relu(ad::add_scalar(lengths, static_cast<Real>(-opt.length_cap)));
  return total + ad::mean(ad::square(excess));
}

}  // namespace hnetpp

#endif  // HNETPP_ROUTER_HPP
