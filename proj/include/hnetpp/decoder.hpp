#ifndef HNETPP_DECODER_HPP
#define HNETPP_DECODER_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/byte_frontend.hpp"
#include "hnetpp/mixture.hpp"
#include "hnetpp/nn.hpp"

namespace hnetpp {

/// Row of the value table fed at position 0, where there is no previous byte.
inline constexpr std::size_t kBeginByte = 256;
inline constexpr std::size_t kBeginClass = kByteClassCount;

/// Raw head outputs are mapped to the byte scale as
///   location = 127.5 + kLocationSpread * raw,  log-scale = raw + kLogScaleOffset
/// so a freshly initialised head predicts a broad, roughly flat PMF.
inline constexpr double kLocationCentre = 127.5;
inline constexpr double kLocationSpread = 64.0;
inline constexpr double kLogScaleOffset = 4.0;

struct DecoderDims {
  std::size_t value_dim = 256;
  std::size_t type_dim = 32;
  std::size_t position_dim = 128;
  std::size_t hidden = 128;
  std::size_t layers = 3;
  std::size_t context_dim = 0;  // width of z*
  std::size_t latent_dim = 0;   // width of [xi1; xi2]
  std::vector<std::size_t> output_dims{512, 256};
  double dropout = 0.1;
};

/// g = sigmoid(W_g [lstm; ctx] + b_g)
/// out = g * tanh(W_t lstm + b_t) + (1 - g) * (W_p ctx + b_p)
template <typename Real>
struct HighwayParams {
  nn::Linear<Real> gate;
  nn::Linear<Real> transform;
  nn::Linear<Real> project;

  static HighwayParams create(ParameterStore<Real>& store, const std::string& name, std::size_t hidden,
                              std::size_t context_dim, Rng& rng) {
    HighwayParams h;
    h.gate = nn::Linear<Real>::create(store, name + ".gate", hidden + context_dim, hidden, rng);
    h.transform = nn::Linear<Real>::create(store, name + ".transform", hidden, hidden, rng);
    h.project = nn::Linear<Real>::create(store, name + ".project", context_dim, hidden, rng);
    return h;
  }
};

template <typename Real>
Var<Real> highway_fuse(Graph<Real>& g, const Var<Real>& lstm_out, const Var<Real>& context, const HighwayParams<Real>& p) {
  if (lstm_out.rows() != context.rows()) {
    throw ShapeError("highway_fuse: " + std::to_string(lstm_out.rows()) + " LSTM rows vs " +
                     std::to_string(context.rows()) + " context rows");
  }
  Var<Real> gate = ad::sigmoid(p.gate(g, ad::concat({lstm_out, context}, 1)));
  Var<Real> carried = ad::tanh(p.transform(g, lstm_out));
  Var<Real> projected = p.project(g, context);
  return gate * carried + (Real{1} - gate) * projected;
}

template <typename Real>
struct DecoderParams {
  DecoderDims dims;
  Parameter<Real>* value_embed = nullptr;  // 257 x value_dim
  Parameter<Real>* type_embed = nullptr;   // 5 x type_dim
  nn::Linear<Real> input_proj;
  nn::Linear<Real> latent_input;
  std::vector<nn::Linear<Real>> latent_state;  // one initial hidden state per layer
  std::vector<nn::LstmLayer<Real>> lstm;
  HighwayParams<Real> highway;
  std::vector<nn::Linear<Real>> output_layers;
  nn::Linear<Real> head;

  static DecoderParams create(ParameterStore<Real>& store, const std::string& name, const DecoderDims& dims, Rng& rng) {
    if (dims.layers == 0) throw ConfigError(name + ": decoder needs at least one LSTM layer");
    if (dims.context_dim == 0 || dims.latent_dim == 0) throw ConfigError(name + ": context and latent widths must be set");
    if (dims.position_dim % 2 != 0) throw ConfigError(name + ": positional width must be even");
    DecoderParams p;
    p.dims = dims;
    const double emb = 1.0;
    p.value_embed = &store.add(name + ".value_embed", nn::uniform_init<Real>(kBeginByte + 1, dims.value_dim, emb, rng));
    p.type_embed = &store.add(name + ".type_embed", nn::uniform_init<Real>(kBeginClass + 1, dims.type_dim, emb, rng));
    const std::size_t in = dims.value_dim + dims.type_dim + dims.position_dim;
    p.input_proj = nn::Linear<Real>::create(store, name + ".input_proj", in, dims.hidden, rng);
    p.latent_input = nn::Linear<Real>::create(store, name + ".latent_input", dims.latent_dim, dims.hidden, rng);
    for (std::size_t l = 0; l < dims.layers; ++l) {
      const std::string ln = name + ".lstm" + std::to_string(l);
      p.latent_state.push_back(nn::Linear<Real>::create(store, ln + ".init", dims.latent_dim, dims.hidden, rng));
      p.lstm.push_back(nn::LstmLayer<Real>::create(store, ln, dims.hidden, dims.hidden, rng));
    }
    p.highway = HighwayParams<Real>::create(store, name + ".highway", dims.hidden, dims.context_dim, rng);
    std::size_t width = dims.hidden;
    for (std::size_t i = 0; i < dims.output_dims.size(); ++i) {
      p.output_layers.push_back(
          nn::Linear<Real>::create(store, name + ".out" + std::to_string(i), width, dims.output_dims[i], rng));
      width = dims.output_dims[i];
    }
    p.head = nn::Linear<Real>::create(store, name + ".head", width, kMixtureWidth, rng);
    return p;
  }
};

/// Teacher-forced inputs: previous byte value and class, position t.
template <typename Real>
Var<Real> decoder_inputs(Graph<Real>& g, const ByteSequence& seq, const DecoderParams<Real>& p) {
  const std::size_t n = seq.size();
  std::vector<std::size_t> prev(n), cls(n);
  const auto classes = classify_all(seq);
  prev[0] = kBeginByte;
  cls[0] = kBeginClass;
  for (std::size_t t = 1; t < n; ++t) {
    prev[t] = seq.bytes[t - 1];
    cls[t] = static_cast<std::size_t>(classes[t - 1]);
  }
  Var<Real> value = ad::embedding_lookup(g.param(*p.value_embed), std::move(prev));
  Var<Real> type = ad::embedding_lookup(g.param(*p.type_embed), std::move(cls));
  Var<Real> pos = g.constant(positional_table<Real>(n, p.dims.position_dim));
  return ad::concat({value, type, pos}, 1);
}

/// Maps raw T x 15 head outputs to byte-scale mixture parameters.
template <typename Real>
Var<Real> mixture_head_transform(Graph<Real>& g, const Var<Real>& raw) {
  auto gain = Tensor<Real>::matrix(1, kMixtureWidth, Real{1});
  auto offset = Tensor<Real>::matrix(1, kMixtureWidth);
  for (std::size_t k = 0; k < kMixtureComponents; ++k) {
    gain[k] = static_cast<Real>(kLocationSpread);
    offset[k] = static_cast<Real>(kLocationCentre);
    offset[kMixtureComponents + k] = static_cast<Real>(kLogScaleOffset);
  }
  return raw * g.constant(std::move(gain)) + g.constant(std::move(offset));
}

/// Mixture parameters (T x 15, byte scale) for every position of `seq`.
/// `context` holds K chunk rows; `chunk_of_byte[t]` selects the row for byte t.
/// `latent` is the 1 x latent_dim concatenation [xi1; xi2].
template <typename Real>
Var<Real> decode(Graph<Real>& g, const ByteSequence& seq, const Var<Real>& context,
                 const std::vector<std::size_t>& chunk_of_byte, const Var<Real>& latent, const DecoderParams<Real>& p,
                 bool train) {
  using namespace ad;
  const std::size_t n = seq.size();
  if (n == 0) throw ShapeError("decode: empty sequence");
  if (chunk_of_byte.size() != n) {
    throw ShapeError("decode: chunk map covers " + std::to_string(chunk_of_byte.size()) + " of " + std::to_string(n) +
                     " positions");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (chunk_of_byte[t] >= context.rows()) {
      throw ShapeError("decode: position " + std::to_string(t) + " maps to chunk " + std::to_string(chunk_of_byte[t]) +
                       " but only " + std::to_string(context.rows()) + " exist");
    }
  }
  if (latent.rows() != 1 || latent.cols() != p.dims.latent_dim) {
    throw ShapeError("decode: latent must be 1 x " + std::to_string(p.dims.latent_dim) + ", got " +
                     shape_string(latent.shape()));
  }
  const Real drop = static_cast<Real>(p.dims.dropout);
  Var<Real> x = p.input_proj(g, decoder_inputs(g, seq, p)) + p.latent_input(g, latent);
  x = dropout(x, drop, train);
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    Var<Real> h0 = tanh(p.latent_state[l](g, latent));
    Var<Real> y = p.lstm[l](g, x, h0);
    x = l == 0 ? y : y + x;
    x = dropout(x, drop, train);
  }
  Var<Real> ctx = embedding_lookup(context, chunk_of_byte);
  Var<Real> h = highway_fuse(g, x, ctx, p.highway);
  for (const auto& layer : p.output_layers) h = dropout(relu(layer(g, h)), drop, train);
  return mixture_head_transform(g, p.head(g, h));
}

}  // namespace hnetpp

#endif  // HNETPP_DECODER_HPP
