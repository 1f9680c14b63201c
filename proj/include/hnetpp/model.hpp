#ifndef HNETPP_MODEL_HPP
#define HNETPP_MODEL_HPP

// The full byte model: ZWNJ-aware embeddings -> L router levels -> chunk
// mixer -> two document latents -> LSTM mixture decoder.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/byte_frontend.hpp"
#include "hnetpp/decoder.hpp"
#include "hnetpp/latent.hpp"
#include "hnetpp/mixer.hpp"
#include "hnetpp/objective.hpp"
#include "hnetpp/router.hpp"

namespace hnetpp {

struct ModelConfig {
  std::size_t levels = 3;
  std::size_t router_embed_dim = 64;
  std::size_t router_hidden = 64;  // per direction
  std::size_t router_gru_layers = 2;
  std::vector<std::size_t> router_mlp_dims{512, 256};
  double router_dropout = 0.1;

  std::size_t mixer_heads = 4;
  std::size_t mixer_ffn_hidden = 256;
  bool mixer_causal = false;
  double mixer_dropout = 0.1;

  std::size_t latent_dim = 32;
  std::size_t latent_hidden = 64;

  std::size_t decoder_value_dim = 256;
  std::size_t decoder_type_dim = 32;
  std::size_t decoder_position_dim = 128;
  std::size_t decoder_hidden = 128;
  std::size_t decoder_layers = 3;
  std::vector<std::size_t> decoder_output_dims{512, 256};
  double decoder_dropout = 0.1;

  std::size_t mixer_width() const { return 2 * router_hidden; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(levels, "model.levels");
    positive(router_embed_dim, "model.router.embed_dim");
    positive(router_hidden, "model.router.hidden");
    positive(router_gru_layers, "model.router.gru_layers");
    positive(mixer_heads, "model.mixer.heads");
    positive(mixer_ffn_hidden, "model.mixer.ffn_hidden");
    positive(latent_dim, "model.latent.dim");
    positive(latent_hidden, "model.latent.hidden");
    positive(decoder_value_dim, "model.decoder.value_dim");
    positive(decoder_type_dim, "model.decoder.type_dim");
    positive(decoder_position_dim, "model.decoder.position_dim");
    positive(decoder_hidden, "model.decoder.hidden");
    positive(decoder_layers, "model.decoder.layers");
    if (router_mlp_dims.empty()) throw ConfigError("model.router.mlp_dims needs at least one layer");
    for (std::size_t d : router_mlp_dims) positive(d, "model.router.mlp_dims entries");
    for (std::size_t d : decoder_output_dims) positive(d, "model.decoder.output_dims entries");
    if (mixer_width() % mixer_heads != 0) {
      throw ConfigError("mixer width 2 * model.router.hidden = " + std::to_string(mixer_width()) +
                        " is not divisible by model.mixer.heads = " + std::to_string(mixer_heads));
    }
    if (decoder_position_dim % 2 != 0) throw ConfigError("model.decoder.position_dim must be even");
    for (double p : {router_dropout, mixer_dropout, decoder_dropout}) {
      if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
    }
  }
};

template <typename Real>
class HNetModel {
 public:
  ModelConfig config;
  ParameterStore<Real> params;
  ByteEmbeddingTable<Real> embed;
  std::vector<RouterLevelParams<Real>> router;
  MixerParams<Real> mixer;
  PriorHeads<Real> prior;
  DecoderParams<Real> decoder;

  /// Parameters are created in a fixed order from `seed`, so equal
  /// (config, seed) pairs give identical models.
  HNetModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(seed);
    embed = ByteEmbeddingTable<Real>::create(params, "embed", config.router_embed_dim, rng);
    std::size_t in = config.router_embed_dim;
    for (std::size_t l = 0; l < config.levels; ++l) {
      router.push_back(RouterLevelParams<Real>::create(params, "router" + std::to_string(l), in, config.router_hidden,
                                                       config.router_mlp_dims, config.router_gru_layers,
                                                       static_cast<Real>(config.router_dropout), rng));
      in = router.back().output_width();
    }
    mixer = MixerParams<Real>::create(params, "mixer", config.mixer_width(), config.mixer_ffn_hidden, config.mixer_heads,
                                      static_cast<Real>(config.mixer_dropout), config.mixer_causal, rng);
    prior = PriorHeads<Real>::create(params, "prior", config.mixer_width(), config.latent_hidden, config.latent_dim, rng);
    DecoderDims dd;
    dd.value_dim = config.decoder_value_dim;
    dd.type_dim = config.decoder_type_dim;
    dd.position_dim = config.decoder_position_dim;
    dd.hidden = config.decoder_hidden;
    dd.layers = config.decoder_layers;
    dd.context_dim = config.mixer_width();
    dd.latent_dim = 2 * config.latent_dim;
    dd.output_dims = config.decoder_output_dims;
    dd.dropout = config.decoder_dropout;
    decoder = DecoderParams<Real>::create(params, "decoder", dd, rng);
  }

  HNetModel(const HNetModel&) = delete;
  HNetModel& operator=(const HNetModel&) = delete;

  /// Debug configuration: every router level opens every gate in argmax mode.
  void force_all_gates_on() {
    for (auto& level : router) {
      level.head.weight->value.fill(Real{0});
      level.head.bias->value.fill(Real{20});
    }
  }
};

struct ForwardOptions {
  GateMode mode = GateMode::HardST;
  bool train = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;  // Gumbel noise, latent noise and dropout masks
  double label_smoothing = 0.0;
  AuxLossOptions aux{};
  bool compute_aux = true;

  static ForwardOptions eval() {
    ForwardOptions o;
    o.mode = GateMode::Argmax;
    o.train = false;
    o.compute_aux = false;
    return o;
  }
};

template <typename Real>
struct ForwardResult {
  Hierarchy<Real> hierarchy;
  Var<Real> mixed;       // K x d final chunk rows after the mixer
  Posterior<Real> posterior;
  LatentSample<Real> latent;
  Var<Real> mixture;     // T x 15
  Var<Real> log_pmf;     // T x 256
  Var<Real> lm, kl, morph, aux;

  std::vector<std::size_t> byte_boundaries(std::size_t level = 1) const {
    return compose_boundaries(hierarchy.starts_per_level(), level);
  }
};

/// Runs one document through the model and computes every loss term. The
/// morphology term is present only when the document carries gold offsets.
template <typename Real>
ForwardResult<Real> forward_document(Graph<Real>& g, const HNetModel<Real>& model, const ByteSequence& seq,
                                     const ForwardOptions& opt) {
  if (seq.empty()) throw DataError("forward: empty document " + seq.doc_id);
  g.reseed(derive_seed(opt.seed, {0xD0}));
  ForwardResult<Real> r;
  Var<Real> emb = embed_bytes(g, seq, model.embed);
  r.hierarchy = run_hierarchy(g, emb, model.router, static_cast<Real>(opt.temperature), opt.mode,
                              derive_seed(opt.seed, {0xA1}), opt.train);
  r.mixed = mix(g, r.hierarchy.final_chunks().embeddings, model.mixer, opt.train);
  r.posterior = infer_posterior(g, ad::mean_axis(r.mixed, 0), model.prior);
  r.latent = sample_latent(r.posterior, derive_seed(opt.seed, {0xB2}), opt.train);
  Var<Real> latent = ad::concat({r.latent.xi[0], r.latent.xi[1]}, 1);
  const auto chunk_of_byte = byte_to_chunk(r.hierarchy.starts_per_level(), seq.size());
  r.mixture = decode(g, seq, r.mixed, chunk_of_byte, latent, model.decoder, opt.train);
  r.log_pmf = ad::mixture_log_pmf(r.mixture);
  r.lm = lm_loss_from_log_pmf(r.log_pmf, std::span<const std::uint8_t>(seq.bytes), opt.label_smoothing);
  r.kl = kl_to_standard_normal(r.posterior);
  if (seq.has_gold()) r.morph = morph_loss(r.hierarchy.traces[0].probs, seq.gold);
  if (opt.compute_aux) r.aux = router_aux_loss(r.hierarchy.traces, opt.aux);
  return r;
}

/// Natural-log probability of every byte under the eval-mode model.
template <typename Real>
std::vector<double> byte_log_probs(const HNetModel<Real>& model, const ByteSequence& seq) {
  Graph<Real> g(0, false);
  auto r = forward_document(g, model, seq, ForwardOptions::eval());
  std::vector<double> out(seq.size());
  const auto& lp = r.log_pmf.value();
  for (std::size_t t = 0; t < seq.size(); ++t) out[t] = static_cast<double>(lp(t, seq.bytes[t]));
  return out;
}

/// Eval-mode chunk starts per router level, in that level's own positions.
template <typename Real>
std::vector<std::vector<std::size_t>> eval_routing(const HNetModel<Real>& model, const ByteSequence& seq) {
  Graph<Real> g(0, false);
  Var<Real> emb = embed_bytes(g, seq, model.embed);
  auto h = run_hierarchy(g, emb, model.router, Real{1}, GateMode::Argmax, 0, false);
  return h.starts_per_level();
}

}  // namespace hnetpp

#endif  // HNETPP_MODEL_HPP
