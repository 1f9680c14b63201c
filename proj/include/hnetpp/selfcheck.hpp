#ifndef HNETPP_SELFCHECK_HPP
#define HNETPP_SELFCHECK_HPP

// End-to-end finite-difference check of the full training objective on a
// small 64-bit model. Gates are soft so the loss is differentiable.

#include <cstdint>

#include "hnetpp/gradcheck.hpp"
#include "hnetpp/model.hpp"

namespace hnetpp {

/// Two levels, every width at most 16.
inline ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.levels = 2;
  c.router_embed_dim = 6;
  c.router_hidden = 4;
  c.router_gru_layers = 1;
  c.router_mlp_dims = {6};
  c.router_dropout = 0.1;
  c.mixer_heads = 2;
  c.mixer_ffn_hidden = 12;
  c.mixer_dropout = 0.1;
  c.latent_dim = 3;
  c.latent_hidden = 8;
  c.decoder_value_dim = 8;
  c.decoder_type_dim = 4;
  c.decoder_position_dim = 8;
  c.decoder_hidden = 6;
  c.decoder_layers = 2;
  c.decoder_output_dims = {8};
  c.decoder_dropout = 0.1;
  return c;
}

struct SelfcheckOptions {
  std::uint64_t seed = 21;
  double tolerance = 1e-3;
  double step = 1e-4;
  double abs_floor = 1e-6;
  std::size_t max_elements_per_tensor = 0;  // 0: every element
};

/// 12-byte document with a ZWNJ and gold boundaries; all four loss terms are
/// active. Biases are randomized so no gate sits exactly at 0.5.
inline GradcheckReport end_to_end_gradcheck(const SelfcheckOptions& o = {}) {
  HNetModel<double> model(gradcheck_model_config(), o.seed);
  Rng rng(derive_seed(o.seed, {0xB1A5}));
  for (auto& p : model.params)
    if (p->name.ends_with("bias"))
      for (auto& v : p->value.values()) v = rng.uniform() - 0.5;
  auto seq = encode_document("ab‌cd ef g");
  seq.gold = {2, 5, 9};
  ForwardOptions fo;
  fo.mode = GateMode::Soft;
  fo.temperature = 1.0;
  fo.seed = derive_seed(o.seed, {0xF0});
  fo.label_smoothing = 0.1;
  auto loss = [&](Graph<double>& g) {
    auto r = forward_document(g, model, seq, fo);
    return total_loss(r.lm, r.kl, r.morph, r.aux, 0.1, 0.1, 0.05);
  };
  GradcheckOptions opt;
  opt.step = o.step;
  opt.tolerance = o.tolerance;
  opt.abs_floor = o.abs_floor;
  opt.max_elements_per_input = o.max_elements_per_tensor;
  opt.sample_seed = o.seed;
  return gradcheck_parameters(model.params, loss, opt);
}

}  // namespace hnetpp

#endif  // HNETPP_SELFCHECK_HPP
