#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "hnetpp/gradcheck.hpp"
#include "hnetpp/model.hpp"

namespace hnetpp {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.levels = 2;
  c.router_embed_dim = 4;
  c.router_hidden = 3;
  c.router_gru_layers = 1;
  c.router_mlp_dims = {5};
  c.mixer_heads = 2;
  c.mixer_ffn_hidden = 8;
  c.latent_dim = 2;
  c.latent_hidden = 4;
  c.decoder_value_dim = 4;
  c.decoder_type_dim = 2;
  c.decoder_position_dim = 4;
  c.decoder_hidden = 3;
  c.decoder_layers = 2;
  c.decoder_output_dims = {5};
  return c;
}

void randomize_biases(ParameterStore<double>& store, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : store)
    if (p->name.ends_with("bias"))
      for (auto& v : p->value.values()) v = 0.5 * (2.0 * rng.uniform() - 1.0);
}

TEST(Model, ForwardShapes) {
  HNetModel<double> model(tiny_config(), 3);
  auto seq = encode_document("\u0633\u0644\u0627\u0645\u200C\u0647\u0627 abc");
  Graph<double> g(0);
  auto r = forward_document(g, model, seq, ForwardOptions{});
  EXPECT_EQ(r.mixture.rows(), seq.size());
  EXPECT_EQ(r.mixture.cols(), 15u);
  EXPECT_EQ(r.log_pmf.cols(), 256u);
  EXPECT_EQ(r.hierarchy.traces.size(), 2u);
  EXPECT_EQ(r.mixed.rows(), r.hierarchy.final_chunks().size());
  EXPECT_TRUE(std::isfinite(r.lm.item()));
  EXPECT_GE(r.kl.item(), 0.0);
  EXPECT_FALSE(r.morph.valid());
  EXPECT_TRUE(r.aux.valid());
}

TEST(Model, SameSeedSameModel) {
  HNetModel<double> a(tiny_config(), 9), b(tiny_config(), 9), c(tiny_config(), 10);
  ASSERT_EQ(a.params.size(), b.params.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].value, b.params[i].value);
    differs |= !(a.params[i].value == c.params[i].value);
  }
  EXPECT_TRUE(differs);
}

TEST(Model, EvalIsDeterministic) {
  HNetModel<double> model(tiny_config(), 5);
  auto seq = encode_document("deterministic eval");
  EXPECT_EQ(byte_log_probs(model, seq), byte_log_probs(model, seq));
}

TEST(Model, TrainSeedControlsNoise) {
  HNetModel<double> model(tiny_config(), 5);
  auto seq = encode_document("noise and dropout");
  auto run = [&](std::uint64_t seed) {
    Graph<double> g(0);
    ForwardOptions o;
    o.seed = seed;
    return forward_document(g, model, seq, o).lm.item();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}

TEST(Model, LogProbsAreNormalized) {
  HNetModel<double> model(tiny_config(), 5);
  auto seq = encode_document("xyz");
  Graph<double> g(0, false);
  auto r = forward_document(g, model, seq, ForwardOptions::eval());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    double s = 0.0;
    for (std::size_t b = 0; b < 256; ++b) s += std::exp(r.log_pmf.value()(t, b));
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
}

TEST(Model, GoldAddsMorphTerm) {
  HNetModel<double> model(tiny_config(), 5);
  auto seq = encode_document("ab cd");
  seq.gold = {3};
  Graph<double> g(0);
  auto r = forward_document(g, model, seq, ForwardOptions{});
  ASSERT_TRUE(r.morph.valid());
  EXPECT_GT(r.morph.item(), 0.0);
}

TEST(Model, AllGatesOnMakesByteChunks) {
  HNetModel<double> model(tiny_config(), 5);
  model.force_all_gates_on();
  auto seq = encode_document("abcdef");
  auto starts = eval_routing(model, seq);
  for (const auto& level : starts) EXPECT_EQ(level.size(), seq.size());
}

TEST(Model, FullLossGradcheckSoftGates) {
  HNetModel<double> model(tiny_config(), 21);
  randomize_biases(model.params, 22);
  auto seq = encode_document("ab\u200Ccd ef g");
  ASSERT_EQ(seq.size(), 12u);
  seq.gold = {2, 5, 9};
  ForwardOptions o;
  o.mode = GateMode::Soft;
  o.temperature = 1.0;
  o.seed = 77;
  o.label_smoothing = 0.1;
  auto loss = [&](Graph<double>& g) {
    auto r = forward_document(g, model, seq, o);
    return total_loss(r.lm, r.kl, r.morph, r.aux, 0.1, 0.1, 0.05);
  };
  GradcheckOptions opt;
  opt.step = 1e-4;  // 1e-5 drowns ~1e-6 gradients in roundoff of a loss near 6
  opt.tolerance = 1e-4;
  opt.abs_floor = 1e-6;
  opt.max_elements_per_input = 12;
  opt.sample_seed = 4;
  auto report = gradcheck_parameters(model.params, loss, opt);
  EXPECT_TRUE(report.passed()) << report.worst.input << "[" << report.worst.index << "] analytic "
                               << report.worst.analytic << " numeric " << report.worst.numeric << " flagged "
                               << report.flagged.size();
  EXPECT_GT(report.checked, 300u);
}

TEST(Model, RejectsEmptyDocument) {
  HNetModel<double> model(tiny_config(), 1);
  Graph<double> g(0);
  EXPECT_THROW(forward_document(g, model, ByteSequence{}, ForwardOptions{}), DataError);
}

TEST(ModelConfig, Validation) {
  auto c = tiny_config();
  c.mixer_heads = 4;  // width 6
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.decoder_dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.router_mlp_dims.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace hnetpp
