#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "hnetpp/metrics.hpp"

namespace hnetpp {
namespace {

TEST(Bpb, UniformAndCertain) {
  BpbAccumulator u;
  std::vector<double> lp(100, -std::log(256.0));
  u.add(lp);
  EXPECT_NEAR(u.value(), 8.0, 1e-12);
  BpbAccumulator c;
  std::vector<double> zero(10, 0.0);
  c.add(zero);
  EXPECT_EQ(c.value(), 0.0);
  EXPECT_THROW(BpbAccumulator{}.value(), DataError);
}

TEST(Bpb, HandComputedTwoBytes) {
  // p = 0.5 and 0.125 -> (1 + 3) bits / 2 bytes
  BpbAccumulator a;
  std::vector<double> lp{std::log(0.5), std::log(0.125)};
  a.add(lp);
  EXPECT_NEAR(a.value(), 2.0, 1e-12);
}

TEST(Prf, Examples) {
  auto r = segmentation_prf({3, 7}, {3, 9});
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
  r = segmentation_prf({0, 4, 8}, {0, 4, 8});
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
  r = segmentation_prf({}, {3});
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  r = segmentation_prf({0}, {0});  // offset 0 is not scored
  EXPECT_EQ(r.predicted.size(), 0u);
  EXPECT_EQ(r.f1, 0.0);
}

TEST(Prf, SwapExchangesPrecisionAndRecall) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::size_t> a, b;
    for (int k = 0; k < 10; ++k) {
      if (rng.bernoulli(0.5)) a.push_back(rng.below(30));
      if (rng.bernoulli(0.5)) b.push_back(rng.below(30));
    }
    auto x = segmentation_prf(a, b), y = segmentation_prf(b, a);
    EXPECT_EQ(x.precision, y.recall);
    EXPECT_EQ(x.recall, y.precision);
    EXPECT_EQ(x.f1, y.f1);
  }
}

TEST(Prf, MicroTotals) {
  SegmentationTotals t;
  t.add(segmentation_prf({3, 7}, {3, 9}));
  t.add(segmentation_prf({2}, {2, 5, 6}));
  EXPECT_EQ(t.true_positives, 2u);
  EXPECT_DOUBLE_EQ(t.precision(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t.recall(), 2.0 / 5.0);
}

TEST(ChunkStats, HandCountedHistogram) {
  auto doc = encode_document("ab cde f.");
  ChunkLexicon lex;
  lex.tags["ab"] = "simple";
  lex.tags["cde"] = "compound";
  lex.tags["."] = "punctuation";
  ChunkStats s;
  add_chunks(s, doc, {0, 2, 3, 6, 8}, lex);  // "ab" " " "cde" " f" "."
  s.finish();
  EXPECT_EQ(s.chunks, 5u);
  EXPECT_EQ(s.length_histogram, (std::map<std::size_t, std::size_t>{{1, 2}, {2, 2}, {3, 1}}));
  EXPECT_EQ(s.categories["simple"].count, 1u);
  EXPECT_EQ(s.categories["compound"].count, 1u);
  EXPECT_EQ(s.categories["punctuation"].count, 1u);
  EXPECT_EQ(s.categories["other"].count, 2u);
  EXPECT_DOUBLE_EQ(s.categories["other"].mean_length, 1.5);
  double total = 0.0;
  for (const auto& [name, c] : s.categories) total += c.frequency;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Compression, AlternateGatesOnTenBytes) {
  // gates 1,0,1,0,... over 10 bytes -> 5 chunks
  std::vector<std::vector<std::vector<std::size_t>>> routing{{{0, 2, 4, 6, 8}, {0, 2, 4}}};
  auto r = compression_from_routing(routing, {10});
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_NEAR(r[1], 10.0 / 3.0, 1e-12);
  EXPECT_GE(r[1], r[0]);
}

ModelConfig tiny() {
  ModelConfig c;
  c.levels = 2;
  c.router_embed_dim = 4;
  c.router_hidden = 2;
  c.router_gru_layers = 1;
  c.router_mlp_dims = {4};
  c.mixer_heads = 1;
  c.mixer_ffn_hidden = 4;
  c.latent_dim = 2;
  c.latent_hidden = 4;
  c.decoder_value_dim = 4;
  c.decoder_type_dim = 2;
  c.decoder_position_dim = 4;
  c.decoder_hidden = 4;
  c.decoder_layers = 1;
  c.decoder_output_dims = {4};
  return c;
}

TEST(ModelMetrics, AllGatesOn) {
  HNetModel<double> model(tiny(), 1);
  model.force_all_gates_on();
  std::vector<ByteSequence> docs{encode_document("abc def"), encode_document("سلام")};
  auto ratio = compression_ratio(model, docs);
  EXPECT_EQ(ratio, (std::vector<double>{1.0, 1.0}));
  auto stats = chunk_statistics(model, docs, ChunkLexicon{});
  EXPECT_EQ(stats.length_histogram.size(), 1u);
  EXPECT_EQ(stats.length_histogram[1], 15u);
}

TEST(ModelMetrics, BpbIsOrderInvariantAndMatchesLogProbs) {
  HNetModel<double> model(tiny(), 2);
  std::vector<ByteSequence> docs{encode_document("first doc"), encode_document("second")};
  std::vector<ByteSequence> rev{docs[1], docs[0]};
  const double a = bits_per_byte(model, docs);
  EXPECT_NEAR(a, bits_per_byte(model, rev), 1e-12);
  double nats = 0.0;
  for (const auto& d : docs)
    for (double lp : byte_log_probs(model, d)) nats -= lp;
  EXPECT_NEAR(a, nats / std::log(2.0) / 15.0, 1e-12);
  EXPECT_THROW(bits_per_byte(model, {}), DataError);
}

}  // namespace
}  // namespace hnetpp
