#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hnetpp/checkpoint.hpp"
#include "hnetpp/config.hpp"

namespace hnetpp {
namespace {

TEST(Config, DefaultsRoundTrip) {
  RunConfig c;
  json j = config_to_json(c);
  EXPECT_EQ(j["optim.lr"], 2e-4);
  EXPECT_EQ(j["model.levels"], 3);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, OverridesApply) {
  auto c = config_from_json(json::parse(R"({"model.levels": 2, "optim.lr": 0.003, "loss.target_rate": [0.4, 0.3],
                                            "train.gate_mode": "soft"})"));
  EXPECT_EQ(c.model.levels, 2u);
  EXPECT_DOUBLE_EQ(c.optim.lr, 3e-3);
  EXPECT_EQ(c.aux.target_rates, (std::vector<double>{0.4, 0.3}));
  EXPECT_EQ(c.train.gate_mode, "soft");
}

TEST(Config, RejectsUnknownKey) {
  try {
    config_from_json(json::parse(R"({"optim.learning_rate": 0.1})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("optim.learning_rate"), std::string::npos);
  }
}

TEST(Config, RejectsWrongTypes) {
  EXPECT_THROW(config_from_json(json::parse(R"({"model.levels": -1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"model.levels": 1.5})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"optim.lr": "fast"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"model.mixer.causal": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"loss.target_rate": 0.5})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse("[1]")), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(config_from_json(json::parse(R"({"data.split": [0.5, 0.4]})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"data.split": [0.5, 0.4, 0.2]})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train.precision": "f16"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"model.router.hidden": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"loss.target_rate": [1.5]})")), ConfigError);
}

TEST(Config, LoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "hnetpp_config_test.json";
  {
    std::ofstream(path) << R"({"train.steps": 7})";
  }
  EXPECT_EQ(load_config(path.string()).train.steps, 7u);
  {
    std::ofstream(path) << "{not json";
  }
  EXPECT_THROW(load_config(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path.string()), ConfigError);
}

struct CheckpointFixture : ::testing::Test {
  std::string path = (std::filesystem::temp_directory_path() / "hnetpp_ckpt_test.bin").string();
  ParameterStore<double> store;
  RunConfig config;

  void SetUp() override {
    Rng rng(1);
    auto a = Tensor<double>::matrix(2, 3);
    for (auto& v : a.values()) v = rng.normal();
    auto b = Tensor<double>::matrix(1, 4);
    for (auto& v : b.values()) v = rng.normal();
    store.add("layer.weight", a);
    store.add("layer.bias", b);
    config.train.steps = 42;
  }
  void TearDown() override { std::filesystem::remove(path); }

  std::vector<char> bytes() {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  }
  void write(const std::vector<char>& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
  }
};

TEST_F(CheckpointFixture, RoundTripIsBitExact) {
  AdamState<double> adam;
  adam.init(store);
  adam.m[0][1] = 0.25;
  adam.v[1][3] = 1e-9;
  adam.steps = 17;
  save_checkpoint(path, config, 9, store, &adam, json{{"note", "x"}});
  auto ck = read_checkpoint(path);
  EXPECT_EQ(ck.step, 9u);
  EXPECT_EQ(ck.config.train.steps, 42u);
  EXPECT_EQ(ck.meta["note"], "x");

  ParameterStore<double> other;
  other.add("layer.weight", Tensor<double>::matrix(2, 3));
  other.add("layer.bias", Tensor<double>::matrix(1, 4));
  restore_parameters(ck, other);
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(other[i].value, store[i].value);
  AdamState<double> adam2;
  ASSERT_TRUE(restore_adam(ck, other, adam2));
  EXPECT_EQ(adam2.steps, 17u);
  EXPECT_EQ(adam2.m[0][1], 0.25);
  EXPECT_EQ(adam2.v[1][3], 1e-9);
}

TEST_F(CheckpointFixture, RejectsBadMagic) {
  save_checkpoint(path, config, 0, store);
  auto b = bytes();
  b[0] = 'X';
  write(b);
  EXPECT_THROW(read_checkpoint(path), CheckpointError);
}

TEST_F(CheckpointFixture, RejectsBadVersion) {
  save_checkpoint(path, config, 0, store);
  auto b = bytes();
  b[8] = 9;
  write(b);
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos);
  }
}

TEST_F(CheckpointFixture, RejectsTruncation) {
  save_checkpoint(path, config, 0, store);
  auto b = bytes();
  for (std::size_t cut : {std::size_t{5}, std::size_t{30}, b.size() - 1}) {
    write(std::vector<char>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_THROW(read_checkpoint(path), CheckpointError) << cut;
  }
}

TEST_F(CheckpointFixture, RejectsShapeAndNameMismatch) {
  save_checkpoint(path, config, 0, store);
  auto ck = read_checkpoint(path);
  ParameterStore<double> wrong_shape;
  wrong_shape.add("layer.weight", Tensor<double>::matrix(3, 2));
  wrong_shape.add("layer.bias", Tensor<double>::matrix(1, 4));
  EXPECT_THROW(restore_parameters(ck, wrong_shape), CheckpointError);
  ParameterStore<double> wrong_name;
  wrong_name.add("layer.weight", Tensor<double>::matrix(2, 3));
  wrong_name.add("layer.gain", Tensor<double>::matrix(1, 4));
  EXPECT_THROW(restore_parameters(ck, wrong_name), CheckpointError);
  ParameterStore<double> fewer;
  fewer.add("layer.weight", Tensor<double>::matrix(2, 3));
  EXPECT_THROW(restore_parameters(ck, fewer), CheckpointError);
  ParameterStore<float> wrong_dtype;
  wrong_dtype.add("layer.weight", Tensor<float>::matrix(2, 3));
  wrong_dtype.add("layer.bias", Tensor<float>::matrix(1, 4));
  EXPECT_THROW(restore_parameters(ck, wrong_dtype), CheckpointError);
}

TEST_F(CheckpointFixture, MissingFile) { EXPECT_THROW(read_checkpoint(path + ".absent"), CheckpointError); }

}  // namespace
}  // namespace hnetpp
