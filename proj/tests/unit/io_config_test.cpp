// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "../common/oracles.hpp"
#include "tfi/architectures.hpp"
#include "tfi/config.hpp"
#include "tfi/data.hpp"
#include "tfi/io.hpp"

namespace tfi {
namespace {

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tfi_io_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(FormatTest, ShortestRoundTrip) {
  EXPECT_EQ(FormatNumber(0.1), "0.1");
  EXPECT_EQ(FormatNumber(1.0), "1");
  EXPECT_EQ(FormatNumber(-2.5e-7), "-2.5e-07");
  for (double v : {0.1 + 0.2, M_PI, 1e-300, 123456.789}) EXPECT_EQ(std::stod(FormatNumber(v)), v);
  EXPECT_EQ(FormatNumber(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(FormatNumber(std::numeric_limits<double>::infinity()), "inf");
}

TEST(BlobTest, LittleEndianRoundTripAndLengthCheck) {
  const auto dir = TempDir("blob");
  const std::vector<double> v{1.0, -0.0, 3.25, 1e-310};
  WriteFloat64Blob(dir / "v.bin", v);
  EXPECT_EQ(std::filesystem::file_size(dir / "v.bin"), 32u);
  std::ifstream in(dir / "v.bin", std::ios::binary);
  unsigned char first[8];
  in.read(reinterpret_cast<char*>(first), 8);
  // 1.0 is 0x3ff0000000000000; little-endian puts 0x3f last.
  EXPECT_EQ(first[7], 0x3f);
  EXPECT_EQ(first[6], 0xf0);
  EXPECT_EQ(first[0], 0x00);
  const auto back = ReadFloat64Blob(dir / "v.bin", 4);
  EXPECT_EQ(back, v);
  EXPECT_TRUE(std::signbit(back[1]));
  EXPECT_THROW(ReadFloat64Blob(dir / "v.bin", 5), Error);
}

TEST(ParamsTest, SaveLoadRoundTrip) {
  const auto dir = TempDir("params");
  const Network net = Network::Initialize(BuildArchitecture("dense_cnn", {3, 8, 8}, 4, 2), 5);
  SaveParams(dir / "model", net);
  const Json meta = ReadJsonFile(dir / "model.json");
  EXPECT_EQ(meta.at("format"), "tfi-params");
  EXPECT_EQ(meta.at("length"), net.params().size());
  const Network back = LoadParams(dir / "model");
  EXPECT_EQ(back.params().values, net.params().values);
  EXPECT_EQ(back.arch().Describe(), net.arch().Describe());
}

TEST(TensorFileTest, RoundTripWithShape) {
  const auto dir = TempDir("tensor");
  Rng rng(1);
  const Tensor t = oracle::RandomTensor({2, 3, 5}, rng);
  SaveTensor(dir / "t", t);
  EXPECT_EQ(LoadTensor(dir / "t"), t);
}

TEST(PnmTest, HeaderAndPixelScaling) {
  const auto dir = TempDir("pnm");
  Tensor img({1, 2, 2}, std::vector<double>{0.0, 0.5, 1.0, 2.0});
  WritePnm(dir / "a.pgm", img, 0.0, 1.0);
  const std::string text = ReadTextFile(dir / "a.pgm");
  ASSERT_EQ(text.substr(0, 11), "P5\n2 2\n255\n");
  EXPECT_EQ(static_cast<unsigned char>(text[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(text[12]), 128);
  EXPECT_EQ(static_cast<unsigned char>(text[13]), 255);
  EXPECT_EQ(static_cast<unsigned char>(text[14]), 255);
  WritePnm(dir / "b.ppm", Tensor({3, 2, 2}), 0.0, 1.0);
  EXPECT_EQ(ReadTextFile(dir / "b.ppm").substr(0, 2), "P6");
}

TEST(JsonFileTest, ParseErrorIsConfigError) {
  const auto dir = TempDir("json");
  WriteTextFile(dir / "bad.json", "{\"a\": ");
  EXPECT_THROW(ReadJsonFile(dir / "bad.json"), ConfigError);
  EXPECT_THROW(ReadJsonFile(dir / "missing.json"), ConfigError);
}

TEST(IdxTest, ReadsBigEndianFiles) {
  const auto dir = TempDir("idx");
  auto be32 = [](std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  {
    std::ofstream img(dir / "img", std::ios::binary), lab(dir / "lab", std::ios::binary);
    be32(img, 0x803), be32(img, 2), be32(img, 2), be32(img, 2);
    const unsigned char px[8] = {0, 255, 51, 0, 0, 0, 0, 102};
    img.write(reinterpret_cast<const char*>(px), 8);
    be32(lab, 0x801), be32(lab, 2);
    const unsigned char labels[2] = {3, 1};
    lab.write(reinterpret_cast<const char*>(labels), 2);
  }
  const Dataset d = ReadIdx(dir / "img", dir / "lab");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.sample_shape, (Shape{1, 2, 2}));
  EXPECT_EQ(d.labels, (std::vector<int>{3, 1}));
  EXPECT_DOUBLE_EQ(d.images[0][1], 1.0);
  EXPECT_DOUBLE_EQ(d.images[0][2], 0.2);
  EXPECT_DOUBLE_EQ(d.images[1][3], 0.4);
  EXPECT_THROW(ReadIdx(dir / "lab", dir / "img"), ConfigError);
}

TEST(ProceduralTest, DeterministicBalancedAndInRange) {
  ProceduralSpec spec;
  spec.train_size = 80;
  spec.test_size = 16;
  spec.probe_size = 8;
  const DatasetSplits a = MakeProcedural(spec), b = MakeProcedural(spec);
  EXPECT_EQ(a.train.labels, b.train.labels);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train.images[i], b.train.images[i]);
    for (double v : a.train.images[i].values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  std::vector<int> counts(8, 0);
  for (int l : a.train.labels) ++counts[static_cast<std::size_t>(l)];
  for (int c : counts) EXPECT_EQ(c, 10);
  EXPECT_NE(a.train.images[0], a.test.images[0]);
}

TEST(ConfigTest, JsonRoundTrip) {
  ExperimentConfig c = DeskPreset();
  c.aggregation.byzantine = 2;
  c.attack.max_total_weight = 0.3;
  c.attack.ablations.no_fractal = true;
  c.trigger.sigmas = {0.0, 1.5};
  c.trigger.alphas = {0.7, 0.3};
  EXPECT_EQ(ConfigFromJson(ToJson(c)), c);
  EXPECT_EQ(ConfigFromJson(Json::parse(ToJson(c).dump())), c);
  EXPECT_EQ(ConfigFromJson(ToJson(ExperimentConfig{})), ExperimentConfig{});
}

TEST(ConfigTest, MissingKeysTakeDefaults) {
  const ExperimentConfig c = ConfigFromJson(Json::parse(R"({"schema_version": 1, "attack": {"eps0": 2}})"));
  ExperimentConfig expected;
  expected.attack.eps0 = 2.0;
  EXPECT_EQ(c, expected);
}

TEST(ConfigTest, StrictKeysTypesAndVersion) {
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 2})")), ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"name": "x"})")), ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 1, "nmae": "x"})")), ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 1, "training": {"lr": "fast"}})")),
               ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 1, "training": {"rounds": 2.5}})")),
               ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 1, "attack": {"ablations": {"x": true}}})")),
               ConfigError);
  EXPECT_THROW(ConfigFromJson(Json::parse(R"({"schema_version": 1, "partition": {"n_clients": -3}})")),
               ConfigError);
}

TEST(ConfigTest, ValidationRejectsInconsistentSettings) {
  auto invalid = [](auto mutate) {
    ExperimentConfig c = DeskPreset();
    mutate(c);
    EXPECT_THROW(c.Validate(), ConfigError);
  };
  DeskPreset().Validate();
  invalid([](ExperimentConfig& c) { c.architecture = "vgg"; });
  invalid([](ExperimentConfig& c) { c.attack.method = "badnets"; });
  invalid([](ExperimentConfig& c) { c.attack.target_class = 8; });
  invalid([](ExperimentConfig& c) { c.dataset.image_size = 10; });
  invalid([](ExperimentConfig& c) { c.aggregation.kind = "median"; });
  invalid([](ExperimentConfig& c) {
    c.aggregation.kind = "krum";
    c.aggregation.byzantine = 8;
  });
  invalid([](ExperimentConfig& c) { c.trigger.compat_exponent = 1.0; });
  invalid([](ExperimentConfig& c) { c.repeats = 0; });
}

TEST(ConfigTest, PresetsAndOutputRoot) {
  EXPECT_EQ(Preset("desk"), DeskPreset());
  EXPECT_THROW(Preset("cifar"), ConfigError);
  unsetenv(kOutputRootEnv);
  EXPECT_EQ(ResolveOutputDir("runs/a"), std::filesystem::path("runs/a"));
  setenv(kOutputRootEnv, "/tmp/root", 1);
  EXPECT_EQ(ResolveOutputDir("runs/a"), std::filesystem::path("/tmp/root/runs/a"));
  EXPECT_EQ(ResolveOutputDir("/abs/place"), std::filesystem::path("/tmp/root/place"));
  unsetenv(kOutputRootEnv);
}

}  // namespace
}  // namespace tfi
