/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "proxforge/archive.hpp"
#include "proxforge/proxies.hpp"
#include "proxforge/vit_sim.hpp"
#include "test_support.hpp"

namespace proxforge {
namespace {

using testing::TempDir;

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream os(p, std::ios::trunc);
  os << j.dump(2);
}

TEST(Archive, CaptureRoundTripIsBitExact) {
  TempDir dir("archive_roundtrip");
  Rng rng = make_rng(61);
  const ArchConfig cfg = sample_arch(Space::kPiT, rng);
  const auto net = sim::capture_statistics(cfg, 8, BatchSpec{}, 3);
  write_archive(net, dir.path());
  const auto back = read_archive(dir.path());
  EXPECT_EQ(back, net);
  EXPECT_EQ(score(Proxy{Builtin::kAutoProxA}, back), score(Proxy{Builtin::kAutoProxA}, net));
}

TEST(Archive, SynflowModeAndToyBundleRoundTrip) {
  TempDir dir("archive_toy");
  NetworkStatistics net = testing::random_bundle(62);
  net.capture_mode = CaptureMode::kSynflow;
  net.scale = 3;
  write_archive(net, dir.path());
  const auto m = read_json(dir / "manifest.json");
  EXPECT_EQ(m["format"], "proxforge-stats");
  EXPECT_EQ(m["capture_mode"], "synflow");
  EXPECT_TRUE(m["config"].is_null());
  EXPECT_EQ(read_archive(dir.path()), net);
}

// An archive assembled by hand, the way an external exporter would write it:
// minimal manifest, blobs in the documented binary format, no aux lists.
TEST(Archive, AcceptsExternallyWrittenArchive) {
  TempDir dir("archive_external");
  nlohmann::json layer;
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const std::string file = "x_" + std::string(kSlotNames[s]) + ".bin";
    std::ofstream os(dir / file, std::ios::binary);
    write_tensor(os, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, double(s)}));
    layer["slots"][std::string(kSlotNames[s])] = {{"file", file}, {"shape", {2, 3}}};
  }
  write_json(dir / "manifest.json", {{"format", "proxforge-stats"},
                                     {"version", 1},
                                     {"capture_mode", "standard"},
                                     {"seed", 5},
                                     {"scale", 1},
                                     {"batch", batch_to_json(BatchSpec{})},
                                     {"config", nullptr},
                                     {"layers", {layer}}});
  const auto net = read_archive(dir.path());
  ASSERT_EQ(net.layers.size(), 1u);
  EXPECT_EQ(net.layers[0][StatSlot::kF4g].at(1, 2), 7.0);
  EXPECT_TRUE(net.layers[0].aux_mlp_weights.empty());
  EXPECT_THROW(builtin_score(Builtin::kSnip, net), MissingStatistic);
  EXPECT_FALSE(score_network(autoprox_p_graph(), net).is_invalid());
}

class ArchiveTamper : public ::testing::Test {
 protected:
  void SetUp() override {
    write_archive(testing::random_bundle(63), dir.path());
    manifest = read_json(dir / "manifest.json");
  }
  TempDir dir{"archive_tamper"};
  nlohmann::json manifest;
};

TEST_F(ArchiveTamper, ManifestShapeDisagreement) {
  manifest["layers"][0]["slots"]["F1"]["shape"] = {1, 1};
  write_json(dir / "manifest.json", manifest);
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
}

TEST_F(ArchiveTamper, MissingBlob) {
  std::filesystem::remove(dir / manifest["layers"][0]["slots"]["F2g"]["file"].get<std::string>());
  EXPECT_THROW(read_archive(dir.path()), IoError);
}

TEST_F(ArchiveTamper, PathEscape) {
  manifest["layers"][0]["slots"]["F2g"]["file"] = "../elsewhere.bin";
  write_json(dir / "manifest.json", manifest);
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
}

TEST_F(ArchiveTamper, WeightGradientShapeMismatch) {
  // Dims chosen so F1 (d x 3q) and F2 (t x d) differ.
  Rng rng = make_rng(64);
  NetworkStatistics net;
  net.layers.push_back(testing::random_layer(rng, 2, 3, 4, 5));
  write_archive(net, dir.path());
  manifest = read_json(dir / "manifest.json");
  manifest["layers"][0]["slots"]["F1g"] = manifest["layers"][0]["slots"]["F2"];
  write_json(dir / "manifest.json", manifest);
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
}

TEST_F(ArchiveTamper, WrongFormatAndVersion) {
  manifest["format"] = "other";
  write_json(dir / "manifest.json", manifest);
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
  manifest["format"] = "proxforge-stats";
  manifest["version"] = 2;
  write_json(dir / "manifest.json", manifest);
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
}

TEST_F(ArchiveTamper, TrailingBytesAndMalformedJson) {
  {
    std::ofstream os(dir / manifest["layers"][0]["slots"]["F3"]["file"].get<std::string>(), std::ios::app | std::ios::binary);
    os << "xx";
  }
  EXPECT_THROW(read_archive(dir.path()), SchemaError);
  {
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << "{\"format\": ";
  }
  EXPECT_THROW(read_archive(dir.path()), ParseError);
}

TEST(Archive, MissingDirectoryIsIoError) {
  EXPECT_THROW(read_archive("/nonexistent/proxforge/archive"), IoError);
}

}  // namespace
}  // namespace proxforge
