/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <fstream>

#include "stylectl/cop.hpp"
#include "stylectl/toy_data.hpp"
#include "test_support.hpp"

namespace stylectl {
namespace {

using testing::fast_config;
using testing::gradient_image;
using testing::small_toy;
using testing::TempDir;

Bytes png_of(const Image& img) { return encode_png(quantize8(img)); }

Image face(StyleFamily f, std::uint64_t seed, int size = 32) {
  std::mt19937_64 rng(seed);
  return render_face(random_face(f, rng), size);
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  return nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
}

void write_manifest_json(const std::filesystem::path& dir, const nlohmann::json& j) {
  write_file_atomic(dir / "manifest.json", j.dump(2));
}

class ChainTest : public ::testing::Test {
 protected:
  ChainTest() : model_(small_toy()), codec_(model_.codec()) {}

  Session fresh(const std::string& name = "s") {
    return create_session(dir_ / name, png_of(face(StyleFamily::Photo, 1)));
  }

  StepRequest request(Session& s, std::uint64_t seed, StyleFamily f = StyleFamily::Comic) {
    StepRequest r;
    r.reference_ref = add_asset(s, png_of(face(f, seed)), AssetKind::Image);
    r.cfg = fast_config();
    r.cfg.layer_gate = LayerGate::all();
    return r;
  }

  TempDir dir_;
  ToyUNet model_;
  std::shared_ptr<const LatentCodec> codec_;
};

TEST_F(ChainTest, CreateLargeImageSession) {
  const Session s = create_session(dir_ / "big", png_of(gradient_image(512)));
  EXPECT_TRUE(s.steps.empty());
  EXPECT_EQ(s.head_ref(), s.source_ref);
  EXPECT_EQ(s.assets.at(s.source_ref).width, 512);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "big" / "manifest.json"));
}

TEST_F(ChainTest, SameImageTwiceSharesAssetHash) {
  const Bytes png = png_of(gradient_image(16));
  const Session a = create_session(dir_ / "a", png);
  const Session b = create_session(dir_ / "b", png);
  EXPECT_NE(a.id, b.id);
  EXPECT_EQ(a.source_ref, b.source_ref);
  EXPECT_EQ(a.source_ref.size(), 64u);
}

TEST_F(ChainTest, CorruptUploadRejected) {
  const Bytes junk = {0x89, 'P', 'N', 'G', 1, 2, 3};
  EXPECT_THROW(create_session(dir_ / "c", junk), ArgumentError);
  EXPECT_FALSE(std::filesystem::exists(dir_ / "c" / "manifest.json"));
}

TEST_F(ChainTest, MaskAssetsAreBinary) {
  Session s = fresh();
  Image gray(8, 8, 1, 0.3);
  gray.at(0, 2, 2) = 0.9;
  const std::string id = add_asset(s, png_of(gray), AssetKind::Mask);
  const Mask m = load_asset_mask(s, id);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_EQ(s.assets.at(id).channels, 1);
}

TEST_F(ChainTest, FirstStepEqualsPlainStylize) {
  Session s = fresh();
  const StepRequest req = request(s, 2);
  const SessionStep st = run_step(s, req, model_, *codec_);
  ASSERT_EQ(st.status, StepStatus::Done) << st.error;
  EXPECT_EQ(s.head_ref(), *st.output_ref);

  StylizeRequest plain;
  plain.source = load_asset_image(s, s.source_ref);
  plain.reference = load_asset_image(s, req.reference_ref);
  plain.cfg = req.cfg;
  EXPECT_EQ(load_asset_image(s, *st.output_ref),
            quantize8(stylize(plain, model_, *codec_).output));
}

TEST_F(ChainTest, StepsChainFromHead) {
  Session s = fresh();
  const SessionStep a = run_step(s, request(s, 2), model_, *codec_);
  StepRequest second = request(s, 3, StyleFamily::Ink);
  Mask m(32, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) m.at(y, x) = 1;
  second.mask_ref = add_asset(s, png_of(mask_to_image(m)), AssetKind::Mask);
  const SessionStep b = run_step(s, second, model_, *codec_);
  ASSERT_EQ(b.status, StepStatus::Done) << b.error;
  EXPECT_EQ(b.source_ref, *a.output_ref);
  EXPECT_EQ(s.steps.size(), 2u);
  EXPECT_NE(load_asset_image(s, *b.output_ref), load_asset_image(s, *a.output_ref));
}

TEST_F(ChainTest, RevertToFirstStep) {
  Session s = fresh();
  std::vector<std::string> outputs;
  for (int i = 0; i < 3; ++i) outputs.push_back(*run_step(s, request(s, 10 + i), model_, *codec_).output_ref);
  revert(s, 0);
  EXPECT_EQ(s.steps.size(), 1u);
  EXPECT_EQ(s.head_ref(), outputs[0]);
  EXPECT_EQ(s.off_chain.size(), 2u);
  for (const auto& st : s.off_chain) EXPECT_TRUE(st.reverted);
  EXPECT_EQ(load_session(s.dir), s);
}

TEST_F(ChainTest, RevertThenRerunIsDeterministic) {
  Session s = fresh();
  run_step(s, request(s, 2), model_, *codec_);
  const StepRequest again = request(s, 5);
  const SessionStep first = run_step(s, again, model_, *codec_);
  revert(s, 0);
  const SessionStep second = run_step(s, again, model_, *codec_);
  EXPECT_EQ(first.output_ref, second.output_ref);
}

TEST_F(ChainTest, RevertOutOfRange) {
  Session s = fresh();
  EXPECT_THROW(revert(s, 0), ArgumentError);
  run_step(s, request(s, 2), model_, *codec_);
  EXPECT_THROW(revert(s, 1), ArgumentError);
  EXPECT_THROW(revert(s, -1), ArgumentError);
}

TEST_F(ChainTest, ConcurrentStepIsBusy) {
  Session s = fresh();
  const StepRequest req = request(s, 2);
  SessionLock held(s.dir);
  EXPECT_THROW(run_step(s, req, model_, *codec_), BusyError);
  EXPECT_THROW(revert(s, 0), ArgumentError);
}

TEST_F(ChainTest, PipelineFailureKeepsHead) {
  Session s = fresh();
  const StepRequest req = request(s, 2);
  testing::FailingDenoiser broken(32, 3);
  IdentityCodec identity;
  const SessionStep st = run_step(s, req, broken, identity);
  EXPECT_EQ(st.status, StepStatus::Failed);
  EXPECT_NE(st.error.find("injected"), std::string::npos);
  EXPECT_TRUE(s.steps.empty());
  EXPECT_EQ(s.head_ref(), s.source_ref);
  ASSERT_EQ(s.off_chain.size(), 1u);
  EXPECT_EQ(load_session(s.dir), s);
}

TEST_F(ChainTest, UnknownAssetAndWrongKind) {
  Session s = fresh();
  StepRequest req = request(s, 2);
  req.reference_ref = std::string(64, 'a');
  EXPECT_THROW(prepare_step(s, req), NotFoundError);
  req = request(s, 2);
  req.mask_ref = req.reference_ref;
  EXPECT_THROW(prepare_step(s, req), ArgumentError);
}

TEST_F(ChainTest, MaskSizeMustMatchHead) {
  Session s = fresh();
  StepRequest req = request(s, 2);
  req.mask_ref = add_asset(s, png_of(mask_to_image(Mask(16, 16, 1))), AssetKind::Mask);
  EXPECT_THROW(prepare_step(s, req), ArgumentError);
}

TEST_F(ChainTest, CommitRejectsMovedHead) {
  Session s = fresh();
  const StepRequest req = request(s, 2);
  PreparedStep p = prepare_step(s, req);
  run_step(s, request(s, 3), model_, *codec_);
  const StepOutcome outcome = execute_step(p, model_, *codec_);
  EXPECT_THROW(commit_step(s, std::move(p), outcome), BusyError);
}

TEST_F(ChainTest, ThreeStepRoundTrip) {
  Session s = fresh();
  for (int i = 0; i < 3; ++i) run_step(s, request(s, 20 + i), model_, *codec_);
  const Session loaded = load_session(s.dir);
  EXPECT_EQ(loaded, s);
  save_session(loaded, dir_ / "copy");
  EXPECT_EQ(load_session(dir_ / "copy"), s);
}

TEST_F(ChainTest, EmptyRoundTrip) {
  const Session s = fresh();
  EXPECT_EQ(load_session(s.dir), s);
}

TEST_F(ChainTest, DanglingAssetNamed) {
  const Session s = fresh();
  auto j = read_manifest(s.dir);
  const std::string bogus(64, 'f');
  j["source"] = bogus;
  write_manifest_json(s.dir, j);
  try {
    load_session(s.dir);
    FAIL() << "expected a load error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(bogus), std::string::npos);
  }
}

TEST_F(ChainTest, MissingAssetFile) {
  const Session s = fresh();
  std::filesystem::remove(asset_path(s.dir, s.source_ref));
  EXPECT_THROW(load_session(s.dir), IoError);
}

TEST_F(ChainTest, VersionMismatchNamesVersions) {
  const Session s = fresh();
  auto j = read_manifest(s.dir);
  j["schema_version"] = 7;
  write_manifest_json(s.dir, j);
  try {
    load_session(s.dir);
    FAIL() << "expected a migration error";
  } catch (const MigrationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('7'), std::string::npos);
    EXPECT_NE(msg.find('1'), std::string::npos);
  }
}

TEST_F(ChainTest, ManifestLayout) {
  Session s = fresh();
  run_step(s, request(s, 2), model_, *codec_);
  const auto j = read_manifest(s.dir);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("session_id"), s.id);
  EXPECT_EQ(j.at("head"), s.head_ref());
  ASSERT_EQ(j.at("steps").size(), 1u);
  const auto& st = j.at("steps")[0];
  EXPECT_EQ(st.at("status"), "done");
  EXPECT_EQ(st.at("cfg").at("omega"), 1.2);
  EXPECT_EQ(st.at("cfg").at("layer_gate"), "all");
}

TEST_F(ChainTest, MissingSessionIsNotFound) {
  EXPECT_THROW(load_session(dir_ / "nothing"), NotFoundError);
}

}  // namespace
}  // namespace stylectl
