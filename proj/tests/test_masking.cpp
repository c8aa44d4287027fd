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

#include <memory>

#include "stylectl/masking.hpp"
#include "stylectl/toy_data.hpp"
#include "test_support.hpp"

namespace stylectl {
namespace {

using testing::TempDir;

Image gray_image(int w, int h, double v) { return Image(w, h, 1, v); }

TEST(MaskFromImage, WhiteBlackAndBoundary) {
  const Mask white = mask_from_image(gray_image(4, 3, 1.0));
  EXPECT_EQ(white.count(), 12u);
  const Mask black = mask_from_image(gray_image(4, 3, 0.0));
  EXPECT_TRUE(black.empty_region());
  const Mask half = mask_from_image(gray_image(4, 3, 0.5), 0.5);
  EXPECT_EQ(half.count(), 12u);
}

TEST(MaskFiles, WhiteAndBlackPngs) {
  TempDir dir;
  write_png(dir / "white.png", gray_image(5, 5, 1.0));
  write_png(dir / "black.png", gray_image(5, 5, 0.0));
  EXPECT_EQ(load_mask(dir / "white.png").count(), 25u);
  EXPECT_TRUE(load_mask(dir / "black.png").empty_region());
}

TEST(MaskFiles, GrayPixelAtThreshold) {
  // 128/255 rounds above 0.5 while 127/255 falls below it.
  TempDir dir;
  Image img(2, 1, 1);
  img.at(0, 0, 0) = 128.0 / 255.0;
  img.at(0, 0, 1) = 127.0 / 255.0;
  write_png(dir / "g.png", img);
  const Mask m = load_mask(dir / "g.png");
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 1), 0);
}

TEST(MaskFiles, SaveLoadRoundTrip) {
  TempDir dir;
  Mask m(7, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) m.at(y, x) = (x * y) % 3 == 0;
  save_mask(dir / "m.png", m);
  EXPECT_EQ(load_mask(dir / "m.png"), m);
}

TEST(MaskFiles, UnreadableFile) {
  TempDir dir;
  EXPECT_THROW(load_mask(dir / "missing.png"), IoError);
}

TEST(ResampleMask, AllOnesAtEverySite) {
  const auto model = testing::small_toy();
  const auto sites = model.list_attention_sites();
  const auto p = build_pyramid(Mask(32, 32, 1), sites);
  for (const auto& s : sites) {
    const auto& v = p.at(s.index);
    ASSERT_EQ(v.size(), static_cast<std::size_t>(s.spatial_len()));
    for (auto b : v) EXPECT_EQ(b, 1);
  }
}

TEST(ResampleMask, LeftHalfOnEightByEight) {
  Mask m(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 32; ++x) m.at(y, x) = 1;
  const MaskVector v = resample_mask(m, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(v[y * 8 + x], x < 4 ? 1 : 0) << y << "," << x;
}

TEST(ResampleMask, AlignedBlocksRoundTrip) {
  // A 4x4 block pattern upsampled to 16x16 comes back unchanged.
  Mask coarse(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) coarse.at(y, x) = (x + 2 * y) % 3 == 0;
  const Mask fine = resize_mask_nearest(coarse, 16, 16);
  EXPECT_EQ(resample_mask(fine, 4, 4), coarse.bits);
  EXPECT_EQ(resize_mask_nearest(resize_mask_nearest(fine, 4, 4), 16, 16), fine);
}

TEST(ResampleMask, GridLargerThanMask) {
  EXPECT_THROW(resample_mask(Mask(4, 4, 1), 8, 8), ArgumentError);
}

TEST(ResampleMask, ComplementCommutes) {
  std::mt19937_64 rng(3);
  Mask m(32, 32);
  for (auto& b : m.bits) b = rng() & 1;
  for (int g : {1, 2, 4, 8, 16, 32})
    EXPECT_EQ(resample_mask(invert(m), g, g), complement(resample_mask(m, g, g))) << g;
}

TEST(MaskPyramid, MissingSite) {
  MaskPyramid p;
  EXPECT_THROW(p.at(3), ArgumentError);
}

TEST(FaceParser, WholeImageGivesOnes) {
  WholeImageParser parser;
  const Mask m = parse_face(testing::gradient_image(16), &parser, "face");
  EXPECT_EQ(m.count(), 256u);
}

TEST(FaceParser, MissingAdapter) {
  EXPECT_THROW(parse_face(testing::gradient_image(8), nullptr, "face"), CapabilityError);
}

TEST(FaceParser, UnsupportedAttribute) {
  WholeImageParser parser;
  EXPECT_THROW(parse_face(testing::gradient_image(8), &parser, "tail"), ArgumentError);
}

TEST(FaceParser, DirectoryFixtureRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(5);
  const FaceParams face = random_face(StyleFamily::Photo, rng);
  const Mask eyes = mask_from_image(render_attribute_mask(face, "eyes", 32));
  const Mask mouth = mask_from_image(render_attribute_mask(face, "mouth", 32));
  save_mask(dir / "eyes.png", eyes);
  save_mask(dir / "mouth.png", mouth);
  auto parser = std::make_shared<DirectoryParser>(dir.path());
  SerializedParser serialized(parser);
  EXPECT_EQ(serialized.supported_attributes(), (std::vector<std::string>{"eyes", "mouth"}));
  const Image img = render_face(face, 32);
  EXPECT_EQ(parse_face(img, &serialized, "eyes"), eyes);
  EXPECT_EQ(parse_face(img, &serialized, "mouth"), mouth);
}

TEST(FaceParser, FailureCarriesParserName) {
  TempDir dir;
  save_mask(dir / "eyes.png", Mask(8, 8, 1));
  DirectoryParser parser(dir.path());
  try {
    parse_face(testing::gradient_image(16), &parser, "eyes");
    FAIL() << "expected a parser failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("directory:"), std::string::npos);
  }
}

}  // namespace
}  // namespace stylectl
