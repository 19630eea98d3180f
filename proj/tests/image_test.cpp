// Copyright (c) the IDLat authors
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

#include "idlat/image.hpp"

#include "idlat/binary_io.hpp"

#include "test_support.hpp"

namespace idlat {
namespace {

TEST(Png, GrayRoundTrip) {
  Image img(7, 5, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const auto bytes = encode_png(img);
  ASSERT_GT(bytes.size(), 8u);
  EXPECT_EQ(bytes[1], 'P');
  EXPECT_EQ(decode_png(bytes), img);
}

TEST(Png, RgbRoundTripThroughFile) {
  Image img(4, 9, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(255 - i);
  testing::TempDir dir;
  write_png(img, dir / "a.png");
  EXPECT_EQ(decode_png(bin::read_file((dir / "a.png").string())), img);
}

TEST(Png, GarbageIsFormatError) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_IDLAT_ERROR(decode_png(junk), ErrorCode::kFormat);
  auto good = encode_png(Image(3, 3, 1));
  good.resize(good.size() / 2);
  EXPECT_IDLAT_ERROR(decode_png(good), ErrorCode::kFormat);
}

TEST(Png, InvalidImageRejected) {
  EXPECT_IDLAT_ERROR(Image(2, 2, 2), ErrorCode::kInvalidArgument);
  EXPECT_IDLAT_ERROR(Image(0, 2, 1), ErrorCode::kInvalidArgument);
  Image img(2, 2, 1);
  img.pixels.pop_back();
  EXPECT_IDLAT_ERROR(encode_png(img), ErrorCode::kShapeMismatch);
}

TEST(Colors, DivergingEndpointsAndMiddle) {
  EXPECT_EQ(diverging_color(0.0), (std::array<std::uint8_t, 3>{59, 76, 192}));
  EXPECT_EQ(diverging_color(0.5), (std::array<std::uint8_t, 3>{245, 245, 245}));
  EXPECT_EQ(diverging_color(1.0), (std::array<std::uint8_t, 3>{180, 4, 38}));
  EXPECT_EQ(diverging_color(-3.0), diverging_color(0.0));
  EXPECT_EQ(diverging_color(7.0), diverging_color(1.0));
}

TEST(Colors, GrayLevelClamps) {
  EXPECT_EQ(gray_level(0.0, 0.0, 1.0), 0);
  EXPECT_EQ(gray_level(1.0, 0.0, 1.0), 255);
  EXPECT_EQ(gray_level(2.0, 0.0, 1.0), 255);
  EXPECT_EQ(gray_level(-1.0, 0.0, 1.0), 0);
  EXPECT_NEAR(gray_level(0.5, 0.0, 1.0), 128, 1);
}

}  // namespace
}  // namespace idlat
