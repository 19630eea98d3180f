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

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include "idlat/binary_io.hpp"
#include "idlat/error.hpp"

namespace idlat {
namespace {

struct ReadState {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

struct ErrorSink {
  char message[256];
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

int color_type(int channels) {
  if (channels == 1) return PNG_COLOR_TYPE_GRAY;
  if (channels == 3) return PNG_COLOR_TYPE_RGB;
  throw Error(ErrorCode::kInvalidArgument, "images need 1 or 3 channels");
}

void append(png_structp p, png_bytep data, png_size_t n) {
  auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
  buf->insert(buf->end(), data, data + n);
}

void consume(png_structp p, png_bytep data, png_size_t n) {
  auto* s = static_cast<ReadState*>(png_get_io_ptr(p));
  if (s->pos + n > s->size) png_error(p, "truncated image");
  std::memcpy(data, s->data + s->pos, n);
  s->pos += n;
}

// libpng reports errors by longjmp; these two functions keep only trivially
// destructible locals so the jump skips no destructors.
bool write_rows(const Image& img, int type, std::vector<std::uint8_t>* out, ErrorSink* sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, sink, png_fail, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, const_cast<png_bytep>(img.at(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct Header {
  png_uint_32 width;
  png_uint_32 height;
  int type;
  int depth;
};

bool read_image(ReadState* state, Header* header, Image* img, ErrorSink* sink) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, sink, png_fail, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, state, consume);
  png_read_info(png, info);
  header->width = png_get_image_width(png, info);
  header->height = png_get_image_height(png, info);
  header->type = png_get_color_type(png, info);
  header->depth = png_get_bit_depth(png, info);
  const bool supported = header->depth == 8 && (header->type == PNG_COLOR_TYPE_GRAY || header->type == PNG_COLOR_TYPE_RGB) &&
                         header->width > 0 && header->height > 0 && header->width <= 65536 && header->height <= 65536;
  if (supported) {
    img->width = static_cast<int>(header->width);
    img->height = static_cast<int>(header->height);
    img->channels = header->type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    img->pixels.resize(static_cast<std::size_t>(img->width) * img->height * img->channels);
    for (int y = 0; y < img->height; ++y) png_read_row(png, img->at(0, y), nullptr);
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

Image::Image(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  color_type(c);
  pixels.assign(static_cast<std::size_t>(w) * h * c, 0);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  const int type = color_type(img.channels);
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw Error(ErrorCode::kShapeMismatch, "image pixel buffer size does not match its dimensions");
  }
  std::vector<std::uint8_t> out;
  ErrorSink sink{};
  if (!write_rows(img, type, &out, &sink)) throw Error(ErrorCode::kIo, std::string("png: ") + sink.message);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(ErrorCode::kFormat, "not a PNG image");
  ReadState state{bytes.data(), bytes.size(), 0};
  Header header{};
  Image img;
  ErrorSink sink{};
  if (!read_image(&state, &header, &img, &sink)) throw Error(ErrorCode::kFormat, std::string("png: ") + sink.message);
  if (img.pixels.empty()) throw Error(ErrorCode::kFormat, "only 8-bit gray or RGB images are supported");
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) { bin::write_file(path.string(), encode_png(img)); }

std::array<std::uint8_t, 3> diverging_color(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
  // Blue (59, 76, 192) -> white -> red (180, 4, 38).
  const double lo[3] = {59, 76, 192}, mid[3] = {245, 245, 245}, hi[3] = {180, 4, 38};
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k) {
    const double v = t < 0.5 ? lo[k] + (mid[k] - lo[k]) * (t / 0.5) : mid[k] + (hi[k] - mid[k]) * ((t - 0.5) / 0.5);
    c[k] = static_cast<std::uint8_t>(std::lround(v));
  }
  return c;
}

std::uint8_t gray_level(double v, double lo, double hi) {
  if (!(hi > lo) || !std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp((v - lo) / (hi - lo), 0.0, 1.0)));
}

}  // namespace idlat
