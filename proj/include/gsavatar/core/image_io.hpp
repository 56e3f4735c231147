#pragma once

#include <png.h>

#include <cstdio>
#include <vector>

#include "gsavatar/core/tensor.hpp"

namespace gsavatar {

// Float images in [0,1], H*W*3 interleaved.
struct ImageRGB {
  long H = 0, W = 0;
  std::vector<real> px;

  ImageRGB() = default;
  ImageRGB(long h, long w) : H(h), W(w), px(size_t(h) * size_t(w) * 3, 0.0) {}

  real& at(long y, long x, long c) { return px[(size_t(y) * size_t(W) + size_t(x)) * 3 + size_t(c)]; }
  real at(long y, long x, long c) const {
    return px[(size_t(y) * size_t(W) + size_t(x)) * 3 + size_t(c)];
  }
};

struct ImageGray {
  long H = 0, W = 0;
  std::vector<real> px;

  ImageGray() = default;
  ImageGray(long h, long w) : H(h), W(w), px(size_t(h) * size_t(w), 0.0) {}

  real& at(long y, long x) { return px[size_t(y) * size_t(W) + size_t(x)]; }
  real at(long y, long x) const { return px[size_t(y) * size_t(W) + size_t(x)]; }
};

inline uint8_t to_u8(real x) {
  real v = x < 0 ? 0 : (x > 1 ? 1 : x);
  return uint8_t(std::lround(v * 255.0));
}

namespace detail {
struct PngWriteCtx {
  FILE* f = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
};
struct PngReadCtx {
  FILE* f = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};
}  // namespace detail

inline void write_png_rgb(const std::string& path, const ImageRGB& img) {
  detail::PngWriteCtx c;
  c.f = std::fopen(path.c_str(), "wb");
  GS_CHECK(c.f, "png: cannot open for write: " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  c.info = png_create_info_struct(c.png);
  GS_CHECK(c.png && c.info, "png: init failed");
  GS_CHECK(!setjmp(png_jmpbuf(c.png)), "png: write error: " + path);
  png_init_io(c.png, c.f);
  png_set_IHDR(c.png, c.info, png_uint_32(img.W), png_uint_32(img.H), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  std::vector<uint8_t> row(size_t(img.W) * 3);
  for (long y = 0; y < img.H; ++y) {
    for (long x = 0; x < img.W; ++x)
      for (long ch = 0; ch < 3; ++ch) row[size_t(x) * 3 + size_t(ch)] = to_u8(img.at(y, x, ch));
    png_write_row(c.png, row.data());
  }
  png_write_end(c.png, nullptr);
}

inline void write_png_gray(const std::string& path, const ImageGray& img) {
  detail::PngWriteCtx c;
  c.f = std::fopen(path.c_str(), "wb");
  GS_CHECK(c.f, "png: cannot open for write: " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  c.info = png_create_info_struct(c.png);
  GS_CHECK(c.png && c.info, "png: init failed");
  GS_CHECK(!setjmp(png_jmpbuf(c.png)), "png: write error: " + path);
  png_init_io(c.png, c.f);
  png_set_IHDR(c.png, c.info, png_uint_32(img.W), png_uint_32(img.H), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  std::vector<uint8_t> row(size_t(img.W));
  for (long y = 0; y < img.H; ++y) {
    for (long x = 0; x < img.W; ++x) row[size_t(x)] = to_u8(img.at(y, x));
    png_write_row(c.png, row.data());
  }
  png_write_end(c.png, nullptr);
}

inline ImageRGB read_png_rgb(const std::string& path) {
  detail::PngReadCtx c;
  c.f = std::fopen(path.c_str(), "rb");
  GS_CHECK(c.f, "png: cannot open: " + path);
  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  c.info = png_create_info_struct(c.png);
  GS_CHECK(c.png && c.info, "png: init failed");
  GS_CHECK(!setjmp(png_jmpbuf(c.png)), "png: read error: " + path);
  png_init_io(c.png, c.f);
  png_read_info(c.png, c.info);
  png_set_expand(c.png);
  png_set_strip_16(c.png);
  png_set_strip_alpha(c.png);
  if (png_get_color_type(c.png, c.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(c.png, c.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(c.png);
  png_read_update_info(c.png, c.info);
  long W = long(png_get_image_width(c.png, c.info));
  long H = long(png_get_image_height(c.png, c.info));
  GS_CHECK(png_get_channels(c.png, c.info) == 3, "png: expected 3 channels after expand");
  ImageRGB img(H, W);
  std::vector<uint8_t> row(size_t(W) * 3);
  for (long y = 0; y < H; ++y) {
    png_read_row(c.png, row.data(), nullptr);
    for (long x = 0; x < W; ++x)
      for (long ch = 0; ch < 3; ++ch) img.at(y, x, ch) = real(row[size_t(x) * 3 + size_t(ch)]) / 255.0;
  }
  return img;
}

inline ImageGray read_png_gray(const std::string& path) {
  ImageRGB rgb = read_png_rgb(path);
  ImageGray g(rgb.H, rgb.W);
  for (long y = 0; y < rgb.H; ++y)
    for (long x = 0; x < rgb.W; ++x)
      g.at(y, x) = (rgb.at(y, x, 0) + rgb.at(y, x, 1) + rgb.at(y, x, 2)) / 3.0;
  return g;
}

// (H*W,3) tensor <-> image, and (3,H*W) channel-major grid for conv input.
inline Tensor image_to_rows(const ImageRGB& img) {
  Tensor t(img.H * img.W, 3);
  for (long i = 0; i < img.H * img.W; ++i)
    for (long c = 0; c < 3; ++c) t(i, c) = img.px[size_t(i) * 3 + size_t(c)];
  return t;
}

inline ImageRGB rows_to_image(const Tensor& t, long H, long W) {
  GS_CHECK(t.rows() == H * W && t.cols() >= 3, "rows_to_image: shape");
  ImageRGB img(H, W);
  for (long i = 0; i < H * W; ++i)
    for (long c = 0; c < 3; ++c) img.px[size_t(i) * 3 + size_t(c)] = t(i, c);
  return img;
}

inline Tensor image_to_chw(const ImageRGB& img) {
  Tensor t(3, img.H * img.W);
  for (long i = 0; i < img.H * img.W; ++i)
    for (long c = 0; c < 3; ++c) t(c, i) = img.px[size_t(i) * 3 + size_t(c)];
  return t;
}

}  // namespace gsavatar
