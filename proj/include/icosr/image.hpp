#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "icosr/core.hpp"

namespace icosr {

// Row-major H x W x C float image, values nominally in [0,1].
struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

// ERP-convention sampling: x wraps around (longitude), y clamps (poles).
inline float bilinear_wrap(const Image& img, double y, double x, int c) {
  const int W = img.width, H = img.height;
  double fx = x - 0.5, fy = y - 0.5;
  int x0 = static_cast<int>(std::floor(fx));
  int y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0, ty = fy - y0;
  auto wrapx = [&](int xi) {
    xi %= W;
    return xi < 0 ? xi + W : xi;
  };
  auto clampy = [&](int yi) { return std::clamp(yi, 0, H - 1); };
  const float v00 = img.at(clampy(y0), wrapx(x0), c);
  const float v01 = img.at(clampy(y0), wrapx(x0 + 1), c);
  const float v10 = img.at(clampy(y0 + 1), wrapx(x0), c);
  const float v11 = img.at(clampy(y0 + 1), wrapx(x0 + 1), c);
  return static_cast<float>((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
}

namespace detail {

inline double cubic_kernel(double t) {
  // Keys cubic, a = -0.5 (standard bicubic).
  const double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

}  // namespace detail

inline float bicubic_wrap(const Image& img, double y, double x, int c) {
  const int W = img.width, H = img.height;
  const double fx = x - 0.5, fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  auto wrapx = [&](int xi) {
    xi %= W;
    return xi < 0 ? xi + W : xi;
  };
  auto clampy = [&](int yi) { return std::clamp(yi, 0, H - 1); };
  double acc = 0.0;
  for (int dy = -1; dy <= 2; ++dy) {
    const double wy = detail::cubic_kernel(fy - (y0 + dy));
    if (wy == 0.0) continue;
    double row = 0.0;
    for (int dx = -1; dx <= 2; ++dx) {
      const double wx = detail::cubic_kernel(fx - (x0 + dx));
      if (wx == 0.0) continue;
      row += wx * img.at(clampy(y0 + dy), wrapx(x0 + dx), c);
    }
    acc += wy * row;
  }
  return static_cast<float>(acc);
}

// Bicubic resize with ERP wrap/clamp semantics (the upscaling baseline).
inline Image bicubic_resize_erp(const Image& img, int out_h, int out_w) {
  Image out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = bicubic_wrap(img, (y + 0.5) * sy, (x + 0.5) * sx, c);
  return out;
}

// ---------------------------------------------------------------------------
// PNG I/O (8- or 16-bit, gray or RGB; alpha is stripped on read).
// ---------------------------------------------------------------------------

inline Image read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // little-endian words below
  png_read_update_info(png, info);

  const int H = static_cast<int>(png_get_image_height(png, info));
  const int W = static_cast<int>(png_get_image_width(png, info));
  const int C = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);

  Image img(H, W, C);
  std::vector<png_byte> rowbuf(png_get_rowbytes(png, info));
  for (int y = 0; y < H; ++y) {
    png_read_row(png, rowbuf.data(), nullptr);
    if (depth == 8) {
      for (int i = 0; i < W * C; ++i) img.data[static_cast<size_t>(y) * W * C + i] = rowbuf[i] / 255.0f;
    } else {
      const uint16_t* row16 = reinterpret_cast<const uint16_t*>(rowbuf.data());
      for (int i = 0; i < W * C; ++i) img.data[static_cast<size_t>(y) * W * C + i] = row16[i] / 65535.0f;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const Image& img, const std::string& path, int bit_depth = 8) {
  if (img.channels != 1 && img.channels != 3) throw IoError("write_png supports 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw IoError("write_png supports 8- or 16-bit output");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const int W = img.width, C = img.channels;
  std::vector<png_byte> rowbuf(static_cast<size_t>(W) * C * (bit_depth / 8));
  for (int y = 0; y < img.height; ++y) {
    if (bit_depth == 8) {
      for (int i = 0; i < W * C; ++i) {
        const float v = std::clamp(img.data[static_cast<size_t>(y) * W * C + i], 0.0f, 1.0f);
        rowbuf[i] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    } else {
      uint16_t* row16 = reinterpret_cast<uint16_t*>(rowbuf.data());
      for (int i = 0; i < W * C; ++i) {
        const float v = std::clamp(img.data[static_cast<size_t>(y) * W * C + i], 0.0f, 1.0f);
        row16[i] = static_cast<uint16_t>(std::lround(v * 65535.0));
      }
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace icosr
