#pragma once

#include "progslam/core/types.hpp"

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

namespace progslam {

// 8-bit interleaved RGB image. Continuous image coordinates put pixel
// (i, j) at (i + 0.5, j + 0.5).
struct ImageRgb8 {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // 3 bytes per pixel, row-major

  ImageRgb8() = default;
  ImageRgb8(int w, int h) : width(w), height(h), data(3 * w * h, 0) {}

  uint8_t* px(int i, int j) { return data.data() + 3 * (j * width + i); }
  const uint8_t* px(int i, int j) const {
    return data.data() + 3 * (j * width + i);
  }

  Vec3 at(int i, int j) const {
    const uint8_t* p = px(i, j);
    return Vec3(p[0], p[1], p[2]) / 255.0;
  }

  void set(int i, int j, const Vec3& rgb) {
    uint8_t* p = px(i, j);
    for (int c = 0; c < 3; ++c) {
      double v = std::min(1.0, std::max(0.0, rgb[c]));
      p[c] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  }
};

// 16-bit depth image in millimeters; 0 marks an invalid measurement.
struct ImageDepth16 {
  int width = 0, height = 0;
  std::vector<uint16_t> data;

  ImageDepth16() = default;
  ImageDepth16(int w, int h) : width(w), height(h), data(w * h, 0) {}

  uint16_t& raw(int i, int j) { return data[j * width + i]; }
  uint16_t raw(int i, int j) const { return data[j * width + i]; }

  bool valid(int i, int j) const { return raw(i, j) != 0; }
  double meters(int i, int j) const { return raw(i, j) * 1e-3; }

  void set_meters(int i, int j, double m) {
    if (!(m > 0.0) || m * 1000.0 > 65535.0) {
      raw(i, j) = 0;
      return;
    }
    uint16_t q = static_cast<uint16_t>(std::lround(m * 1000.0));
    raw(i, j) = q == 0 ? 1 : q;
  }
};

namespace detail {

// Corner indices and fractions of a bilinear image lookup at continuous
// coordinates; false when the footprint leaves the image.
inline bool bilinear_setup(int width, int height, double u, double v, int& i0,
                           int& j0, double& fu, double& fv) {
  double x = u - 0.5, y = v - 0.5;
  i0 = static_cast<int>(std::floor(x));
  j0 = static_cast<int>(std::floor(y));
  if (i0 < 0 || j0 < 0 || i0 + 1 >= width || j0 + 1 >= height) return false;
  fu = x - i0;
  fv = y - j0;
  return true;
}

}  // namespace detail

// Bilinear color lookup; d_u/d_v (optional) receive the image-space
// derivative of the result.
inline bool bilinear_color(const ImageRgb8& img, double u, double v, Vec3& out,
                           Vec3* d_u = nullptr, Vec3* d_v = nullptr) {
  int i0, j0;
  double fu, fv;
  if (!detail::bilinear_setup(img.width, img.height, u, v, i0, j0, fu, fv))
    return false;
  Vec3 c00 = img.at(i0, j0), c10 = img.at(i0 + 1, j0), c01 = img.at(i0, j0 + 1),
       c11 = img.at(i0 + 1, j0 + 1);
  out = (1 - fu) * (1 - fv) * c00 + fu * (1 - fv) * c10 + (1 - fu) * fv * c01 +
        fu * fv * c11;
  if (d_u) *d_u = (c10 - c00) * (1 - fv) + (c11 - c01) * fv;
  if (d_v) *d_v = (c01 - c00) * (1 - fu) + (c11 - c10) * fu;
  return true;
}

// Bilinear depth lookup; fails when any footprint corner is invalid.
inline bool bilinear_depth(const ImageDepth16& img, double u, double v,
                           double& out, double* d_u = nullptr,
                           double* d_v = nullptr) {
  int i0, j0;
  double fu, fv;
  if (!detail::bilinear_setup(img.width, img.height, u, v, i0, j0, fu, fv))
    return false;
  if (!img.valid(i0, j0) || !img.valid(i0 + 1, j0) || !img.valid(i0, j0 + 1) ||
      !img.valid(i0 + 1, j0 + 1))
    return false;
  double d00 = img.meters(i0, j0), d10 = img.meters(i0 + 1, j0),
         d01 = img.meters(i0, j0 + 1), d11 = img.meters(i0 + 1, j0 + 1);
  out = (1 - fu) * (1 - fv) * d00 + fu * (1 - fv) * d10 + (1 - fu) * fv * d01 +
        fu * fv * d11;
  if (d_u) *d_u = (d10 - d00) * (1 - fv) + (d11 - d01) * fv;
  if (d_v) *d_v = (d01 - d00) * (1 - fu) + (d11 - d10) * fu;
  return true;
}

// --- PNG I/O ------------------------------------------------------------

namespace detail {

struct PngFile {
  FILE* f = nullptr;
  explicit PngFile(const std::string& path, const char* mode)
      : f(std::fopen(path.c_str(), mode)) {}
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

inline void png_write_rgb8(const std::string& path, const ImageRgb8& img) {
  detail::PngFile file(path, "wb");
  PROGSLAM_CHECK(file.f, ErrorCode::IoError, "cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  PROGSLAM_CHECK(png && info, ErrorCode::IoError, "png init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::IoError, "png write failed: " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int j = 0; j < img.height; ++j)
    png_write_row(png, const_cast<png_bytep>(img.data.data() + 3 * j * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageRgb8 png_read_rgb8(const std::string& path) {
  detail::PngFile file(path, "rb");
  PROGSLAM_CHECK(file.f, ErrorCode::IoError, "cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  PROGSLAM_CHECK(png && info, ErrorCode::IoError, "png init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::IoError, "png read failed: " + path);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  ImageRgb8 img(png_get_image_width(png, info), png_get_image_height(png, info));
  for (int j = 0; j < img.height; ++j)
    png_read_row(png, img.data.data() + 3 * j * img.width, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void png_write_gray16(const std::string& path, const ImageDepth16& img) {
  detail::PngFile file(path, "wb");
  PROGSLAM_CHECK(file.f, ErrorCode::IoError, "cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  PROGSLAM_CHECK(png && info, ErrorCode::IoError, "png init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::IoError, "png write failed: " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);  // host is little-endian; PNG wants network order
  for (int j = 0; j < img.height; ++j)
    png_write_row(png,
                  reinterpret_cast<png_bytep>(const_cast<uint16_t*>(
                      img.data.data() + static_cast<size_t>(j) * img.width)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageDepth16 png_read_gray16(const std::string& path) {
  detail::PngFile file(path, "rb");
  PROGSLAM_CHECK(file.f, ErrorCode::IoError, "cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  PROGSLAM_CHECK(png && info, ErrorCode::IoError, "png init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::IoError, "png read failed: " + path);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  PROGSLAM_CHECK(png_get_bit_depth(png, info) == 16 &&
                     png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY,
                 ErrorCode::IoError, "expected 16-bit grayscale: " + path);
  png_set_swap(png);
  png_read_update_info(png, info);
  ImageDepth16 img(png_get_image_width(png, info),
                   png_get_image_height(png, info));
  for (int j = 0; j < img.height; ++j)
    png_read_row(png,
                 reinterpret_cast<png_bytep>(img.data.data() +
                                             static_cast<size_t>(j) * img.width),
                 nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace progslam
