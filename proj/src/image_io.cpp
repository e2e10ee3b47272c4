#include "flowdesc/image_io.hpp"

#include "flowdesc/error.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <vector>

namespace flowdesc
{

namespace
{

struct FileCloser
{
  void operator()(std::FILE * f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng
{
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

DecodedPng decode(const std::filesystem::path & path)
{
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw IoError("cannot open PNG: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  DecodedPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  out.bytes.resize(rowbytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    rows[static_cast<std::size_t>(y)] = out.bytes.data() + rowbytes * static_cast<std::size_t>(y);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (out.channels != 1 && out.channels != 3) {
    throw IoError("unsupported PNG channel layout: " + path.string());
  }
  return out;
}

void encode(
  const std::filesystem::path & path, int width, int height, int channels,
  const std::vector<std::uint8_t> & bytes)
{
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) {
    throw IoError("cannot write PNG: " + path.string());
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(
    png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
    channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
    PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint8_t to_byte(float v)
{
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Planar<float> read_png(const std::filesystem::path & path)
{
  const auto png = decode(path);
  Planar<float> image(png.channels, png.height, png.width);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      for (int c = 0; c < png.channels; ++c) {
        const auto i = (static_cast<std::size_t>(y) * png.width + x) * png.channels + c;
        image.at(c, x, y) = static_cast<float>(png.bytes[i]) / 255.0f;
      }
    }
  }
  return image;
}

Plane<std::uint8_t> read_png_gray8(const std::filesystem::path & path)
{
  const auto png = decode(path);
  Plane<std::uint8_t> plane(png.height, png.width);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const auto i = (static_cast<std::size_t>(y) * png.width + x) * png.channels;
      if (png.channels == 1) {
        plane(y, x) = png.bytes[i];
      } else {
        const double lum =
          0.299 * png.bytes[i] + 0.587 * png.bytes[i + 1] + 0.114 * png.bytes[i + 2];
        plane(y, x) = static_cast<std::uint8_t>(std::lround(lum));
      }
    }
  }
  return plane;
}

void write_png(const std::filesystem::path & path, const Planar<float> & image)
{
  const int channels = image.channels();
  if (channels != 1 && channels != 3) {
    throw ShapeError("write_png expects 1 or 3 channels");
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.pixels()) * channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        bytes[(static_cast<std::size_t>(y) * image.width + x) * channels + c] =
          to_byte(image.at(c, x, y));
      }
    }
  }
  encode(path, image.width, image.height, channels, bytes);
}

void write_png_gray8(const std::filesystem::path & path, const Plane<std::uint8_t> & plane)
{
  std::vector<std::uint8_t> bytes(plane.data(), plane.data() + plane.size());
  encode(path, static_cast<int>(plane.cols()), static_cast<int>(plane.rows()), 1, bytes);
}

Planar<float> quantize8(const Planar<float> & image)
{
  Planar<float> out = image;
  out.data = image.data.unaryExpr([](float v) { return static_cast<float>(to_byte(v)) / 255.0f; });
  return out;
}

}  // namespace flowdesc
