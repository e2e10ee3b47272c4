#ifndef FLOWDESC_IMAGE_IO_HPP_
#define FLOWDESC_IMAGE_IO_HPP_

#include "flowdesc/tensor.hpp"

#include <cstdint>
#include <filesystem>

namespace flowdesc
{

/// 8-bit PNG decode. Gray, gray+alpha, RGB and RGBA inputs are accepted; alpha is dropped.
/// Values are scaled to [0, 1]. Channel count of the result is 1 or 3 as stored.
Planar<float> read_png(const std::filesystem::path & path);

/// Raw 8-bit single-channel plane; RGB inputs are converted to luminance.
Plane<std::uint8_t> read_png_gray8(const std::filesystem::path & path);

/// Writes 1- or 3-channel images; values are clamped to [0, 1] and rounded to 8 bits.
void write_png(const std::filesystem::path & path, const Planar<float> & image);

void write_png_gray8(const std::filesystem::path & path, const Plane<std::uint8_t> & plane);

/// Quantizes to what `write_png` would store, without touching disk.
Planar<float> quantize8(const Planar<float> & image);

}  // namespace flowdesc

#endif  // FLOWDESC_IMAGE_IO_HPP_
