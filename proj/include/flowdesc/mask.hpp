#ifndef FLOWDESC_MASK_HPP_
#define FLOWDESC_MASK_HPP_

#include "flowdesc/tensor.hpp"

#include <cstdint>
#include <string_view>

namespace flowdesc
{

enum class MaskSource
{
  ground_truth,
  file,
  motion,
};

std::string_view to_string(MaskSource source);

/// Binary foreground plane. Stored values are 0 or 1.
struct ForegroundMask
{
  Plane<std::uint8_t> bits;
  MaskSource source = MaskSource::ground_truth;

  ForegroundMask() = default;
  ForegroundMask(int height, int width, MaskSource src = MaskSource::ground_truth)
  : bits(Plane<std::uint8_t>::Zero(height, width)), source(src)
  {}

  int height() const { return static_cast<int>(bits.rows()); }
  int width() const { return static_cast<int>(bits.cols()); }
  bool contains(int x, int y) const
  {
    return x >= 0 && y >= 0 && x < width() && y < height() && bits(y, x) != 0;
  }
  bool contains(const PixelCoord & p) const { return contains(round_px(p.x), round_px(p.y)); }
  long count() const { return static_cast<long>((bits != 0).count()); }
  bool empty() const { return count() == 0; }

  static ForegroundMask full(int height, int width, MaskSource src = MaskSource::ground_truth)
  {
    ForegroundMask m(height, width, src);
    m.bits.setOnes();
    return m;
  }
};

}  // namespace flowdesc

#endif  // FLOWDESC_MASK_HPP_
