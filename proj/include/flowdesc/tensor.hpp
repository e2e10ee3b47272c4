#ifndef FLOWDESC_TENSOR_HPP_
#define FLOWDESC_TENSOR_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace flowdesc
{

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// H×W scalar plane, row-major so that index y*W + x matches Planar columns.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-channel image stored channel-major: one row per channel, one column per pixel.
/// Column y*width + x holds the channel vector of pixel (x, y).
template <typename Scalar>
struct Planar
{
  int height = 0;
  int width = 0;
  RowMatrix<Scalar> data;

  Planar() = default;
  Planar(int channels, int h, int w)
  : height(h), width(w), data(RowMatrix<Scalar>::Zero(channels, Eigen::Index{h} * w))
  {}

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return Eigen::Index{height} * width; }
  Eigen::Index index(int x, int y) const { return Eigen::Index{y} * width + x; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  Scalar & at(int c, int x, int y) { return data(c, index(x, y)); }
  Scalar at(int c, int x, int y) const { return data(c, index(x, y)); }

  auto pixel(int x, int y) { return data.col(index(x, y)); }
  auto pixel(int x, int y) const { return data.col(index(x, y)); }

  /// Channel c viewed as an H×W row-major map.
  auto channel(int c)
  {
    return Eigen::Map<Plane<Scalar>>(data.row(c).data(), height, width);
  }
  auto channel(int c) const
  {
    return Eigen::Map<const Plane<Scalar>>(data.row(c).data(), height, width);
  }

  template <typename Other>
  Planar<Other> cast() const
  {
    Planar<Other> out;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }

  bool operator==(const Planar & o) const
  {
    return height == o.height && width == o.width && data.rows() == o.data.rows() &&
           data == o.data;
  }
};

/// RGB frame with values in [0, 1].
using ImageFrame = Planar<float>;

/// Continuous pixel coordinate; rounded to the nearest pixel only at lookup.
struct PixelCoord
{
  double x = 0.0;
  double y = 0.0;

  bool operator==(const PixelCoord &) const = default;
};

inline int round_px(double v) { return static_cast<int>(std::lround(v)); }

/// Luminance conversion used by every grayscale consumer.
template <typename Scalar>
Plane<Scalar> to_gray(const Planar<Scalar> & image)
{
  if (image.channels() == 1) {
    return image.channel(0);
  }
  return Scalar(0.299) * image.channel(0) + Scalar(0.587) * image.channel(1) +
         Scalar(0.114) * image.channel(2);
}

}  // namespace flowdesc

#endif  // FLOWDESC_TENSOR_HPP_
