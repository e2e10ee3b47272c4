#ifndef FLOWDESC_LAYERS_HPP_
#define FLOWDESC_LAYERS_HPP_

// Dense convolution primitives over channel-major images. Convolutions go through an
// im2col matrix so that the heavy lifting is a single GEMM.

#include "flowdesc/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace flowdesc::layers
{

struct ConvGeometry
{
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

/// Column (ci*k + ky)*k + kx of the weight matrix multiplies row (ci, ky, kx) of im2col.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Planar<Scalar> & x, const ConvGeometry & g)
{
  const int k = g.kernel;
  const int ho = g.out_size(x.height);
  const int wo = g.out_size(x.width);
  RowMatrix<Scalar> col(Eigen::Index{x.channels()} * k * k, Eigen::Index{ho} * wo);
  for (int c = 0; c < x.channels(); ++c) {
    const Scalar * src = x.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar * dst = col.row((Eigen::Index{c} * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          Scalar * row = dst + Eigen::Index{oy} * wo;
          if (iy < 0 || iy >= x.height) {
            std::fill(row, row + wo, Scalar(0));
            continue;
          }
          const Scalar * in_row = src + Eigen::Index{iy} * x.width;
          if (g.stride == 1) {
            const int shift = kx - g.pad;
            const int lo = std::clamp(-shift, 0, wo);
            const int hi = std::clamp(x.width - shift, 0, wo);
            std::fill(row, row + lo, Scalar(0));
            if (hi > lo) std::copy(in_row + lo + shift, in_row + hi + shift, row + lo);
            std::fill(row + std::max(hi, lo), row + wo, Scalar(0));
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              row[ox] = (ix >= 0 && ix < x.width) ? in_row[ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
  return col;
}

/// Adjoint of im2col: scatters column gradients back into an image of the given shape.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar> & col, const ConvGeometry & g, Planar<Scalar> & dx)
{
  const int k = g.kernel;
  const int ho = g.out_size(dx.height);
  const int wo = g.out_size(dx.width);
  for (int c = 0; c < dx.channels(); ++c) {
    Scalar * dst = dx.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar * src = col.row((Eigen::Index{c} * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= dx.height) continue;
          Scalar * out_row = dst + Eigen::Index{iy} * dx.width;
          const Scalar * row = src + Eigen::Index{oy} * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < dx.width) out_row[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Planar<Scalar> conv2d(
  const Planar<Scalar> & x, const Eigen::Ref<const RowMatrix<Scalar>> & weight,
  const Eigen::Ref<const Vector<Scalar>> & bias, const ConvGeometry & g)
{
  Planar<Scalar> y(static_cast<int>(weight.rows()), g.out_size(x.height), g.out_size(x.width));
  if (g.kernel == 1 && g.stride == 1 && g.pad == 0) {
    y.data.noalias() = weight * x.data;
  } else {
    y.data.noalias() = weight * im2col(x, g);
  }
  y.data.colwise() += bias;
  return y;
}

/// Accumulates weight and bias gradients; returns the input gradient.
template <typename Scalar>
Planar<Scalar> conv2d_backward(
  const Planar<Scalar> & x, const Eigen::Ref<const RowMatrix<Scalar>> & weight,
  const Planar<Scalar> & dy, const ConvGeometry & g, Eigen::Ref<RowMatrix<Scalar>> dweight,
  Eigen::Ref<Vector<Scalar>> dbias)
{
  dbias += dy.data.rowwise().sum();
  Planar<Scalar> dx(x.channels(), x.height, x.width);
  if (g.kernel == 1 && g.stride == 1 && g.pad == 0) {
    dweight.noalias() += dy.data * x.data.transpose();
    dx.data.noalias() = weight.transpose() * dy.data;
    return dx;
  }
  const RowMatrix<Scalar> col = im2col(x, g);
  dweight.noalias() += dy.data * col.transpose();
  const RowMatrix<Scalar> dcol = weight.transpose() * dy.data;
  col2im_add(dcol, g, dx);
  return dx;
}

/// 2×2 stride-2 transposed convolution. Weight rows are (co*2 + ky)*2 + kx, columns input
/// channels; output pixel (2x+kx, 2y+ky) receives row (co, ky, kx) applied to input (x, y).
template <typename Scalar>
Planar<Scalar> deconv2x2(
  const Planar<Scalar> & x, const Eigen::Ref<const RowMatrix<Scalar>> & weight,
  const Eigen::Ref<const Vector<Scalar>> & bias)
{
  const int cout = static_cast<int>(weight.rows() / 4);
  const RowMatrix<Scalar> z = weight * x.data;
  Planar<Scalar> y(cout, 2 * x.height, 2 * x.width);
  for (int co = 0; co < cout; ++co) {
    for (int ky = 0; ky < 2; ++ky) {
      for (int kx = 0; kx < 2; ++kx) {
        const Scalar * src = z.row((co * 2 + ky) * 2 + kx).data();
        for (int iy = 0; iy < x.height; ++iy) {
          Scalar * dst = y.data.row(co).data() + Eigen::Index{2 * iy + ky} * y.width + kx;
          const Scalar * s = src + Eigen::Index{iy} * x.width;
          for (int ix = 0; ix < x.width; ++ix) dst[2 * ix] = s[ix] + bias[co];
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Planar<Scalar> deconv2x2_backward(
  const Planar<Scalar> & x, const Eigen::Ref<const RowMatrix<Scalar>> & weight,
  const Planar<Scalar> & dy, Eigen::Ref<RowMatrix<Scalar>> dweight, Eigen::Ref<Vector<Scalar>> dbias)
{
  const int cout = static_cast<int>(weight.rows() / 4);
  RowMatrix<Scalar> g(weight.rows(), x.pixels());
  for (int co = 0; co < cout; ++co) {
    dbias[co] += dy.data.row(co).sum();
    for (int ky = 0; ky < 2; ++ky) {
      for (int kx = 0; kx < 2; ++kx) {
        Scalar * dst = g.row((co * 2 + ky) * 2 + kx).data();
        for (int iy = 0; iy < x.height; ++iy) {
          const Scalar * s = dy.data.row(co).data() + Eigen::Index{2 * iy + ky} * dy.width + kx;
          Scalar * d = dst + Eigen::Index{iy} * x.width;
          for (int ix = 0; ix < x.width; ++ix) d[ix] = s[2 * ix];
        }
      }
    }
  }
  dweight.noalias() += g * x.data.transpose();
  Planar<Scalar> dx(x.channels(), x.height, x.width);
  dx.data.noalias() = weight.transpose() * g;
  return dx;
}

template <typename Scalar>
void relu_inplace(Planar<Scalar> & x)
{
  x.data = x.data.cwiseMax(Scalar(0));
}

/// Gradient through ReLU given its output.
template <typename Scalar>
Planar<Scalar> relu_backward(const Planar<Scalar> & y, const Planar<Scalar> & dy)
{
  Planar<Scalar> dx = dy;
  dx.data = (y.data.array() > Scalar(0)).select(dy.data, Scalar(0));
  return dx;
}

inline constexpr double kNormEpsilon = 1e-12;

/// Per-pixel y = x / (‖x‖ + eps).
template <typename Scalar>
Planar<Scalar> l2_normalize(const Planar<Scalar> & x)
{
  Planar<Scalar> y = x;
  const auto norms = x.data.colwise().norm().array() + Scalar(kNormEpsilon);
  y.data.array().rowwise() /= norms;
  return y;
}

template <typename Scalar>
Planar<Scalar> l2_normalize_backward(const Planar<Scalar> & x, const Planar<Scalar> & dy)
{
  Planar<Scalar> dx(x.channels(), x.height, x.width);
  for (Eigen::Index p = 0; p < x.pixels(); ++p) {
    const auto xv = x.data.col(p);
    const auto g = dy.data.col(p);
    const Scalar n = xv.norm();
    const Scalar ne = n + Scalar(kNormEpsilon);
    if (n > Scalar(0)) {
      dx.data.col(p) = g / ne - xv * (xv.dot(g) / (n * ne * ne));
    } else {
      dx.data.col(p) = g / ne;
    }
  }
  return dx;
}

}  // namespace flowdesc::layers

#endif  // FLOWDESC_LAYERS_HPP_
