#include "flowdesc/baseline.hpp"

#include "flowdesc/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace flowdesc
{

namespace
{

std::vector<float> gaussian_kernel(double sigma)
{
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = static_cast<float>(v);
    sum += v;
  }
  for (auto & v : k) v = static_cast<float>(v / sum);
  return k;
}

// Correlation along x (axis 1) or y (axis 0); taps indexed from -r..r. Clamped or zero border.
Plane<float> correlate(const Plane<float> & in, const std::vector<float> & k, int axis, bool clamp)
{
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int r = static_cast<int>(k.size() / 2);
  Plane<float> out = Plane<float>::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int t = -r; t <= r; ++t) {
        int xx = x;
        int yy = y;
        (axis == 1 ? xx : yy) += t;
        const int lim = axis == 1 ? w : h;
        int & c = axis == 1 ? xx : yy;
        if (c < 0 || c >= lim) {
          if (!clamp) continue;
          c = std::clamp(c, 0, lim - 1);
        }
        acc += k[static_cast<std::size_t>(t + r)] * in(yy, xx);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

Plane<float> gaussian_blur(const Plane<float> & image, double sigma)
{
  if (sigma <= 0.0) return image;
  const auto k = gaussian_kernel(sigma);
  return correlate(correlate(image, k, 1, true), k, 0, true);
}

Plane<std::uint8_t> patch_support(int height, int width, int radius)
{
  Plane<std::uint8_t> s = Plane<std::uint8_t>::Zero(height, width);
  for (int y = radius; y < height - radius; ++y) {
    for (int x = radius; x < width - radius; ++x) s(y, x) = 1;
  }
  return s;
}

BaselineField compute_baseline(const ImageFrame & frame, const BaselineParams & params)
{
  if (params.patch_radius < 2 || params.patch_radius % 2 != 0) {
    throw ConfigError("baseline patch radius must be an even number >= 2");
  }
  const int h = frame.height;
  const int w = frame.width;
  const int radius = params.patch_radius;
  const double cell = radius / 2.0;

  const Plane<float> gray = gaussian_blur(to_gray(frame), params.smoothing_sigma);
  Plane<float> mag(h, w);
  Plane<float> ang(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = 0.5f * (gray(y, std::min(x + 1, w - 1)) - gray(y, std::max(x - 1, 0)));
      const float gy = 0.5f * (gray(std::min(y + 1, h - 1), x) - gray(std::max(y - 1, 0), x));
      mag(y, x) = std::sqrt(gx * gx + gy * gy);
      ang(y, x) = std::atan2(gy, gx);
    }
  }

  std::vector<Plane<float>> orient(kBaselineOrientations, Plane<float>::Zero(h, w));
  const double bin_width = 2.0 * std::numbers::pi / kBaselineOrientations;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double t = ang(y, x) / bin_width;
      if (t < 0) t += kBaselineOrientations;
      const int k0 = static_cast<int>(std::floor(t)) % kBaselineOrientations;
      const float frac = static_cast<float>(t - std::floor(t));
      orient[static_cast<std::size_t>(k0)](y, x) += mag(y, x) * (1.0f - frac);
      orient[static_cast<std::size_t>((k0 + 1) % kBaselineOrientations)](y, x) += mag(y, x) * frac;
    }
  }

  // Cell kernels along one axis: tent around the cell center times the Gaussian window.
  std::vector<std::vector<float>> cell_kernels(kBaselineCells, std::vector<float>(static_cast<std::size_t>(2 * radius + 1)));
  for (int i = 0; i < kBaselineCells; ++i) {
    const double center = (i - 1.5) * cell;
    for (int d = -radius; d <= radius; ++d) {
      const double tent = std::max(0.0, 1.0 - std::abs(d - center) / cell);
      const double window = std::exp(-0.5 * d * d / (double(radius) * radius));
      cell_kernels[static_cast<std::size_t>(i)][static_cast<std::size_t>(d + radius)] = static_cast<float>(tent * window);
    }
  }

  BaselineField out;
  out.patch_radius = radius;
  out.descriptors = DescriptorMap<float>(kBaselineDim, h, w);
  for (int k = 0; k < kBaselineOrientations; ++k) {
    for (int ix = 0; ix < kBaselineCells; ++ix) {
      const auto rows = correlate(orient[static_cast<std::size_t>(k)], cell_kernels[static_cast<std::size_t>(ix)], 1, false);
      for (int iy = 0; iy < kBaselineCells; ++iy) {
        const auto cellmap = correlate(rows, cell_kernels[static_cast<std::size_t>(iy)], 0, false);
        const int row = (iy * kBaselineCells + ix) * kBaselineOrientations + k;
        out.descriptors.data.row(row) = Eigen::Map<const Vector<float>>(cellmap.data(), cellmap.size()).transpose();
      }
    }
  }

  out.valid = patch_support(h, w, radius);
  const auto clip = static_cast<float>(params.clip);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto v = out.descriptors.pixel(x, y);
      const float n = v.norm();
      if (out.valid(y, x) == 0 || n < 1e-6f) {
        v.setZero();
        out.valid(y, x) = 0;
        continue;
      }
      v /= n;
      v = v.cwiseMin(clip);
      v /= v.norm();
    }
  }
  return out;
}

std::vector<Keypoint> detect_dog_keypoints(const Plane<float> & gray, const DogParams & params)
{
  const int min_side = static_cast<int>(std::min(gray.rows(), gray.cols()));
  if (min_side < 8) throw ShapeError("image too small for keypoint detection");
  int octaves = params.octaves;
  if (octaves <= 0) octaves = std::max(1, static_cast<int>(std::floor(std::log2(min_side))) - 3);
  const int s = params.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / s);
  const double prefilter = 0.5 * params.contrast_threshold / s;
  const double edge = (params.edge_ratio + 1.0) * (params.edge_ratio + 1.0) / params.edge_ratio;

  std::map<std::pair<int, int>, Keypoint> best;
  Plane<float> base = gaussian_blur(
    gray, std::sqrt(std::max(0.01, params.sigma * params.sigma - params.assumed_blur * params.assumed_blur)));
  for (int o = 0; o < octaves; ++o) {
    if (std::min(base.rows(), base.cols()) < 8) break;
    std::vector<Plane<float>> gauss{base};
    for (int i = 1; i < s + 3; ++i) {
      const double prev = params.sigma * std::pow(k, i - 1);
      const double cur = prev * k;
      gauss.push_back(gaussian_blur(gauss.back(), std::sqrt(cur * cur - prev * prev)));
    }
    std::vector<Plane<float>> dog;
    for (int i = 0; i + 1 < static_cast<int>(gauss.size()); ++i) dog.push_back(gauss[static_cast<std::size_t>(i + 1)] - gauss[static_cast<std::size_t>(i)]);

    const int h = static_cast<int>(base.rows());
    const int w = static_cast<int>(base.cols());
    for (int i = 1; i <= s; ++i) {
      const auto & d0 = dog[static_cast<std::size_t>(i - 1)];
      const auto & d1 = dog[static_cast<std::size_t>(i)];
      const auto & d2 = dog[static_cast<std::size_t>(i + 1)];
      for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
          const float v = d1(y, x);
          if (std::abs(v) <= prefilter) continue;
          bool is_max = true;
          bool is_min = true;
          for (const auto * d : {&d0, &d1, &d2}) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (d == &d1 && dx == 0 && dy == 0) continue;
                const float u = (*d)(y + dy, x + dx);
                is_max = is_max && v > u;
                is_min = is_min && v < u;
              }
            }
          }
          if (!is_max && !is_min) continue;
          const double dxx = d1(y, x + 1) + d1(y, x - 1) - 2.0 * v;
          const double dyy = d1(y + 1, x) + d1(y - 1, x) - 2.0 * v;
          const double dxy = 0.25 * (d1(y + 1, x + 1) - d1(y + 1, x - 1) - d1(y - 1, x + 1) + d1(y - 1, x - 1));
          const double tr = dxx + dyy;
          const double det = dxx * dyy - dxy * dxy;
          if (det <= 0.0 || tr * tr / det >= edge) continue;

          Keypoint kp;
          kp.x = std::min(static_cast<int>(gray.cols()) - 1, x << o);
          kp.y = std::min(static_cast<int>(gray.rows()) - 1, y << o);
          kp.sigma = params.sigma * std::pow(k, i) * (1 << o);
          kp.response = v;
          auto [it, inserted] = best.try_emplace({kp.y, kp.x}, kp);
          if (!inserted && std::abs(kp.response) > std::abs(it->second.response)) it->second = kp;
        }
      }
    }
    // Next octave starts from the image with twice the base blur.
    const auto & src = gauss[static_cast<std::size_t>(s)];
    Plane<float> down((src.rows() + 1) / 2, (src.cols() + 1) / 2);
    for (Eigen::Index y = 0; y < down.rows(); ++y) {
      for (Eigen::Index x = 0; x < down.cols(); ++x) down(y, x) = src(2 * y, 2 * x);
    }
    base = std::move(down);
  }

  std::vector<Keypoint> out;
  out.reserve(best.size());
  for (const auto & [key, kp] : best) out.push_back(kp);
  return out;
}

}  // namespace flowdesc
