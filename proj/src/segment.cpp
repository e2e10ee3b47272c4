#include "flowdesc/segment.hpp"

#include "flowdesc/error.hpp"
#include "flowdesc/flowlab.hpp"
#include "flowdesc/image_io.hpp"

#include <iostream>
#include <vector>

namespace flowdesc
{

ForegroundMask load_mask(
  const std::filesystem::path & path, std::optional<std::pair<int, int>> expected_size)
{
  const auto gray = read_png_gray8(path);
  if (expected_size &&
      (gray.rows() != expected_size->first || gray.cols() != expected_size->second)) {
    throw ShapeError(
      "mask " + path.string() + " is " + std::to_string(gray.rows()) + "x" +
      std::to_string(gray.cols()) + ", frame is " + std::to_string(expected_size->first) + "x" +
      std::to_string(expected_size->second));
  }
  ForegroundMask mask(static_cast<int>(gray.rows()), static_cast<int>(gray.cols()), MaskSource::file);
  mask.bits = (gray > std::uint8_t{127}).cast<std::uint8_t>();
  return mask;
}

void save_mask(const std::filesystem::path & path, const ForegroundMask & mask)
{
  Plane<std::uint8_t> bytes = (mask.bits != 0).cast<std::uint8_t>() * std::uint8_t{255};
  write_png_gray8(path, bytes);
}

bool usable_for_sampling(const ForegroundMask & mask, const char * what)
{
  if (!mask.empty()) return true;
  std::cerr << "warning: empty foreground mask (" << what << "), frame skipped\n";
  return false;
}

ForegroundMask motion_mask(const FlowField & flow, double threshold_px)
{
  if (threshold_px < 0.0) {
    throw ConfigError("segment.motion_threshold_px must be >= 0");
  }
  const int h = flow.height();
  const int w = flow.width();
  const Plane<double> mag2 = flow.dx.square() + flow.dy.square();
  const Plane<bool> moving = mag2 > threshold_px * threshold_px;
  if (!moving.any()) {
    throw EmptyMaskError("motion mask: no pixel moves more than the threshold");
  }

  Plane<int> label = Plane<int>::Constant(h, w, -1);
  std::vector<int> stack;
  int best_label = -1;
  long best_size = 0;
  int next = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (!moving(y0, x0) || label(y0, x0) >= 0) continue;
      const int id = next++;
      long size = 0;
      label(y0, x0) = id;
      stack.assign(1, y0 * w + x0);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++size;
        const int x = p % w;
        const int y = p / w;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          if (!moving(ny[k], nx[k]) || label(ny[k], nx[k]) >= 0) continue;
          label(ny[k], nx[k]) = id;
          stack.push_back(ny[k] * w + nx[k]);
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = id;
      }
    }
  }
  ForegroundMask mask(h, w, MaskSource::motion);
  mask.bits = (label == best_label).cast<std::uint8_t>();
  return mask;
}

}  // namespace flowdesc
