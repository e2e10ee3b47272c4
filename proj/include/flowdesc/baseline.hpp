#ifndef FLOWDESC_BASELINE_HPP_
#define FLOWDESC_BASELINE_HPP_

#include "flowdesc/descnet.hpp"
#include "flowdesc/tensor.hpp"

#include <cstdint>
#include <vector>

namespace flowdesc
{

inline constexpr int kBaselineCells = 4;
inline constexpr int kBaselineOrientations = 8;
inline constexpr int kBaselineDim = kBaselineCells * kBaselineCells * kBaselineOrientations;

struct BaselineParams
{
  /// Half-width of the 4×4-cell patch; each cell spans radius / 2 pixels.
  int patch_radius = 8;
  /// Pre-smoothing before gradients are taken.
  double smoothing_sigma = 1.0;
  double clip = 0.2;
};

/// Dense SIFT-like field. Pixels without full patch support and pixels without gradient
/// energy hold zero vectors and are flagged invalid.
struct BaselineField
{
  DescriptorMap<float> descriptors;
  Plane<std::uint8_t> valid;
  int patch_radius = 0;
};

/// Unoriented 4×4×8 gradient-orientation histograms with trilinear binning, a Gaussian
/// window of sigma = patch radius, clipping at `clip` and renormalization.
BaselineField compute_baseline(const ImageFrame & frame, const BaselineParams & params = {});

/// 1 where a patch of the given radius fits inside the image.
Plane<std::uint8_t> patch_support(int height, int width, int radius);

/// Separable Gaussian blur with clamped borders.
Plane<float> gaussian_blur(const Plane<float> & image, double sigma);

struct DogParams
{
  /// 0 picks floor(log2(min side)) - 3 octaves.
  int octaves = 0;
  int scales_per_octave = 3;
  double sigma = 1.6;
  double assumed_blur = 0.5;
  double contrast_threshold = 0.04;
  double edge_ratio = 10.0;
};

struct Keypoint
{
  int x = 0;
  int y = 0;
  double sigma = 0.0;
  double response = 0.0;
};

/// Difference-of-Gaussians scale-space extrema at integer full-resolution pixels; one
/// keypoint per pixel (strongest response kept), sorted row-major. No orientation assignment.
std::vector<Keypoint> detect_dog_keypoints(const Plane<float> & gray, const DogParams & params = {});

}  // namespace flowdesc

#endif  // FLOWDESC_BASELINE_HPP_
