#ifndef FLOWDESC_FLOWLAB_HPP_
#define FLOWDESC_FLOWLAB_HPP_

#include "flowdesc/mask.hpp"
#include "flowdesc/synthgen.hpp"
#include "flowdesc/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowdesc
{

enum class FlowBackend
{
  classical,
  file,
  ground_truth,
};

FlowBackend parse_flow_backend(const std::string & name);
std::string to_string(FlowBackend backend);

/// Per-pixel displacement (dx, dy) from frame A to frame B.
struct FlowField
{
  Plane<double> dx;
  Plane<double> dy;
  FlowBackend backend = FlowBackend::classical;

  FlowField() = default;
  FlowField(int height, int width, FlowBackend b = FlowBackend::classical)
  : dx(Plane<double>::Zero(height, width)), dy(Plane<double>::Zero(height, width)), backend(b)
  {}
  int height() const { return static_cast<int>(dx.rows()); }
  int width() const { return static_cast<int>(dx.cols()); }
};

struct ClassicalFlowParams
{
  int pyramid_levels = 4;
  /// Odd side length of the patch over which the brightness-constancy system is pooled.
  int window = 9;
  int iterations = 5;
};

/// Coarse-to-fine iterative patch least squares over all color channels, with a 3×3 median
/// on the flow after each level.
FlowField estimate_flow_classical(
  const ImageFrame & a, const ImageFrame & b, const ClassicalFlowParams & params = {});

/// flow(u) = mapping(u) - u, computed in double so that u + flow(u) reproduces the stored map.
FlowField flow_from_ground_truth(const GroundTruthMap & gt);

struct FlowInputs
{
  std::optional<std::filesystem::path> flow_file;
  const GroundTruthMap * ground_truth = nullptr;
};

/// Dispatches on `backend`. The file backend needs `inputs.flow_file`, the ground-truth
/// backend `inputs.ground_truth`.
FlowField estimate_flow(
  const ImageFrame & a, const ImageFrame & b, FlowBackend backend,
  const ClassicalFlowParams & params = {}, const FlowInputs & inputs = {});

/// FLO1 container: "FLO1", u32 height, u32 width, row-major float32 (dx, dy) pairs.
void write_flow_file(const std::filesystem::path & path, const FlowField & flow);
/// Reads FLO1, or the Middlebury layout (float tag 202021.25, i32 width, i32 height, pairs).
FlowField read_flow_file(const std::filesystem::path & path);
/// Converts a Middlebury-layout .flo (the usual output of learned flow tools) to FLO1.
void convert_middlebury_flow(const std::filesystem::path & in, const std::filesystem::path & out);
void write_middlebury_flow(const std::filesystem::path & path, const FlowField & flow);

/// Absolute mapping O(u) = u + flow(u) with a validity flag per source pixel.
struct CorrespondenceMap
{
  Plane<double> x;
  Plane<double> y;
  Plane<std::uint8_t> valid;

  int height() const { return static_cast<int>(valid.rows()); }
  int width() const { return static_cast<int>(valid.cols()); }
  long valid_count() const { return static_cast<long>((valid != 0).count()); }
};

inline constexpr double kDefaultFbTau = 1.5;

/// Valid iff u ∈ mask_a, O(u) inside the image, round(O(u)) ∈ mask_b and, when `backward`
/// is given, ‖flow(u) + backward(O(u))‖ < fb_tau (backward sampled bilinearly).
CorrespondenceMap flow_to_correspondence(
  const FlowField & flow, const ForegroundMask & mask_a, const ForegroundMask & mask_b,
  const FlowField * backward = nullptr, double fb_tau = kDefaultFbTau);

/// Positive pairs (source[i], target[i]) and `n_neg` negatives per positive, stored
/// match-major in `negatives`.
struct MatchSet
{
  std::vector<PixelCoord> source;
  std::vector<PixelCoord> target;
  std::vector<PixelCoord> negatives;
  int n_neg = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return source.size(); }
  const PixelCoord & negative(std::size_t match, int k) const
  {
    return negatives[match * static_cast<std::size_t>(n_neg) + static_cast<std::size_t>(k)];
  }
  bool operator==(const MatchSet &) const = default;
};

inline constexpr int kDefaultMatches = 2500;
inline constexpr int kDefaultNegatives = 128;

/// Draws min(n_matches, #valid) valid source pixels without replacement; each gets `n_neg`
/// negatives drawn with replacement from `mask_b`, rejecting the positive's own rounded pixel.
MatchSet sample_matches(
  const CorrespondenceMap & corr, const ForegroundMask & mask_b, int n_matches, int n_neg,
  std::uint64_t seed);

enum class FlipAxis
{
  horizontal,  // x -> W-1-x
  vertical,    // y -> H-1-y
};

ImageFrame flip_image(const ImageFrame & image, FlipAxis axis);
ForegroundMask flip_mask(const ForegroundMask & mask, FlipAxis axis);

struct FlipResult
{
  ImageFrame frame;
  ForegroundMask mask;
  MatchSet matches;
};

/// Flips frame B and its mask and remaps every target and negative; sources are untouched.
FlipResult augment_flip(
  const ImageFrame & frame_b, const ForegroundMask & mask_b, const MatchSet & matches,
  FlipAxis axis);

}  // namespace flowdesc

#endif  // FLOWDESC_FLOWLAB_HPP_
