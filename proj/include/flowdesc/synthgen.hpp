#ifndef FLOWDESC_SYNTHGEN_HPP_
#define FLOWDESC_SYNTHGEN_HPP_

#include "flowdesc/mask.hpp"
#include "flowdesc/tensor.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowdesc
{

/// Projective transform of homogeneous pixel coordinates, normalized so that H(2,2) == 1.
class Homography
{
public:
  Homography() : matrix_(Eigen::Matrix3d::Identity()) {}
  /// Validates invertibility (|det| > 1e-9 after normalization) and normalizes.
  explicit Homography(const Eigen::Matrix3d & m);

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d & matrix() const { return matrix_; }
  Eigen::Vector2d apply(const Eigen::Vector2d & p) const
  {
    return (matrix_ * p.homogeneous()).hnormalized();
  }
  PixelCoord apply(const PixelCoord & p) const
  {
    const Eigen::Vector2d q = apply(Eigen::Vector2d(p.x, p.y));
    return {q.x(), q.y()};
  }
  Homography inverse() const;
  /// (*this) ∘ other: apply `other` first.
  Homography operator*(const Homography & other) const;

private:
  Eigen::Matrix3d matrix_;
};

/// Similarity plus perspective about `center`: x' = T(center + t) · [sR 0; pᵀ 1] · T(-center) x.
/// Throws DegenerateError when the result is not invertible.
Homography compose_homography(
  double rotation_deg, double scale, const Eigen::Vector2d & translation,
  const Eigen::Vector2d & perspective, const Eigen::Vector2d & center);

/// Object appearance in frame coordinates: under the identity pose, texture pixel (x, y)
/// lands on frame pixel (x, y).
struct TexturedObject
{
  ImageFrame texture;
  Plane<float> alpha;  // {0, 1}

  TexturedObject() = default;
  TexturedObject(ImageFrame tex, Plane<float> a);
  int height() const { return texture.height; }
  int width() const { return texture.width; }
};

struct RenderedFrame
{
  ImageFrame image;
  ForegroundMask mask;
};

/// Warps texture and alpha by `pose`, scales object color by `gain` and composites over
/// `background`. The mask is the warped alpha thresholded at 0.5.
RenderedFrame render_frame(
  const TexturedObject & object, const ImageFrame & background, const Homography & pose,
  double gain);

struct GroundTruthMap
{
  int source = 0;
  int target = 0;
  Plane<float> map_x;  // target x for each source pixel (identity off the source mask)
  Plane<float> map_y;
  Plane<std::uint8_t> visible;

  int height() const { return static_cast<int>(visible.rows()); }
  int width() const { return static_cast<int>(visible.cols()); }
  PixelCoord at(int x, int y) const { return {map_x(y, x), map_y(y, x)}; }
};

/// mapping(u) = H_t(H_s⁻¹(u)) for u on `source_mask`; visible iff the target lies inside the
/// image and its rounded pixel is on `target_mask`.
GroundTruthMap ground_truth_map(
  const Homography & source_pose, const Homography & target_pose,
  const ForegroundMask & source_mask, const ForegroundMask & target_mask);

/// GTM1 container: "GTM1", u32 height, u32 width, u32 flags, then float32 (x, y) pairs and a
/// u8 visibility plane, all row-major little-endian.
void write_ground_truth(const std::filesystem::path & path, const GroundTruthMap & gt);
GroundTruthMap read_ground_truth(const std::filesystem::path & path);

inline constexpr std::uint32_t kGtmFlagMaskRestricted = 1u;

enum class BackgroundKind
{
  flat,
  cluttered,
};

BackgroundKind parse_background(const std::string & name);
std::string to_string(BackgroundKind kind);

/// Low-frequency texture (flat) or dense random shapes (cluttered).
ImageFrame make_background(BackgroundKind kind, int height, int width, std::uint64_t seed);

/// Procedural low-texture tool-like object: a body, handle, battery and chuck with smooth
/// color shading, centered in a frame-sized texture.
TexturedObject make_drill_analog(int height, int width, std::uint64_t seed);

struct MotionFrame
{
  Homography pose;
  double gain = 1.0;
  int background = 0;
};

struct MotionScript
{
  std::vector<MotionFrame> frames;

  /// Length ≥ 2 and gains in [0.3, 1.7]; throws DegenerateError otherwise.
  void validate() const;
};

enum class MotionMode
{
  random_walk,
  constant,
};

struct SynthConfig
{
  int height = 256;
  int width = 256;
  int frames = 200;
  std::vector<std::string> backgrounds{"flat", "cluttered"};
  /// Consecutive frames sharing a background before cycling to the next one; 0 keeps the
  /// first background for the whole sequence.
  int background_block = 25;
  MotionMode motion = MotionMode::random_walk;
  double max_translation_px = 3.0;
  double max_rotation_deg = 3.0;
  double max_scale_step = 0.005;
  double scale_min = 0.85;
  double scale_max = 1.15;
  double max_perspective = 0.0;
  /// Translation envelope as a fraction of the frame size.
  double translation_range = 0.2;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double max_gain_step = 0.02;
  /// Per-frame increments in constant mode.
  double rotation_step_deg = 0.0;
  Eigen::Vector2d translation_step{0.0, 0.0};
  double scale_step = 0.0;
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const SynthConfig & cfg);
SynthConfig synth_config_from_json(const nlohmann::json & j);

MotionScript make_motion_script(const SynthConfig & cfg);

nlohmann::json motion_to_json(const MotionScript & script);
MotionScript motion_from_json(const nlohmann::json & j);

/// Zero-padded six-digit file stem used for frames, masks and ground-truth files.
std::string frame_name(int index);

/// Renders the sequence and writes frames/, masks/, gt/ (consecutive pairs) and motion.json.
/// Byte-identical across runs for the same config.
void generate_sequence(const SynthConfig & cfg, const std::filesystem::path & out_dir);

}  // namespace flowdesc

#endif  // FLOWDESC_SYNTHGEN_HPP_
