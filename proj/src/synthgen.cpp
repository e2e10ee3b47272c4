#include "flowdesc/synthgen.hpp"

#include "flowdesc/binary_io.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace flowdesc
{

std::string_view to_string(MaskSource source)
{
  switch (source) {
    case MaskSource::ground_truth: return "ground-truth";
    case MaskSource::file: return "file";
    case MaskSource::motion: return "motion";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------- homography

Homography::Homography(const Eigen::Matrix3d & m)
{
  if (!m.allFinite() || std::abs(m(2, 2)) < 1e-12) {
    throw DegenerateError("degenerate transform: cannot normalize homography");
  }
  matrix_ = m / m(2, 2);
  if (std::abs(matrix_.determinant()) <= 1e-9) {
    throw DegenerateError("degenerate transform: homography is not invertible");
  }
}

Homography Homography::translation(double tx, double ty)
{
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(Eigen::Matrix3d(matrix_.inverse())); }

Homography Homography::operator*(const Homography & other) const
{
  return Homography(Eigen::Matrix3d(matrix_ * other.matrix_));
}

Homography compose_homography(
  double rotation_deg, double scale, const Eigen::Vector2d & translation,
  const Eigen::Vector2d & perspective, const Eigen::Vector2d & center)
{
  if (!(scale > 0.0)) {
    throw DegenerateError("degenerate transform: scale must be positive");
  }
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);

  Eigen::Matrix3d to_center = Eigen::Matrix3d::Identity();
  to_center.block<2, 1>(0, 2) = -center;
  Eigen::Matrix3d core = Eigen::Matrix3d::Identity();
  core(0, 0) = scale * c;
  core(0, 1) = -scale * s;
  core(1, 0) = scale * s;
  core(1, 1) = scale * c;
  core(2, 0) = perspective.x();
  core(2, 1) = perspective.y();
  Eigen::Matrix3d back = Eigen::Matrix3d::Identity();
  back.block<2, 1>(0, 2) = center + translation;

  return Homography(Eigen::Matrix3d(back * core * to_center));
}

// ---------------------------------------------------------------------------- rendering

TexturedObject::TexturedObject(ImageFrame tex, Plane<float> a)
: texture(std::move(tex)), alpha(std::move(a))
{
  if (texture.channels() != 3 || alpha.rows() != texture.height || alpha.cols() != texture.width) {
    throw ShapeError("texture and alpha must share dimensions");
  }
  if ((alpha != 0.0f).count() == 0) {
    throw EmptyMaskError("object alpha has no foreground pixel");
  }
}

namespace
{

struct Bilinear
{
  int x0, y0;
  float fx, fy;
};

inline Bilinear bilinear_weights(double x, double y)
{
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  return {static_cast<int>(fx), static_cast<int>(fy), static_cast<float>(x - fx),
          static_cast<float>(y - fy)};
}

}  // namespace

RenderedFrame render_frame(
  const TexturedObject & object, const ImageFrame & background, const Homography & pose,
  double gain)
{
  if (background.channels() != 3) {
    throw ShapeError("background must be RGB");
  }
  const int h = background.height;
  const int w = background.width;
  const Homography inv = pose.inverse();
  const Eigen::Matrix3d & m = inv.matrix();

  RenderedFrame out{background, ForegroundMask(h, w, MaskSource::ground_truth)};
  const auto & tex = object.texture;
  const auto & alpha = object.alpha;
  const auto g = static_cast<float>(gain);

  auto tap = [&](int x, int y, float wgt, float & a, Eigen::Vector3f & c) {
    if (wgt == 0.0f || x < 0 || y < 0 || x >= tex.width || y >= tex.height) return;
    const float av = alpha(y, x);
    a += wgt * av;
    c += (wgt * av) * tex.pixel(x, y);
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d q = m * Eigen::Vector3d(x, y, 1.0);
      if (!(std::abs(q.z()) > 1e-12)) continue;
      const auto bw = bilinear_weights(q.x() / q.z(), q.y() / q.z());
      float a = 0.0f;
      Eigen::Vector3f premult = Eigen::Vector3f::Zero();
      tap(bw.x0, bw.y0, (1 - bw.fx) * (1 - bw.fy), a, premult);
      tap(bw.x0 + 1, bw.y0, bw.fx * (1 - bw.fy), a, premult);
      tap(bw.x0, bw.y0 + 1, (1 - bw.fx) * bw.fy, a, premult);
      tap(bw.x0 + 1, bw.y0 + 1, bw.fx * bw.fy, a, premult);
      if (a <= 0.0f) continue;
      a = std::min(a, 1.0f);
      const Eigen::Vector3f obj = (g * premult).cwiseMax(0.0f).cwiseMin(a);
      out.image.pixel(x, y) = obj + (1.0f - a) * background.pixel(x, y);
      if (a > 0.5f) out.mask.bits(y, x) = 1;
    }
  }
  if (out.mask.empty()) {
    throw DegenerateError("object warped fully out of frame");
  }
  return out;
}

// ---------------------------------------------------------------------------- ground truth

GroundTruthMap ground_truth_map(
  const Homography & source_pose, const Homography & target_pose,
  const ForegroundMask & source_mask, const ForegroundMask & target_mask)
{
  const int h = source_mask.height();
  const int w = source_mask.width();
  if (target_mask.height() != h || target_mask.width() != w) {
    throw ShapeError("ground_truth_map: mask sizes differ");
  }
  const Eigen::Matrix3d rel = target_pose.matrix() * source_pose.inverse().matrix();

  GroundTruthMap gt;
  gt.map_x.resize(h, w);
  gt.map_y.resize(h, w);
  gt.visible = Plane<std::uint8_t>::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gt.map_x(y, x) = static_cast<float>(x);
      gt.map_y(y, x) = static_cast<float>(y);
      if (!source_mask.bits(y, x)) continue;
      const Eigen::Vector2d q = (rel * Eigen::Vector3d(x, y, 1.0)).hnormalized();
      gt.map_x(y, x) = static_cast<float>(q.x());
      gt.map_y(y, x) = static_cast<float>(q.y());
      const double tx = gt.map_x(y, x);
      const double ty = gt.map_y(y, x);
      const bool inside = tx >= 0.0 && ty >= 0.0 && tx <= w - 1 && ty <= h - 1;
      gt.visible(y, x) = inside && target_mask.contains(round_px(tx), round_px(ty)) ? 1 : 0;
    }
  }
  return gt;
}

void write_ground_truth(const std::filesystem::path & path, const GroundTruthMap & gt)
{
  detail::ByteWriter out;
  out.magic("GTM1");
  out.u32(static_cast<std::uint32_t>(gt.height()));
  out.u32(static_cast<std::uint32_t>(gt.width()));
  out.u32(kGtmFlagMaskRestricted);
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      out.f32(gt.map_x(y, x));
      out.f32(gt.map_y(y, x));
    }
  }
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) out.u8(gt.visible(y, x));
  }
  out.save(path);
}

GroundTruthMap read_ground_truth(const std::filesystem::path & path)
{
  auto in = detail::ByteReader::load(path);
  in.expect_magic("GTM1");
  const int h = static_cast<int>(in.u32());
  const int w = static_cast<int>(in.u32());
  in.u32();  // flags
  GroundTruthMap gt;
  gt.map_x.resize(h, w);
  gt.map_y.resize(h, w);
  gt.visible.resize(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gt.map_x(y, x) = in.f32();
      gt.map_y(y, x) = in.f32();
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) gt.visible(y, x) = in.u8();
  }
  return gt;
}

// ---------------------------------------------------------------------------- assets

BackgroundKind parse_background(const std::string & name)
{
  if (name == "flat") return BackgroundKind::flat;
  if (name == "cluttered") return BackgroundKind::cluttered;
  throw ConfigError("unknown background '" + name + "' (expected flat | cluttered)");
}

std::string to_string(BackgroundKind kind)
{
  return kind == BackgroundKind::flat ? "flat" : "cluttered";
}

ImageFrame make_background(BackgroundKind kind, int height, int width, std::uint64_t seed)
{
  Rng rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  ImageFrame bg(3, height, width);

  if (kind == BackgroundKind::flat) {
    Eigen::Vector3f c0(unit(rng), unit(rng), unit(rng));
    Eigen::Vector3f c1(unit(rng), unit(rng), unit(rng));
    c0 = 0.3f + 0.4f * c0.array();
    c1 = 0.3f + 0.4f * c1.array();
    const float phase = 6.2831853f * unit(rng);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const float t = (static_cast<float>(x) / width + static_cast<float>(y) / height) * 0.5f;
        const float wave =
          0.03f * std::sin(phase + 6.2831853f * 1.5f * static_cast<float>(y) / height);
        bg.pixel(x, y) = ((1 - t) * c0 + t * c1).array() + wave;
      }
    }
    return bg;
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) bg.pixel(x, y).setConstant(0.45f);
  }
  const int shapes = std::max(12, height * width / 300);
  const float scale = static_cast<float>(std::min(height, width));
  for (int s = 0; s < shapes; ++s) {
    const Eigen::Vector3f color(unit(rng), unit(rng), unit(rng));
    const float cx = unit(rng) * width;
    const float cy = unit(rng) * height;
    const float r = (0.02f + 0.08f * unit(rng)) * scale;
    const float aspect = 0.4f + 1.2f * unit(rng);
    const bool disc = unit(rng) < 0.5f;
    for (int y = std::max(0, static_cast<int>(cy - 2 * r));
         y < std::min(height, static_cast<int>(cy + 2 * r) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - 2 * r));
           x < std::min(width, static_cast<int>(cx + 2 * r) + 1); ++x) {
        const float dx = (x - cx) / r;
        const float dy = (y - cy) / (r * aspect);
        const bool inside = disc ? dx * dx + dy * dy <= 1.0f
                                 : std::abs(dx) <= 1.0f && std::abs(dy) <= 1.0f;
        if (inside) bg.pixel(x, y) = color;
      }
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float n = 0.06f * (unit(rng) - 0.5f);
      bg.pixel(x, y) = (bg.pixel(x, y).array() + n).cwiseMax(0.0f).cwiseMin(1.0f);
    }
  }
  return bg;
}

namespace
{

struct Part
{
  Eigen::Vector2f center;  // in units of the frame's short side, relative to frame center
  Eigen::Vector2f half;
  float corner;
  Eigen::Vector3f color;
};

bool inside_part(const Part & p, float u, float v)
{
  const float dx = std::max(std::abs(u - p.center.x()) - (p.half.x() - p.corner), 0.0f);
  const float dy = std::max(std::abs(v - p.center.y()) - (p.half.y() - p.corner), 0.0f);
  return dx * dx + dy * dy <= p.corner * p.corner;
}

}  // namespace

TexturedObject make_drill_analog(int height, int width, std::uint64_t seed)
{
  Rng rng(seed);
  std::uniform_real_distribution<float> jitter(-0.04f, 0.04f);
  auto tint = [&](Eigen::Vector3f c) {
    return Eigen::Vector3f(c.array() + Eigen::Array3f(jitter(rng), jitter(rng), jitter(rng)));
  };

  // Painter's order: later parts overwrite earlier ones.
  const std::vector<Part> parts{
    {{-0.02f, 0.07f}, {0.05f, 0.10f}, 0.015f, tint({0.22f, 0.22f, 0.25f})},   // handle
    {{-0.03f, 0.18f}, {0.10f, 0.045f}, 0.015f, tint({0.16f, 0.20f, 0.38f})},  // battery
    {{-0.01f, -0.08f}, {0.20f, 0.07f}, 0.04f, tint({0.92f, 0.48f, 0.10f})},   // body
    {{0.22f, -0.08f}, {0.045f, 0.045f}, 0.01f, tint({0.68f, 0.68f, 0.72f})},  // chuck
    {{0.29f, -0.08f}, {0.035f, 0.018f}, 0.005f, tint({0.50f, 0.52f, 0.55f})}, // bit
    {{0.03f, 0.005f}, {0.018f, 0.03f}, 0.008f, tint({0.80f, 0.12f, 0.10f})},  // trigger
    {{-0.14f, -0.08f}, {0.035f, 0.06f}, 0.01f, tint({0.20f, 0.20f, 0.20f})},  // rear cap
  };

  const float side = static_cast<float>(std::min(height, width));
  const float cx = 0.5f * width;
  const float cy = 0.5f * height;
  ImageFrame tex(3, height, width);
  Plane<float> alpha = Plane<float>::Zero(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float u = (x - cx) / side;
      const float v = (y - cy) / side;
      for (const auto & part : parts) {
        if (!inside_part(part, u, v)) continue;
        // Cylindrical shading across the part's short axis plus a slow global color ramp.
        const bool wide = part.half.x() >= part.half.y();
        const float across = wide ? (v - part.center.y()) / part.half.y()
                                  : (u - part.center.x()) / part.half.x();
        const float shade = 0.78f + 0.22f * std::cos(1.3f * across - 0.35f);
        const Eigen::Array3f ramp(0.10f * u / 0.3f, 0.08f * v / 0.3f, -0.06f * u / 0.3f);
        alpha(y, x) = 1.0f;
        tex.pixel(x, y) =
          (part.color.array() * shade + ramp).cwiseMax(0.02f).cwiseMin(0.98f).matrix();
      }
    }
  }
  return TexturedObject(std::move(tex), std::move(alpha));
}

// ---------------------------------------------------------------------------- motion

void MotionScript::validate() const
{
  if (frames.size() < 2) {
    throw DegenerateError("motion script needs at least 2 frames");
  }
  for (const auto & f : frames) {
    if (!(f.gain >= 0.3 && f.gain <= 1.7)) {
      throw DegenerateError("brightness gain outside [0.3, 1.7]");
    }
  }
}

nlohmann::json to_json(const SynthConfig & c)
{
  return {
    {"height", c.height},
    {"width", c.width},
    {"frames", c.frames},
    {"backgrounds", c.backgrounds},
    {"background_block", c.background_block},
    {"motion", c.motion == MotionMode::constant ? "constant" : "random_walk"},
    {"max_translation_px", c.max_translation_px},
    {"max_rotation_deg", c.max_rotation_deg},
    {"max_scale_step", c.max_scale_step},
    {"scale_min", c.scale_min},
    {"scale_max", c.scale_max},
    {"max_perspective", c.max_perspective},
    {"translation_range", c.translation_range},
    {"gain_min", c.gain_min},
    {"gain_max", c.gain_max},
    {"max_gain_step", c.max_gain_step},
    {"rotation_step_deg", c.rotation_step_deg},
    {"translation_step", {c.translation_step.x(), c.translation_step.y()}},
    {"scale_step", c.scale_step},
    {"seed", c.seed},
  };
}

SynthConfig synth_config_from_json(const nlohmann::json & j)
{
  SynthConfig c;
  for (const auto & [key, value] : j.items()) {
    if (key == "height") c.height = value.get<int>();
    else if (key == "width") c.width = value.get<int>();
    else if (key == "frames") c.frames = value.get<int>();
    else if (key == "backgrounds") c.backgrounds = value.get<std::vector<std::string>>();
    else if (key == "background_block") c.background_block = value.get<int>();
    else if (key == "motion") {
      const auto m = value.get<std::string>();
      if (m == "constant") c.motion = MotionMode::constant;
      else if (m == "random_walk") c.motion = MotionMode::random_walk;
      else throw ConfigError("synth.motion must be random_walk | constant");
    }
    else if (key == "max_translation_px") c.max_translation_px = value.get<double>();
    else if (key == "max_rotation_deg") c.max_rotation_deg = value.get<double>();
    else if (key == "max_scale_step") c.max_scale_step = value.get<double>();
    else if (key == "scale_min") c.scale_min = value.get<double>();
    else if (key == "scale_max") c.scale_max = value.get<double>();
    else if (key == "max_perspective") c.max_perspective = value.get<double>();
    else if (key == "translation_range") c.translation_range = value.get<double>();
    else if (key == "gain_min") c.gain_min = value.get<double>();
    else if (key == "gain_max") c.gain_max = value.get<double>();
    else if (key == "max_gain_step") c.max_gain_step = value.get<double>();
    else if (key == "rotation_step_deg") c.rotation_step_deg = value.get<double>();
    else if (key == "translation_step") {
      const auto v = value.get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("synth.translation_step must have 2 entries");
      c.translation_step = {v[0], v[1]};
    }
    else if (key == "scale_step") c.scale_step = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown key synth." + key);
  }
  if (c.frames < 2) throw ConfigError("synth.frames must be >= 2");
  if (c.height < 8 || c.width < 8) throw ConfigError("synth frame size too small");
  if (c.backgrounds.empty()) throw ConfigError("synth.backgrounds needs at least one entry");
  for (const auto & b : c.backgrounds) parse_background(b);
  if (c.gain_min < 0.3 || c.gain_max > 1.7 || c.gain_min > c.gain_max) {
    throw ConfigError("synth gain range must lie within [0.3, 1.7]");
  }
  if (c.scale_min <= 0.0 || c.scale_min > c.scale_max) throw ConfigError("synth scale range invalid");
  return c;
}

MotionScript make_motion_script(const SynthConfig & cfg)
{
  Rng rng(derive_seed(cfg.seed, {0x6d6f74}));
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const Eigen::Vector2d center(0.5 * cfg.width, 0.5 * cfg.height);
  const Eigen::Vector2d range(cfg.translation_range * cfg.width, cfg.translation_range * cfg.height);
  const int nbg = static_cast<int>(cfg.backgrounds.size());

  MotionScript script;
  double angle = 0.0;
  double omega = 0.0;
  double scale = 1.0;
  double gain = std::clamp(1.0, cfg.gain_min, cfg.gain_max);
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  Eigen::Vector2d persp = Eigen::Vector2d::Zero();

  for (int k = 0; k < cfg.frames; ++k) {
    if (cfg.motion == MotionMode::constant) {
      angle = k * cfg.rotation_step_deg;
      t = k * cfg.translation_step;
      scale = 1.0 + k * cfg.scale_step;
      gain = 1.0;
    } else if (k > 0) {
      omega = std::clamp(
        0.7 * omega + 0.6 * cfg.max_rotation_deg * sym(rng), -cfg.max_rotation_deg,
        cfg.max_rotation_deg);
      angle += omega;
      for (int i = 0; i < 2; ++i) {
        v[i] = std::clamp(
          0.7 * v[i] + 0.6 * cfg.max_translation_px * sym(rng), -cfg.max_translation_px,
          cfg.max_translation_px);
        t[i] += v[i];
        if (std::abs(t[i]) > range[i]) {
          t[i] = std::copysign(range[i], t[i]);
          v[i] = -v[i];
        }
      }
      scale = std::clamp(scale + cfg.max_scale_step * sym(rng), cfg.scale_min, cfg.scale_max);
      gain = std::clamp(gain + cfg.max_gain_step * sym(rng), cfg.gain_min, cfg.gain_max);
      for (int i = 0; i < 2; ++i) {
        persp[i] = std::clamp(
          persp[i] + 0.1 * cfg.max_perspective * sym(rng), -cfg.max_perspective,
          cfg.max_perspective);
      }
    }
    MotionFrame f;
    f.pose = compose_homography(angle, scale, t, persp, center);
    f.gain = gain;
    f.background = cfg.background_block > 0 ? (k / cfg.background_block) % nbg : 0;
    script.frames.push_back(f);
  }
  script.validate();
  return script;
}

nlohmann::json motion_to_json(const MotionScript & script)
{
  auto frames = nlohmann::json::array();
  for (std::size_t k = 0; k < script.frames.size(); ++k) {
    const auto & f = script.frames[k];
    std::vector<double> m(9);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 3 + c)] = f.pose.matrix()(r, c);
    }
    frames.push_back({{"index", k}, {"pose", m}, {"gain", f.gain}, {"background", f.background}});
  }
  return frames;
}

MotionScript motion_from_json(const nlohmann::json & j)
{
  MotionScript script;
  for (const auto & f : j) {
    const auto m = f.at("pose").get<std::vector<double>>();
    if (m.size() != 9) throw IoError("motion pose must have 9 entries");
    Eigen::Matrix3d mat;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) mat(r, c) = m[static_cast<std::size_t>(r * 3 + c)];
    }
    script.frames.push_back({Homography(mat), f.at("gain").get<double>(), f.at("background").get<int>()});
  }
  return script;
}

std::string frame_name(int k)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", k);
  return buf;
}

void generate_sequence(const SynthConfig & cfg, const std::filesystem::path & out_dir)
{
  const auto script = make_motion_script(cfg);
  const auto object = make_drill_analog(cfg.height, cfg.width, derive_seed(cfg.seed, {0x6f626a}));
  std::vector<ImageFrame> backgrounds;
  for (std::size_t i = 0; i < cfg.backgrounds.size(); ++i) {
    backgrounds.push_back(make_background(
      parse_background(cfg.backgrounds[i]), cfg.height, cfg.width,
      derive_seed(cfg.seed, {0x626b67, i})));
  }

  std::error_code ec;
  for (const char * sub : {"frames", "masks", "gt"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  std::vector<ForegroundMask> masks;
  masks.reserve(script.frames.size());
  for (std::size_t k = 0; k < script.frames.size(); ++k) {
    const auto & f = script.frames[k];
    auto frame = render_frame(object, backgrounds[static_cast<std::size_t>(f.background)], f.pose, f.gain);
    const auto name = frame_name(static_cast<int>(k)) + ".png";
    write_png(out_dir / "frames" / name, frame.image);
    Plane<std::uint8_t> mask8 = frame.mask.bits * std::uint8_t{255};
    write_png_gray8(out_dir / "masks" / name, mask8);
    masks.push_back(std::move(frame.mask));
  }
  for (std::size_t k = 0; k + 1 < script.frames.size(); ++k) {
    auto gt = ground_truth_map(script.frames[k].pose, script.frames[k + 1].pose, masks[k], masks[k + 1]);
    gt.source = static_cast<int>(k);
    gt.target = static_cast<int>(k + 1);
    write_ground_truth(
      out_dir / "gt" / (frame_name(static_cast<int>(k)) + "_" + frame_name(static_cast<int>(k + 1)) + ".gtm"),
      gt);
  }

  nlohmann::json meta{
    {"format", "flowdesc-sequence"},
    {"version", 1},
    {"height", cfg.height},
    {"width", cfg.width},
    {"frame_count", cfg.frames},
    {"backgrounds", cfg.backgrounds},
    {"config", to_json(cfg)},
    {"frames", motion_to_json(script)},
  };
  std::ofstream out(out_dir / "motion.json", std::ios::trunc);
  if (!out) throw IoError("cannot write motion.json");
  out << meta.dump(2) << "\n";
}

}  // namespace flowdesc
