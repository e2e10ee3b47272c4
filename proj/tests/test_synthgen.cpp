#include "flowdesc/error.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/synthgen.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace flowdesc;

namespace
{

std::filesystem::path temp_dir(const std::string & name)
{
  auto p = std::filesystem::temp_directory_path() / ("flowdesc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TexturedObject square_object(int h, int w, int x0, int y0, int side)
{
  ImageFrame tex(3, h, w);
  Plane<float> alpha = Plane<float>::Zero(h, w);
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) {
      alpha(y, x) = 1.0f;
      tex.at(0, x, y) = 0.25f + 0.5f * static_cast<float>((x + y) % 2);
      tex.at(1, x, y) = 0.5f;
      tex.at(2, x, y) = static_cast<float>(x) / static_cast<float>(w);
    }
  }
  return {tex, alpha};
}

Eigen::Vector2d centroid(const ForegroundMask & m)
{
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  long n = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.contains(x, y)) {
        c += Eigen::Vector2d(x, y);
        ++n;
      }
    }
  }
  return c / static_cast<double>(n);
}

// Orientation of the principal axis of the mask pixels, in degrees within (-90, 90].
double principal_angle(const ForegroundMask & m)
{
  const auto c = centroid(m);
  double sxx = 0, syy = 0, sxy = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.contains(x, y)) continue;
      const double dx = x - c.x(), dy = y - c.y();
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  return 0.5 * std::atan2(2 * sxy, sxx - syy) * 180.0 / std::numbers::pi;
}

double angle_diff(double a, double b)
{
  double d = std::fmod(a - b, 180.0);
  if (d > 90) d -= 180;
  if (d <= -90) d += 180;
  return d;
}

}  // namespace

TEST(Homography, ComposeIdentity)
{
  const auto h = compose_homography(0.0, 1.0, {0, 0}, {0, 0}, {50, 50});
  EXPECT_TRUE(h.matrix().isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(Homography, ComposeTranslationIsAdditive)
{
  const auto h = compose_homography(0.0, 1.0, {5, -3}, {0, 0}, {50, 50});
  const auto p = h.apply(PixelCoord{10, 20});
  EXPECT_NEAR(p.x, 15.0, 1e-12);
  EXPECT_NEAR(p.y, 17.0, 1e-12);
}

TEST(Homography, NinetyDegreesAboutCenter)
{
  const auto h = compose_homography(90.0, 1.0, {0, 0}, {0, 0}, {50, 50});
  const auto & m = h.matrix();
  // Independent 3x3 multiply on homogeneous (60, 50, 1).
  const double v[3] = {60, 50, 1};
  double out[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r] += m(r, c) * v[c];
  }
  EXPECT_NEAR(out[0] / out[2], 50.0, 1e-9);
  EXPECT_NEAR(out[1] / out[2], 60.0, 1e-9);
}

TEST(Homography, NormalizedAndInvertible)
{
  Eigen::Matrix3d m;
  m << 2, 0, 4, 0, 2, 6, 0, 0, 2;
  const Homography h(m);
  EXPECT_DOUBLE_EQ(h.matrix()(2, 2), 1.0);
  const auto p = (h.inverse() * h).apply(PixelCoord{3.5, -7.25});
  EXPECT_NEAR(p.x, 3.5, 1e-12);
  EXPECT_NEAR(p.y, -7.25, 1e-12);
}

TEST(Homography, DegenerateRejected)
{
  Eigen::Matrix3d m;
  m << 1, 2, 0, 2, 4, 0, 0, 0, 1;
  EXPECT_THROW(Homography{m}, DegenerateError);
  EXPECT_THROW(compose_homography(0, 0.0, {0, 0}, {0, 0}, {8, 8}), DegenerateError);
}

TEST(RenderFrame, IdentityOverBlackEqualsTexture)
{
  const auto obj = square_object(32, 32, 8, 10, 12);
  const ImageFrame black(3, 32, 32);
  const auto f = render_frame(obj, black, Homography::identity(), 1.0);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const bool inside = obj.alpha(y, x) > 0.5f;
      EXPECT_EQ(f.mask.contains(x, y), inside);
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(f.image.at(c, x, y), inside ? obj.texture.at(c, x, y) : 0.0f);
      }
    }
  }
}

TEST(RenderFrame, GainHalvesObjectPixels)
{
  const auto obj = square_object(32, 32, 8, 10, 12);
  const ImageFrame black(3, 32, 32);
  const auto full = render_frame(obj, black, Homography::identity(), 1.0);
  const auto half = render_frame(obj, black, Homography::identity(), 0.5);
  for (int y = 10; y < 22; ++y) {
    for (int x = 8; x < 20; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(half.image.at(c, x, y), 0.5f * full.image.at(c, x, y));
    }
  }
}

TEST(RenderFrame, TranslationShiftsMaskCentroid)
{
  const auto obj = square_object(48, 48, 10, 12, 14);
  const ImageFrame bg(3, 48, 48);
  const auto a = render_frame(obj, bg, Homography::identity(), 1.0);
  const auto b = render_frame(obj, bg, Homography::translation(5, 0), 1.0);
  const auto d = centroid(b.mask) - centroid(a.mask);
  EXPECT_NEAR(d.x(), 5.0, 0.5);
  EXPECT_NEAR(d.y(), 0.0, 0.5);
}

TEST(RenderFrame, OutOfFrameIsDegenerate)
{
  const auto obj = square_object(32, 32, 8, 10, 12);
  EXPECT_THROW(render_frame(obj, ImageFrame(3, 32, 32), Homography::translation(100, 0), 1.0), DegenerateError);
}

TEST(GroundTruth, EqualPosesGiveIdentity)
{
  const auto pose = compose_homography(12.0, 1.05, {3, -2}, {0, 0}, {32, 32});
  const auto obj = square_object(64, 64, 20, 20, 20);
  const auto r = render_frame(obj, ImageFrame(3, 64, 64), pose, 1.0);
  const auto gt = ground_truth_map(pose, pose, r.mask, r.mask);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!r.mask.contains(x, y)) continue;
      EXPECT_NEAR(gt.map_x(y, x), x, 1e-4);
      EXPECT_NEAR(gt.map_y(y, x), y, 1e-4);
      EXPECT_EQ(gt.visible(y, x), 1);
    }
  }
}

TEST(GroundTruth, TranslationAddsOffset)
{
  const auto obj = square_object(64, 64, 20, 20, 20);
  const auto ra = render_frame(obj, ImageFrame(3, 64, 64), Homography::identity(), 1.0);
  const auto rb = render_frame(obj, ImageFrame(3, 64, 64), Homography::translation(3, 0), 1.0);
  const auto gt = ground_truth_map(Homography::identity(), Homography::translation(3, 0), ra.mask, rb.mask);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!ra.mask.contains(x, y)) continue;
      EXPECT_FLOAT_EQ(gt.map_x(y, x), x + 3.0f);
      EXPECT_FLOAT_EQ(gt.map_y(y, x), static_cast<float>(y));
    }
  }
}

TEST(GroundTruth, RotationsComposeToDifference)
{
  const Eigen::Vector2d c(40, 40);
  const auto hs = compose_homography(10.0, 1.0, {0, 0}, {0, 0}, c);
  const auto ht = compose_homography(25.0, 1.0, {0, 0}, {0, 0}, c);
  const auto direct = compose_homography(15.0, 1.0, {0, 0}, {0, 0}, c);
  const auto full = ForegroundMask::full(80, 80);
  const auto gt = ground_truth_map(hs, ht, full, full);
  double worst = 0.0;
  for (int y = 0; y < 80; ++y) {
    for (int x = 0; x < 80; ++x) {
      const auto p = direct.apply(Eigen::Vector2d(x, y));
      // The map is stored as float32, so compare the double mapping directly too.
      const auto q = ht.apply(hs.inverse().apply(Eigen::Vector2d(x, y)));
      worst = std::max(worst, (p - q).norm());
      EXPECT_NEAR(gt.map_x(y, x), p.x(), 1e-4);
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(GroundTruth, ChainAndInverseConsistency)
{
  const Eigen::Vector2d c(32, 32);
  const auto h0 = compose_homography(0.0, 1.0, {0, 0}, {0, 0}, c);
  const auto h1 = compose_homography(4.0, 1.02, {2.5, -1}, {1e-4, 0}, c);
  const auto h2 = compose_homography(-3.0, 0.97, {-1, 2}, {0, -1e-4}, c);
  const auto obj = square_object(64, 64, 18, 16, 26);
  const ImageFrame bg(3, 64, 64);
  const auto m0 = render_frame(obj, bg, h0, 1.0).mask;
  const auto m1 = render_frame(obj, bg, h1, 1.0).mask;
  const auto m2 = render_frame(obj, bg, h2, 1.0).mask;
  const auto g01 = ground_truth_map(h0, h1, m0, m1);
  const auto g02 = ground_truth_map(h0, h2, m0, m2);
  const auto g10 = ground_truth_map(h1, h0, m1, m0);
  int checked = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!g01.visible(y, x) || !g02.visible(y, x)) continue;
      const PixelCoord p = g01.at(x, y);
      // Chain through the exact homography, since g12 is sampled at integer pixels only.
      const auto via = (h2 * h1.inverse()).apply(p);
      EXPECT_NEAR(via.x, g02.map_x(y, x), 1e-4);
      EXPECT_NEAR(via.y, g02.map_y(y, x), 1e-4);
      const auto back = (h0 * h1.inverse()).apply(p);
      EXPECT_NEAR(back.x, x, 1e-4);
      EXPECT_NEAR(back.y, y, 1e-4);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
  // Integer-pixel round trip through the stored maps.
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!g10.visible(y, x)) continue;
      const int tx = round_px(g10.map_x(y, x));
      const int ty = round_px(g10.map_y(y, x));
      EXPECT_NEAR(g01.map_x(ty, tx), x, 1.5);
    }
  }
}

TEST(GroundTruth, VisibleTargetsAreInBoundsAndOnMask)
{
  SynthConfig cfg;
  cfg.height = 64;
  cfg.width = 64;
  cfg.frames = 2;
  const auto script = make_motion_script(cfg);
  const auto obj = make_drill_analog(64, 64, 3);
  const auto bg = make_background(BackgroundKind::flat, 64, 64, 4);
  const auto a = render_frame(obj, bg, script.frames[0].pose, 1.0);
  const auto b = render_frame(obj, bg, Homography::translation(30, 0) * script.frames[0].pose, 1.0);
  const auto gt = ground_truth_map(script.frames[0].pose, Homography::translation(30, 0) * script.frames[0].pose, a.mask, b.mask);
  long visible = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!gt.visible(y, x)) continue;
      ++visible;
      EXPECT_TRUE(a.mask.contains(x, y));
      EXPECT_GE(gt.map_x(y, x), 0.0f);
      EXPECT_LE(gt.map_x(y, x), 63.0f);
      EXPECT_TRUE(b.mask.contains(gt.at(x, y)));
    }
  }
  EXPECT_GT(visible, 0);
  EXPECT_LT(visible, a.mask.count());
}

TEST(GroundTruth, FileRoundTrip)
{
  const auto dir = temp_dir("gtm");
  const auto obj = square_object(24, 20, 4, 4, 10);
  const auto m = render_frame(obj, ImageFrame(3, 24, 20), Homography::identity(), 1.0).mask;
  auto gt = ground_truth_map(Homography::identity(), compose_homography(7, 1.1, {1, 2}, {0, 0}, {10, 12}), m, m);
  write_ground_truth(dir / "x.gtm", gt);
  const auto back = read_ground_truth(dir / "x.gtm");
  EXPECT_TRUE((back.map_x == gt.map_x).all());
  EXPECT_TRUE((back.map_y == gt.map_y).all());
  EXPECT_TRUE((back.visible == gt.visible).all());
  const auto bytes = slurp(dir / "x.gtm");
  EXPECT_EQ(bytes.substr(0, 4), "GTM1");
  EXPECT_EQ(bytes.size(), 16u + 24u * 20u * 9u);
}

TEST(MotionScript, ValidationRejectsBadScripts)
{
  MotionScript s;
  s.frames.resize(1);
  EXPECT_THROW(s.validate(), DegenerateError);
  s.frames.resize(3);
  s.frames[1].gain = 1.8;
  EXPECT_THROW(s.validate(), DegenerateError);
  s.frames[1].gain = 1.7;
  EXPECT_NO_THROW(s.validate());
}

TEST(MotionScript, BackgroundBlocksCycle)
{
  SynthConfig cfg;
  cfg.frames = 100;
  cfg.height = cfg.width = 64;
  const auto s = make_motion_script(cfg);
  EXPECT_EQ(s.frames[0].background, 0);
  EXPECT_EQ(s.frames[24].background, 0);
  EXPECT_EQ(s.frames[25].background, 1);
  EXPECT_EQ(s.frames[50].background, 0);
  EXPECT_EQ(s.frames[99].background, 1);
}

TEST(MotionScript, RandomWalkRespectsPerFrameBounds)
{
  SynthConfig cfg;
  cfg.frames = 120;
  const auto s = make_motion_script(cfg);
  const Eigen::Vector2d c(cfg.width / 2.0, cfg.height / 2.0);
  for (std::size_t k = 1; k < s.frames.size(); ++k) {
    const auto rel = s.frames[k].pose * s.frames[k - 1].pose.inverse();
    const auto m = rel.matrix();
    const double rot = std::atan2(m(1, 0), m(0, 0)) * 180.0 / std::numbers::pi;
    EXPECT_LE(std::abs(rot), cfg.max_rotation_deg + 1e-9);
    EXPECT_GE(s.frames[k].gain, cfg.gain_min);
    EXPECT_LE(s.frames[k].gain, cfg.gain_max);
  }
}

TEST(Synthgen, ConfigJsonRoundTripAndUnknownKeys)
{
  SynthConfig cfg;
  cfg.frames = 17;
  cfg.backgrounds = {"cluttered"};
  cfg.translation_step = {1.5, -2};
  const auto back = synth_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_THROW(synth_config_from_json({{"frame_count", 3}}), ConfigError);
}

TEST(GenerateSequence, TwoFrameIdentityScript)
{
  const auto dir = temp_dir("gen_identity");
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.frames = 2;
  cfg.motion = MotionMode::constant;
  cfg.backgrounds = {"flat"};
  generate_sequence(cfg, dir);
  EXPECT_TRUE(slurp(dir / "frames/000000.png") == slurp(dir / "frames/000001.png"));
  const auto gt = read_ground_truth(dir / "gt/000000_000001.gtm");
  const auto mask = read_png_gray8(dir / "masks/000000.png");
  long on = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (mask(y, x) == 0) continue;
      ++on;
      EXPECT_NEAR(gt.map_x(y, x), x, 1e-5);
      EXPECT_NEAR(gt.map_y(y, x), y, 1e-5);
      EXPECT_EQ(gt.visible(y, x), 1);
    }
  }
  EXPECT_GT(on, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "motion.json"));
}

TEST(GenerateSequence, ConstantRotationReachesExpectedOrientation)
{
  const auto dir = temp_dir("gen_rotation");
  SynthConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.frames = 50;
  cfg.motion = MotionMode::constant;
  cfg.rotation_step_deg = 2.0;
  cfg.backgrounds = {"flat"};
  generate_sequence(cfg, dir);
  ForegroundMask m0(128, 128), m25(128, 128);
  m0.bits = (read_png_gray8(dir / "masks/000000.png") > 127).cast<std::uint8_t>();
  m25.bits = (read_png_gray8(dir / "masks/000025.png") > 127).cast<std::uint8_t>();
  EXPECT_NEAR(angle_diff(principal_angle(m25), principal_angle(m0)), 50.0, 1.0);
}

TEST(GenerateSequence, DeterministicBytes)
{
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.frames = 6;
  cfg.seed = 11;
  const auto a = temp_dir("gen_det_a");
  const auto b = temp_dir("gen_det_b");
  generate_sequence(cfg, a);
  generate_sequence(cfg, b);
  for (const auto & e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    EXPECT_TRUE(slurp(e.path()) == slurp(b / rel)) << rel;
  }
  cfg.seed = 12;
  const auto c = temp_dir("gen_det_c");
  generate_sequence(cfg, c);
  EXPECT_TRUE(slurp(a / "frames/000003.png") != slurp(c / "frames/000003.png"));
}

TEST(GenerateSequence, MaskConservedUnderRigidMotion)
{
  SynthConfig cfg;
  cfg.frames = 40;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.max_scale_step = 0.0;
  const auto script = make_motion_script(cfg);
  const auto obj = make_drill_analog(cfg.height, cfg.width, 5);
  const auto bg = make_background(BackgroundKind::cluttered, cfg.height, cfg.width, 6);
  long prev = -1;
  for (const auto & f : script.frames) {
    const long n = render_frame(obj, bg, f.pose, f.gain).mask.count();
    if (prev > 0) {
      EXPECT_LT(std::abs(n - prev), 0.02 * prev);
    }
    prev = n;
  }
}
