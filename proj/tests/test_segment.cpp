#include "flowdesc/error.hpp"
#include "flowdesc/flowlab.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/rng.hpp"
#include "flowdesc/segment.hpp"
#include "flowdesc/synthgen.hpp"

#include <gtest/gtest.h>

#include <queue>

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

void set_block(FlowField & f, int x0, int y0, int side, double dx)
{
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) f.dx(y, x) = dx;
  }
}

// Number of 4-connected components, by breadth-first flood fill.
int component_count(const ForegroundMask & m)
{
  Plane<int> seen = Plane<int>::Zero(m.height(), m.width());
  int n = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.contains(x, y) || seen(y, x)) continue;
      ++n;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      seen(y, x) = 1;
      while (!q.empty()) {
        const auto [cx, cy] = q.front();
        q.pop();
        const int nx[4] = {cx + 1, cx - 1, cx, cx};
        const int ny[4] = {cy, cy, cy + 1, cy - 1};
        for (int k = 0; k < 4; ++k) {
          if (m.contains(nx[k], ny[k]) && !seen(ny[k], nx[k])) {
            seen(ny[k], nx[k]) = 1;
            q.push({nx[k], ny[k]});
          }
        }
      }
    }
  }
  return n;
}

}  // namespace

TEST(LoadMask, AllWhiteIsFullFrame)
{
  const auto dir = temp_dir("mask_white");
  Plane<std::uint8_t> p = Plane<std::uint8_t>::Constant(12, 9, 255);
  write_png_gray8(dir / "m.png", p);
  const auto m = load_mask(dir / "m.png");
  EXPECT_EQ(m.count(), 12 * 9);
  EXPECT_EQ(m.source, MaskSource::file);
}

TEST(LoadMask, AllBlackIsEmptyAndUnusable)
{
  const auto dir = temp_dir("mask_black");
  write_png_gray8(dir / "m.png", Plane<std::uint8_t>::Zero(8, 8));
  const auto m = load_mask(dir / "m.png");
  EXPECT_TRUE(m.empty());
  EXPECT_FALSE(usable_for_sampling(m, "test"));
}

TEST(LoadMask, ThresholdAndSizeCheck)
{
  const auto dir = temp_dir("mask_thresh");
  Plane<std::uint8_t> p(1, 4);
  p << 0, 127, 128, 255;
  write_png_gray8(dir / "m.png", p);
  const auto m = load_mask(dir / "m.png");
  EXPECT_FALSE(m.contains(0, 0));
  EXPECT_FALSE(m.contains(1, 0));
  EXPECT_TRUE(m.contains(2, 0));
  EXPECT_TRUE(m.contains(3, 0));
  EXPECT_THROW(load_mask(dir / "m.png", std::pair{2, 4}), ShapeError);
  EXPECT_THROW(load_mask(dir / "missing.png"), IoError);
}

TEST(LoadMask, SaveRoundTrip)
{
  const auto dir = temp_dir("mask_roundtrip");
  ForegroundMask m(10, 13);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 13; ++x) m.bits(y, x) = static_cast<std::uint8_t>((x * 7 + y * 3) % 5 == 0);
  }
  save_mask(dir / "m.png", m);
  EXPECT_TRUE((load_mask(dir / "m.png").bits == m.bits).all());
}

TEST(LoadMask, MatchesSynthgenMask)
{
  const auto dir = temp_dir("mask_synth");
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.frames = 3;
  cfg.backgrounds = {"cluttered"};
  generate_sequence(cfg, dir);
  const auto script = make_motion_script(cfg);
  const auto obj = make_drill_analog(64, 64, derive_seed(cfg.seed, {0x6f626a}));
  const auto bg = make_background(BackgroundKind::cluttered, 64, 64, derive_seed(cfg.seed, {0x626b67, 0}));
  for (int k = 0; k < 3; ++k) {
    const auto rendered = render_frame(obj, bg, script.frames[k].pose, script.frames[k].gain);
    const auto m = load_mask(dir / "masks" / (frame_name(k) + ".png"), std::pair{64, 64});
    EXPECT_TRUE((m.bits == rendered.mask.bits).all()) << k;
  }
}

TEST(MotionMask, ZeroFlowIsEmpty)
{
  EXPECT_THROW(motion_mask(FlowField(30, 30), 0.5), EmptyMaskError);
}

TEST(MotionMask, SingleBlockExactly)
{
  FlowField f(40, 50);
  set_block(f, 7, 9, 20, 5.0);
  const auto m = motion_mask(f, 1.0);
  EXPECT_EQ(m.count(), 400);
  EXPECT_EQ(m.source, MaskSource::motion);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 50; ++x) {
      EXPECT_EQ(m.contains(x, y), x >= 7 && x < 27 && y >= 9 && y < 29);
    }
  }
}

TEST(MotionMask, KeepsLargestComponent)
{
  FlowField f(40, 60);
  set_block(f, 2, 2, 20, 5.0);
  set_block(f, 40, 30, 5, 5.0);
  FlowField joined = f;
  const auto m = motion_mask(f, 1.0);
  EXPECT_EQ(component_count(m), 1);
  EXPECT_EQ(m.count(), 400);
  EXPECT_FALSE(m.contains(42, 32));
  // Diagonal contact does not join components under 4-connectivity.
  set_block(joined, 22, 22, 5, 5.0);
  EXPECT_EQ(motion_mask(joined, 1.0).count(), 400);
}

TEST(MotionMask, ThresholdIsStrict)
{
  FlowField f(10, 10);
  set_block(f, 0, 0, 4, 1.0);
  EXPECT_THROW(motion_mask(f, 1.0), EmptyMaskError);
  EXPECT_THROW(motion_mask(f, -1.0), ConfigError);
}
