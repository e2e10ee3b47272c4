#include "flowdesc/error.hpp"
#include "flowdesc/flowlab.hpp"
#include "flowdesc/rng.hpp"
#include "flowdesc/synthgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

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

// Smooth random texture: sum of a few sinusoids plus blobs, so gradients exist everywhere.
ImageFrame smooth_texture(int h, int w, std::uint64_t seed)
{
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageFrame img(3, h, w);
  for (int c = 0; c < 3; ++c) {
    double fx[4], fy[4], ph[4];
    for (int k = 0; k < 4; ++k) {
      fx[k] = 0.05 + 0.25 * u(rng);
      fy[k] = 0.05 + 0.25 * u(rng);
      ph[k] = 6.28 * u(rng);
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.5;
        for (int k = 0; k < 4; ++k) v += 0.1 * std::sin(fx[k] * x + fy[k] * y + ph[k]);
        img.at(c, x, y) = static_cast<float>(v);
      }
    }
  }
  return img;
}

double median(std::vector<double> v)
{
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

CorrespondenceMap identity_corr(int h, int w)
{
  return flow_to_correspondence(FlowField(h, w), ForegroundMask::full(h, w), ForegroundMask::full(h, w));
}

}  // namespace

TEST(FlowBackend, ParseNames)
{
  EXPECT_EQ(parse_flow_backend("classical"), FlowBackend::classical);
  EXPECT_EQ(parse_flow_backend("file"), FlowBackend::file);
  EXPECT_EQ(parse_flow_backend("ground-truth"), FlowBackend::ground_truth);
  EXPECT_THROW(parse_flow_backend("flownet"), ConfigError);
}

TEST(ClassicalFlow, IdenticalFramesGiveZeroFlow)
{
  const auto a = smooth_texture(48, 64, 3);
  const auto f = estimate_flow_classical(a, a);
  EXPECT_LT(f.dx.abs().maxCoeff(), 0.25);
  EXPECT_LT(f.dy.abs().maxCoeff(), 0.25);
}

TEST(ClassicalFlow, RecoversIntegerShift)
{
  const int h = 64, w = 80;
  const auto big = smooth_texture(h, w + 3, 5);
  ImageFrame a(3, h, w), b(3, h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        a.at(c, x, y) = big.at(c, x + 3, y);
        b.at(c, x, y) = big.at(c, x, y);
      }
    }
  }
  // b(x + 3) == a(x): content moves 3 px right.
  const auto f = estimate_flow(a, b, FlowBackend::classical);
  std::vector<double> ex, ey;
  for (int y = 8; y < h - 8; ++y) {
    for (int x = 8; x < w - 8; ++x) {
      ex.push_back(f.dx(y, x));
      ey.push_back(f.dy(y, x));
    }
  }
  EXPECT_NEAR(median(ex), 3.0, 0.5);
  EXPECT_NEAR(median(ey), 0.0, 0.5);
}

TEST(ClassicalFlow, SizeMismatchRejected)
{
  EXPECT_THROW(estimate_flow_classical(ImageFrame(3, 8, 8), ImageFrame(3, 8, 9)), ShapeError);
}

TEST(GroundTruthFlow, DisplacementReproducesMap)
{
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  const auto script = make_motion_script(cfg);
  const auto obj = make_drill_analog(64, 64, 9);
  const auto bg = make_background(BackgroundKind::flat, 64, 64, 2);
  const auto a = render_frame(obj, bg, script.frames[3].pose, 1.0);
  const auto b = render_frame(obj, bg, script.frames[4].pose, 1.0);
  const auto gt = ground_truth_map(script.frames[3].pose, script.frames[4].pose, a.mask, b.mask);
  FlowInputs in;
  in.ground_truth = &gt;
  const auto flow = estimate_flow(a.image, b.image, FlowBackend::ground_truth, {}, in);
  EXPECT_EQ(flow.backend, FlowBackend::ground_truth);
  const auto corr = flow_to_correspondence(flow, a.mask, b.mask);
  long n = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      EXPECT_EQ(flow.dx(y, x), static_cast<double>(gt.map_x(y, x)) - x);
      if (!gt.visible(y, x)) continue;
      ++n;
      EXPECT_EQ(corr.valid(y, x), 1);
      EXPECT_EQ(static_cast<float>(corr.x(y, x)), gt.map_x(y, x));
      EXPECT_EQ(static_cast<float>(corr.y(y, x)), gt.map_y(y, x));
    }
  }
  EXPECT_EQ(corr.valid_count(), n);
  EXPECT_THROW(estimate_flow(a.image, b.image, FlowBackend::ground_truth), IoError);
}

TEST(FlowFile, RoundTripAndMiddlebury)
{
  const auto dir = temp_dir("flowfile");
  FlowField f(5, 7);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      f.dx(y, x) = 0.25 * x - y;
      f.dy(y, x) = -0.5 * y + 0.125 * x;
    }
  }
  write_flow_file(dir / "a.flo", f);
  const auto back = read_flow_file(dir / "a.flo");
  EXPECT_TRUE((back.dx == f.dx).all());
  EXPECT_TRUE((back.dy == f.dy).all());

  write_middlebury_flow(dir / "m.flo", f);
  convert_middlebury_flow(dir / "m.flo", dir / "c.flo");
  const auto conv = read_flow_file(dir / "c.flo");
  EXPECT_TRUE((conv.dx == f.dx).all());
  EXPECT_TRUE((read_flow_file(dir / "m.flo").dy == f.dy).all());

  FlowInputs in;
  in.flow_file = dir / "missing.flo";
  EXPECT_THROW(estimate_flow(ImageFrame(3, 5, 7), ImageFrame(3, 5, 7), FlowBackend::file, {}, in), IoError);
  in.flow_file = dir / "a.flo";
  EXPECT_THROW(estimate_flow(ImageFrame(3, 6, 7), ImageFrame(3, 6, 7), FlowBackend::file, {}, in), ShapeError);
}

TEST(Correspondence, ZeroFlowIsIdentity)
{
  const auto corr = identity_corr(9, 11);
  EXPECT_EQ(corr.valid_count(), 99);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 11; ++x) {
      EXPECT_EQ(corr.x(y, x), x);
      EXPECT_EQ(corr.y(y, x), y);
    }
  }
}

TEST(Correspondence, AddsDisplacement)
{
  FlowField f(30, 30);
  f.dx(20, 10) = 3.0;
  const auto corr = flow_to_correspondence(f, ForegroundMask::full(30, 30), ForegroundMask::full(30, 30));
  EXPECT_EQ(corr.x(20, 10), 13.0);
  EXPECT_EQ(corr.y(20, 10), 20.0);
}

TEST(Correspondence, OutOfBoundsAndMaskRules)
{
  FlowField f(10, 10);
  f.dx.setConstant(4.0);
  ForegroundMask mb = ForegroundMask::full(10, 10);
  mb.bits(0, 4) = 0;
  const auto corr = flow_to_correspondence(f, ForegroundMask::full(10, 10), mb);
  EXPECT_EQ(corr.valid(0, 5), 1);
  EXPECT_EQ(corr.valid(0, 6), 0);  // lands at x = 10
  EXPECT_EQ(corr.valid(0, 0), 0);  // lands on a pixel removed from mask B
  ForegroundMask ma(10, 10);
  EXPECT_EQ(flow_to_correspondence(f, ma, mb).valid_count(), 0);
}

TEST(Correspondence, ForwardBackwardCheck)
{
  FlowField fwd(20, 20), bwd(20, 20);
  fwd.dx.setConstant(5.0);
  bwd.dx.setConstant(-2.0);
  const auto full = ForegroundMask::full(20, 20);
  // Residual |5 - 2| = 3 exceeds tau = 1.
  EXPECT_EQ(flow_to_correspondence(fwd, full, full, &bwd, 1.0).valid(10, 5), 0);
  bwd.dx.setConstant(-5.0);
  EXPECT_EQ(flow_to_correspondence(fwd, full, full, &bwd, 1.0).valid(10, 5), 1);
}

TEST(SampleMatches, ClampsToValidCount)
{
  FlowField f(6, 6);
  ForegroundMask ma(6, 6);
  ma.bits.block(1, 1, 2, 3).setOnes();
  const auto full = ForegroundMask::full(6, 6);
  const auto corr = flow_to_correspondence(f, ma, full);
  const auto m = sample_matches(corr, full, 100, 4, 7);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m.negatives.size(), 24u);
}

TEST(SampleMatches, TwoPixelMaskForcesNegatives)
{
  ForegroundMask ma(5, 5), mb(5, 5);
  ma.bits(2, 2) = 1;
  mb.bits(2, 2) = 1;
  mb.bits(4, 0) = 1;
  const auto corr = flow_to_correspondence(FlowField(5, 5), ma, mb);
  const auto m = sample_matches(corr, mb, 10, 16, 3);
  ASSERT_EQ(m.size(), 1u);
  for (int k = 0; k < 16; ++k) EXPECT_EQ(m.negative(0, k), (PixelCoord{0, 4}));
}

TEST(SampleMatches, ErrorsOnDegenerateInputs)
{
  const auto empty = flow_to_correspondence(FlowField(5, 5), ForegroundMask(5, 5), ForegroundMask::full(5, 5));
  EXPECT_THROW(sample_matches(empty, ForegroundMask::full(5, 5), 10, 2, 1), SamplingError);
  ForegroundMask one(5, 5);
  one.bits(1, 1) = 1;
  const auto corr = flow_to_correspondence(FlowField(5, 5), one, one);
  EXPECT_THROW(sample_matches(corr, one, 10, 2, 1), SamplingError);
  EXPECT_THROW(sample_matches(identity_corr(5, 5), ForegroundMask::full(5, 5), 0, 2, 1), ConfigError);
}

TEST(SampleMatches, DeterministicAndInvariantsHold)
{
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  const auto script = make_motion_script(cfg);
  const auto obj = make_drill_analog(64, 64, 4);
  const auto bg = make_background(BackgroundKind::cluttered, 64, 64, 1);
  const auto a = render_frame(obj, bg, script.frames[10].pose, 1.0);
  const auto b = render_frame(obj, bg, script.frames[11].pose, 1.0);
  const auto gt = ground_truth_map(script.frames[10].pose, script.frames[11].pose, a.mask, b.mask);
  const auto flow = flow_from_ground_truth(gt);
  const auto corr = flow_to_correspondence(flow, a.mask, b.mask);
  const auto m1 = sample_matches(corr, b.mask, 500, 20, 42);
  const auto m2 = sample_matches(corr, b.mask, 500, 20, 42);
  EXPECT_EQ(m1, m2);
  EXPECT_NE(m1, sample_matches(corr, b.mask, 500, 20, 43));
  std::set<std::pair<int, int>> sources;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    const auto & s = m1.source[i];
    const auto & t = m1.target[i];
    EXPECT_TRUE(a.mask.contains(s));
    EXPECT_TRUE(b.mask.contains(t));
    const int sx = round_px(s.x), sy = round_px(s.y);
    EXPECT_TRUE(sources.insert({sx, sy}).second);
    EXPECT_EQ(t.x, sx + flow.dx(sy, sx));
    EXPECT_EQ(t.y, sy + flow.dy(sy, sx));
    for (int k = 0; k < m1.n_neg; ++k) {
      const auto & n = m1.negative(i, k);
      EXPECT_TRUE(b.mask.contains(n));
      const int cheb = std::max(std::abs(round_px(n.x) - round_px(t.x)), std::abs(round_px(n.y) - round_px(t.y)));
      EXPECT_GE(cheb, 1);
    }
  }
}

TEST(Flip, FormulaAndInvolution)
{
  MatchSet m;
  m.source = {{10, 20}};
  m.target = {{10, 20}};
  m.negatives = {{0, 0}, {99, 49}};
  m.n_neg = 2;
  const ImageFrame img(3, 50, 100);
  const ForegroundMask mask = ForegroundMask::full(50, 100);
  const auto h = augment_flip(img, mask, m, FlipAxis::horizontal);
  EXPECT_EQ(h.matches.target[0], (PixelCoord{89, 20}));
  EXPECT_EQ(h.matches.source[0], (PixelCoord{10, 20}));
  EXPECT_EQ(h.matches.negative(0, 0), (PixelCoord{99, 0}));
  const auto v = augment_flip(img, mask, m, FlipAxis::vertical);
  EXPECT_EQ(v.matches.target[0], (PixelCoord{10, 29}));
  const auto hh = augment_flip(h.frame, h.mask, h.matches, FlipAxis::horizontal);
  EXPECT_EQ(hh.matches, m);
  const auto vv = augment_flip(v.frame, v.mask, v.matches, FlipAxis::vertical);
  EXPECT_EQ(vv.matches, m);
}

TEST(Flip, FlippedLookupReadsSamePatch)
{
  const auto img = smooth_texture(40, 52, 8);
  ForegroundMask mask = ForegroundMask::full(40, 52);
  MatchSet m;
  m.n_neg = 1;
  Rng rng(5);
  std::uniform_int_distribution<int> ux(3, 48), uy(3, 36);
  for (int i = 0; i < 50; ++i) {
    const PixelCoord p{static_cast<double>(ux(rng)), static_cast<double>(uy(rng))};
    m.source.push_back(p);
    m.target.push_back(p);
    m.negatives.push_back(p);
  }
  for (const auto axis : {FlipAxis::horizontal, FlipAxis::vertical}) {
    const auto f = augment_flip(img, mask, m, axis);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const int x0 = round_px(m.target[i].x), y0 = round_px(m.target[i].y);
      const int x1 = round_px(f.matches.target[i].x), y1 = round_px(f.matches.target[i].y);
      for (int d = -2; d <= 2; ++d) {
        for (int c = 0; c < 3; ++c) {
          // A 5-pixel run through the sample, mirrored along the flip axis.
          if (axis == FlipAxis::horizontal) {
            EXPECT_EQ(f.frame.at(c, x1 - d, y1 + d), img.at(c, x0 + d, y0 + d));
          } else {
            EXPECT_EQ(f.frame.at(c, x1 + d, y1 - d), img.at(c, x0 + d, y0 + d));
          }
        }
      }
      EXPECT_TRUE(f.mask.contains(f.matches.target[i]));
    }
  }
}
