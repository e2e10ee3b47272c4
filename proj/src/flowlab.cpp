#include "flowdesc/flowlab.hpp"

#include "flowdesc/binary_io.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace flowdesc
{

FlowBackend parse_flow_backend(const std::string & name)
{
  if (name == "classical") return FlowBackend::classical;
  if (name == "file") return FlowBackend::file;
  if (name == "ground-truth" || name == "ground_truth") return FlowBackend::ground_truth;
  throw ConfigError("unknown flow backend '" + name + "' (expected classical | file | ground-truth)");
}

std::string to_string(FlowBackend backend)
{
  switch (backend) {
    case FlowBackend::classical: return "classical";
    case FlowBackend::file: return "file";
    case FlowBackend::ground_truth: return "ground-truth";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------- classical flow

namespace
{

using PlaneF = Plane<float>;

constexpr float kFlowRegularization = 1e-6f;
constexpr float kMaxIncrementPx = 2.0f;

inline float sample_clamped(const PlaneF & p, float x, float y)
{
  const int h = static_cast<int>(p.rows());
  const int w = static_cast<int>(p.cols());
  x = std::clamp(x, 0.0f, static_cast<float>(w - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(h - 1));
  const int x0 = std::min(static_cast<int>(x), w - 1);
  const int y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const float fx = x - x0;
  const float fy = y - y0;
  return (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) +
         fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
}

PlaneF blur_binomial(const PlaneF & in)
{
  constexpr std::array<float, 5> k{1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  PlaneF tmp(h, w);
  PlaneF out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int i = -2; i <= 2; ++i) s += k[static_cast<std::size_t>(i + 2)] * in(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int i = -2; i <= 2; ++i) s += k[static_cast<std::size_t>(i + 2)] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = s;
    }
  }
  return out;
}

PlaneF downsample(const PlaneF & in)
{
  const PlaneF b = blur_binomial(in);
  const int h = (static_cast<int>(in.rows()) + 1) / 2;
  const int w = (static_cast<int>(in.cols()) + 1) / 2;
  PlaneF out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(y, x) = b(2 * y, 2 * x);
  }
  return out;
}

PlaneF box_mean(const PlaneF & in, int radius)
{
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Plane<double> integral = Plane<double>::Zero(h + 1, w + 1);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += in(y, x);
      integral(y + 1, x + 1) = integral(y, x + 1) + row;
    }
  }
  PlaneF out(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h, y + radius + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w, x + radius + 1);
      const double s = integral(y1, x1) - integral(y0, x1) - integral(y1, x0) + integral(y0, x0);
      out(y, x) = static_cast<float>(s / ((y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

PlaneF median3(const PlaneF & in)
{
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  PlaneF out(h, w);
  std::array<float, 9> win{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          win[static_cast<std::size_t>(n++)] = in(std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1));
        }
      }
      std::nth_element(win.begin(), win.begin() + 4, win.end());
      out(y, x) = win[4];
    }
  }
  return out;
}

struct Gradients
{
  PlaneF gx;
  PlaneF gy;
};

Gradients central_gradients(const PlaneF & p)
{
  const int h = static_cast<int>(p.rows());
  const int w = static_cast<int>(p.cols());
  Gradients g{PlaneF(h, w), PlaneF(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      g.gx(y, x) = 0.5f * (p(y, std::min(x + 1, w - 1)) - p(y, std::max(x - 1, 0)));
      g.gy(y, x) = 0.5f * (p(std::min(y + 1, h - 1), x) - p(std::max(y - 1, 0), x));
    }
  }
  return g;
}

using Pyramid = std::vector<std::vector<PlaneF>>;  // level -> channel

Pyramid build_pyramid(const ImageFrame & image, int levels)
{
  Pyramid pyr(1);
  for (int c = 0; c < image.channels(); ++c) pyr[0].push_back(image.channel(c));
  for (int l = 1; l < levels; ++l) {
    std::vector<PlaneF> next;
    for (const auto & ch : pyr.back()) next.push_back(downsample(ch));
    pyr.push_back(std::move(next));
  }
  return pyr;
}

void refine_level(
  const std::vector<PlaneF> & a, const std::vector<PlaneF> & b, PlaneF & u, PlaneF & v,
  const ClassicalFlowParams & params)
{
  const int h = static_cast<int>(a[0].rows());
  const int w = static_cast<int>(a[0].cols());
  const int radius = params.window / 2;
  std::vector<Gradients> grad_a;
  std::vector<Gradients> grad_b;
  for (std::size_t c = 0; c < a.size(); ++c) {
    grad_a.push_back(central_gradients(a[c]));
    grad_b.push_back(central_gradients(b[c]));
  }
  PlaneF pxx(h, w), pxy(h, w), pyy(h, w), pxt(h, w), pyt(h, w);
  for (int it = 0; it < params.iterations; ++it) {
    pxx.setZero();
    pxy.setZero();
    pyy.setZero();
    pxt.setZero();
    pyt.setZero();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float xs = x + u(y, x);
        const float ys = y + v(y, x);
        if (xs < 0.0f || ys < 0.0f || xs > w - 1 || ys > h - 1) continue;
        for (std::size_t c = 0; c < a.size(); ++c) {
          const float gx = 0.5f * (grad_a[c].gx(y, x) + sample_clamped(grad_b[c].gx, xs, ys));
          const float gy = 0.5f * (grad_a[c].gy(y, x) + sample_clamped(grad_b[c].gy, xs, ys));
          const float it_ = sample_clamped(b[c], xs, ys) - a[c](y, x);
          pxx(y, x) += gx * gx;
          pxy(y, x) += gx * gy;
          pyy(y, x) += gy * gy;
          pxt(y, x) += gx * it_;
          pyt(y, x) += gy * it_;
        }
      }
    }
    const PlaneF sxx = box_mean(pxx, radius);
    const PlaneF sxy = box_mean(pxy, radius);
    const PlaneF syy = box_mean(pyy, radius);
    const PlaneF sxt = box_mean(pxt, radius);
    const PlaneF syt = box_mean(pyt, radius);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float a11 = sxx(y, x) + kFlowRegularization;
        const float a22 = syy(y, x) + kFlowRegularization;
        const float a12 = sxy(y, x);
        const float det = a11 * a22 - a12 * a12;
        if (!(det > 0.0f)) continue;
        const float du = -(a22 * sxt(y, x) - a12 * syt(y, x)) / det;
        const float dv = -(a11 * syt(y, x) - a12 * sxt(y, x)) / det;
        u(y, x) += std::clamp(du, -kMaxIncrementPx, kMaxIncrementPx);
        v(y, x) += std::clamp(dv, -kMaxIncrementPx, kMaxIncrementPx);
      }
    }
  }
  u = median3(u);
  v = median3(v);
}

PlaneF upsample_flow(const PlaneF & coarse, int h, int w)
{
  PlaneF out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(y, x) = 2.0f * sample_clamped(coarse, 0.5f * x, 0.5f * y);
    }
  }
  return out;
}

}  // namespace

FlowField estimate_flow_classical(
  const ImageFrame & a, const ImageFrame & b, const ClassicalFlowParams & params)
{
  if (a.height != b.height || a.width != b.width || a.channels() != b.channels()) {
    throw ShapeError("estimate_flow: frame sizes differ");
  }
  if (params.pyramid_levels < 1 || params.window < 1 || params.iterations < 1) {
    throw ConfigError("classical flow parameters must be positive");
  }
  int levels = 1;
  while (levels < params.pyramid_levels && std::min(a.height, a.width) >> levels >= 8) ++levels;

  const auto pa = build_pyramid(a, levels);
  const auto pb = build_pyramid(b, levels);
  PlaneF u;
  PlaneF v;
  for (int l = levels - 1; l >= 0; --l) {
    const auto & la = pa[static_cast<std::size_t>(l)];
    const int h = static_cast<int>(la[0].rows());
    const int w = static_cast<int>(la[0].cols());
    if (l == levels - 1) {
      u = PlaneF::Zero(h, w);
      v = PlaneF::Zero(h, w);
    } else {
      u = upsample_flow(u, h, w);
      v = upsample_flow(v, h, w);
    }
    refine_level(la, pb[static_cast<std::size_t>(l)], u, v, params);
  }
  FlowField flow(a.height, a.width, FlowBackend::classical);
  flow.dx = u.cast<double>();
  flow.dy = v.cast<double>();
  return flow;
}

FlowField flow_from_ground_truth(const GroundTruthMap & gt)
{
  FlowField flow(gt.height(), gt.width(), FlowBackend::ground_truth);
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      flow.dx(y, x) = static_cast<double>(gt.map_x(y, x)) - x;
      flow.dy(y, x) = static_cast<double>(gt.map_y(y, x)) - y;
    }
  }
  return flow;
}

FlowField estimate_flow(
  const ImageFrame & a, const ImageFrame & b, FlowBackend backend,
  const ClassicalFlowParams & params, const FlowInputs & inputs)
{
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("estimate_flow: frame sizes differ");
  }
  switch (backend) {
    case FlowBackend::classical:
      return estimate_flow_classical(a, b, params);
    case FlowBackend::file: {
      if (!inputs.flow_file) throw IoError("file flow backend: no flow file given");
      if (!std::filesystem::exists(*inputs.flow_file)) {
        throw IoError("missing flow file " + inputs.flow_file->string());
      }
      auto flow = read_flow_file(*inputs.flow_file);
      if (flow.height() != a.height || flow.width() != a.width) {
        throw ShapeError("flow file size does not match frames");
      }
      return flow;
    }
    case FlowBackend::ground_truth: {
      if (!inputs.ground_truth) throw IoError("ground-truth flow backend: no ground-truth map");
      if (inputs.ground_truth->height() != a.height || inputs.ground_truth->width() != a.width) {
        throw ShapeError("ground-truth map size does not match frames");
      }
      return flow_from_ground_truth(*inputs.ground_truth);
    }
  }
  throw ConfigError("unknown flow backend");
}

// ---------------------------------------------------------------------------- flow files

namespace
{
constexpr float kMiddleburyTag = 202021.25f;
}

void write_flow_file(const std::filesystem::path & path, const FlowField & flow)
{
  detail::ByteWriter out;
  out.magic("FLO1");
  out.u32(static_cast<std::uint32_t>(flow.height()));
  out.u32(static_cast<std::uint32_t>(flow.width()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      out.f32(static_cast<float>(flow.dx(y, x)));
      out.f32(static_cast<float>(flow.dy(y, x)));
    }
  }
  out.save(path);
}

void write_middlebury_flow(const std::filesystem::path & path, const FlowField & flow)
{
  detail::ByteWriter out;
  out.f32(kMiddleburyTag);
  out.u32(static_cast<std::uint32_t>(flow.width()));
  out.u32(static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      out.f32(static_cast<float>(flow.dx(y, x)));
      out.f32(static_cast<float>(flow.dy(y, x)));
    }
  }
  out.save(path);
}

FlowField read_flow_file(const std::filesystem::path & path)
{
  auto in = detail::ByteReader::load(path);
  auto probe = detail::ByteReader::load(path);
  int h = 0;
  int w = 0;
  if (probe.remaining() >= 4 && probe.f32() == kMiddleburyTag) {
    in.f32();
    w = static_cast<int>(in.u32());
    h = static_cast<int>(in.u32());
  } else {
    in.expect_magic("FLO1");
    h = static_cast<int>(in.u32());
    w = static_cast<int>(in.u32());
  }
  if (h <= 0 || w <= 0 || in.remaining() != static_cast<std::size_t>(h) * w * 8) {
    throw IoError("flow file has inconsistent size: " + path.string());
  }
  FlowField flow(h, w, FlowBackend::file);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      flow.dx(y, x) = in.f32();
      flow.dy(y, x) = in.f32();
      if (!std::isfinite(flow.dx(y, x)) || !std::isfinite(flow.dy(y, x))) {
        // Middlebury marks unknown flow with huge values; keep the field finite.
        flow.dx(y, x) = 0.0;
        flow.dy(y, x) = 0.0;
      }
    }
  }
  return flow;
}

void convert_middlebury_flow(const std::filesystem::path & in, const std::filesystem::path & out)
{
  write_flow_file(out, read_flow_file(in));
}

// ---------------------------------------------------------------------------- correspondences

namespace
{

double sample_bilinear(const Plane<double> & p, double x, double y)
{
  const int h = static_cast<int>(p.rows());
  const int w = static_cast<int>(p.cols());
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = std::clamp(x - x0, 0.0, 1.0);
  const double fy = std::clamp(y - y0, 0.0, 1.0);
  return (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) +
         fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
}

}  // namespace

CorrespondenceMap flow_to_correspondence(
  const FlowField & flow, const ForegroundMask & mask_a, const ForegroundMask & mask_b,
  const FlowField * backward, double fb_tau)
{
  const int h = flow.height();
  const int w = flow.width();
  if (mask_a.height() != h || mask_a.width() != w || mask_b.height() != h || mask_b.width() != w ||
      (backward && (backward->height() != h || backward->width() != w))) {
    throw ShapeError("flow_to_correspondence: dimensions disagree");
  }
  CorrespondenceMap corr;
  corr.x.resize(h, w);
  corr.y.resize(h, w);
  corr.valid = Plane<std::uint8_t>::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ox = x + flow.dx(y, x);
      const double oy = y + flow.dy(y, x);
      corr.x(y, x) = ox;
      corr.y(y, x) = oy;
      if (!mask_a.bits(y, x)) continue;
      if (!(ox >= 0.0 && oy >= 0.0 && ox <= w - 1 && oy <= h - 1)) continue;
      if (!mask_b.contains(round_px(ox), round_px(oy))) continue;
      if (backward) {
        const double rx = flow.dx(y, x) + sample_bilinear(backward->dx, ox, oy);
        const double ry = flow.dy(y, x) + sample_bilinear(backward->dy, ox, oy);
        if (!(std::hypot(rx, ry) < fb_tau)) continue;
      }
      corr.valid(y, x) = 1;
    }
  }
  return corr;
}

MatchSet sample_matches(
  const CorrespondenceMap & corr, const ForegroundMask & mask_b, int n_matches, int n_neg,
  std::uint64_t seed)
{
  if (n_matches < 1 || n_neg < 1) {
    throw ConfigError("sample_matches: n_matches and n_neg must be >= 1");
  }
  const int w = corr.width();
  std::vector<int> valid;
  for (int y = 0; y < corr.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      if (corr.valid(y, x)) valid.push_back(y * w + x);
    }
  }
  if (valid.empty()) {
    throw SamplingError("no valid correspondences in frame pair");
  }
  std::vector<int> pool_b;
  for (int y = 0; y < mask_b.height(); ++y) {
    for (int x = 0; x < mask_b.width(); ++x) {
      if (mask_b.bits(y, x)) pool_b.push_back(y * mask_b.width() + x);
    }
  }
  if (pool_b.size() < 2) {
    throw SamplingError("target mask has fewer than 2 pixels; cannot sample negatives");
  }

  Rng rng(seed);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(n_matches), valid.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, valid.size() - 1);
    std::swap(valid[i], valid[pick(rng)]);
  }

  MatchSet set;
  set.n_neg = n_neg;
  set.seed = seed;
  set.source.reserve(take);
  set.target.reserve(take);
  set.negatives.reserve(take * static_cast<std::size_t>(n_neg));
  std::uniform_int_distribution<std::size_t> pick_b(0, pool_b.size() - 1);
  const int wb = mask_b.width();
  for (std::size_t i = 0; i < take; ++i) {
    const int x = valid[i] % w;
    const int y = valid[i] / w;
    const PixelCoord target{corr.x(y, x), corr.y(y, x)};
    set.source.push_back({static_cast<double>(x), static_cast<double>(y)});
    set.target.push_back(target);
    const int tx = round_px(target.x);
    const int ty = round_px(target.y);
    for (int k = 0; k < n_neg; ++k) {
      int p;
      do {
        p = pool_b[pick_b(rng)];
      } while (p % wb == tx && p / wb == ty);
      set.negatives.push_back({static_cast<double>(p % wb), static_cast<double>(p / wb)});
    }
  }
  return set;
}

ImageFrame flip_image(const ImageFrame & image, FlipAxis axis)
{
  ImageFrame out(image.channels(), image.height, image.width);
  for (int c = 0; c < image.channels(); ++c) {
    if (axis == FlipAxis::horizontal) {
      out.channel(c) = image.channel(c).rowwise().reverse();
    } else {
      out.channel(c) = image.channel(c).colwise().reverse();
    }
  }
  return out;
}

ForegroundMask flip_mask(const ForegroundMask & mask, FlipAxis axis)
{
  ForegroundMask out = mask;
  if (axis == FlipAxis::horizontal) {
    out.bits = mask.bits.rowwise().reverse();
  } else {
    out.bits = mask.bits.colwise().reverse();
  }
  return out;
}

FlipResult augment_flip(
  const ImageFrame & frame_b, const ForegroundMask & mask_b, const MatchSet & matches,
  FlipAxis axis)
{
  FlipResult out{flip_image(frame_b, axis), flip_mask(mask_b, axis), matches};
  const double wm1 = frame_b.width - 1;
  const double hm1 = frame_b.height - 1;
  auto remap = [&](PixelCoord & p) {
    if (axis == FlipAxis::horizontal) {
      p.x = wm1 - p.x;
    } else {
      p.y = hm1 - p.y;
    }
  };
  for (auto & p : out.matches.target) remap(p);
  for (auto & p : out.matches.negatives) remap(p);
  return out;
}

}  // namespace flowdesc
