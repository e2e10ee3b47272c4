#include "flowdesc/descnet.hpp"

#include "flowdesc/binary_io.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/layers.hpp"
#include "flowdesc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace flowdesc
{

// ---------------------------------------------------------------------------- config

int NetworkConfig::total_stride() const
{
  return stem_stride << static_cast<int>(encoder_channels.size());
}

void NetworkConfig::validate() const
{
  if (descriptor_dim < 2) throw ConfigError("network.descriptor_dim must be >= 2");
  if (encoder_channels.empty() || encoder_channels.size() != encoder_blocks.size()) {
    throw ConfigError("inconsistent stage geometry: encoder_channels and encoder_blocks differ in length");
  }
  for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
    if (encoder_channels[i] < 1 || encoder_blocks[i] < 1) {
      throw ConfigError("inconsistent stage geometry: stage widths and depths must be positive");
    }
  }
  if (stem_stride != 1 && stem_stride != 2 && stem_stride != 4) {
    throw ConfigError("network.stem_stride must be 1, 2 or 4");
  }
  if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ConfigError("network.stem_kernel must be odd");
  const int ups = static_cast<int>(std::log2(total_stride()) + 0.5);
  if (decoder_stages < ups) {
    throw ConfigError(
      "inconsistent stage geometry: " + std::to_string(decoder_stages) +
      " decoder stages cannot undo a total stride of " + std::to_string(total_stride()));
  }
  if (input_height <= 0 || input_width <= 0 || input_height % total_stride() != 0 ||
      input_width % total_stride() != 0) {
    throw ConfigError("network input size must be divisible by the total stride");
  }
}

nlohmann::json to_json(const NetworkConfig & c)
{
  return {
    {"descriptor_dim", c.descriptor_dim},
    {"encoder_channels", c.encoder_channels},
    {"encoder_blocks", c.encoder_blocks},
    {"decoder_stages", c.decoder_stages},
    {"use_skip_connections", c.use_skip_connections},
    {"input_height", c.input_height},
    {"input_width", c.input_width},
    {"stem_kernel", c.stem_kernel},
    {"stem_stride", c.stem_stride},
    {"seed", c.seed},
  };
}

NetworkConfig network_config_from_json(const nlohmann::json & j)
{
  NetworkConfig c;
  for (const auto & [key, v] : j.items()) {
    if (key == "descriptor_dim") c.descriptor_dim = v.get<int>();
    else if (key == "encoder_channels") c.encoder_channels = v.get<std::vector<int>>();
    else if (key == "encoder_blocks") c.encoder_blocks = v.get<std::vector<int>>();
    else if (key == "decoder_stages") c.decoder_stages = v.get<int>();
    else if (key == "use_skip_connections") c.use_skip_connections = v.get<bool>();
    else if (key == "input_height") c.input_height = v.get<int>();
    else if (key == "input_width") c.input_width = v.get<int>();
    else if (key == "stem_kernel") c.stem_kernel = v.get<int>();
    else if (key == "stem_stride") c.stem_stride = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ConfigError("unknown key network." + key);
  }
  c.validate();
  return c;
}

NetworkConfig full_scale_network()
{
  NetworkConfig c;
  c.encoder_channels = {64, 128, 256, 512};
  c.encoder_blocks = {3, 4, 6, 3};
  c.stem_kernel = 7;
  c.stem_stride = 2;
  c.decoder_stages = 6;
  c.input_height = 480;
  c.input_width = 640;
  return c;
}

// ---------------------------------------------------------------------------- architecture

namespace
{

class GraphBuilder
{
public:
  explicit GraphBuilder(Architecture & arch) : arch_(arch) {}

  int input(int channels)
  {
    Node n;
    n.op = NodeOp::input;
    n.channels = channels;
    return push(n);
  }

  int conv(const std::string & name, int x, int cout, int kernel, int stride, double gain)
  {
    const int cin = arch_.nodes[static_cast<std::size_t>(x)].channels;
    Node n;
    n.op = NodeOp::conv;
    n.a = x;
    n.kernel = kernel;
    n.stride = stride;
    n.pad = kernel / 2;
    n.channels = cout;
    const double fan_in = static_cast<double>(cin) * kernel * kernel;
    n.weight = blob(name + ".w", {cout, cin, kernel, kernel}, gain / std::sqrt(fan_in));
    n.bias = blob(name + ".b", {cout}, 0.0);
    return push(n);
  }

  int deconv(const std::string & name, int x, int cout)
  {
    const int cin = arch_.nodes[static_cast<std::size_t>(x)].channels;
    Node n;
    n.op = NodeOp::deconv2;
    n.a = x;
    n.channels = cout;
    n.weight = blob(name + ".w", {cout, 2, 2, cin}, std::sqrt(2.0 / cin));
    n.bias = blob(name + ".b", {cout}, 0.0);
    return push(n);
  }

  int unary(NodeOp op, int x)
  {
    Node n;
    n.op = op;
    n.a = x;
    n.channels = arch_.nodes[static_cast<std::size_t>(x)].channels;
    return push(n);
  }

  int binary(NodeOp op, int x, int y)
  {
    Node n;
    n.op = op;
    n.a = x;
    n.b = y;
    const int cx = arch_.nodes[static_cast<std::size_t>(x)].channels;
    const int cy = arch_.nodes[static_cast<std::size_t>(y)].channels;
    n.channels = op == NodeOp::concat ? cx + cy : cx;
    return push(n);
  }

  int channels(int x) const { return arch_.nodes[static_cast<std::size_t>(x)].channels; }

private:
  int push(const Node & n)
  {
    arch_.nodes.push_back(n);
    return static_cast<int>(arch_.nodes.size()) - 1;
  }
  int blob(const std::string & name, std::vector<int> shape, double init_std)
  {
    arch_.blob_names.push_back(name);
    arch_.blob_shapes.push_back(std::move(shape));
    arch_.blob_init_std.push_back(init_std);
    return static_cast<int>(arch_.blob_names.size()) - 1;
  }

  Architecture & arch_;
};

}  // namespace

Architecture build_architecture(const NetworkConfig & cfg)
{
  cfg.validate();
  Architecture arch;
  GraphBuilder g(arch);
  const double relu_gain = std::sqrt(2.0);
  int total_blocks = std::accumulate(cfg.encoder_blocks.begin(), cfg.encoder_blocks.end(), 0);
  const double residual_gain = relu_gain / std::sqrt(2.0 * total_blocks);

  std::map<int, int> features;  // scale -> node
  int x = g.input(3);
  x = g.unary(NodeOp::relu, g.conv("enc.stem", x, cfg.encoder_channels[0], cfg.stem_kernel, cfg.stem_stride, relu_gain));
  int scale = cfg.stem_stride;
  features[scale] = x;

  for (std::size_t s = 0; s < cfg.encoder_channels.size(); ++s) {
    const int width = cfg.encoder_channels[s];
    for (int b = 0; b < cfg.encoder_blocks[s]; ++b) {
      const std::string name = "enc.s" + std::to_string(s) + ".b" + std::to_string(b);
      const int stride = b == 0 ? 2 : 1;
      const int h1 = g.unary(NodeOp::relu, g.conv(name + ".conv1", x, width, 3, stride, relu_gain));
      const int h2 = g.conv(name + ".conv2", h1, width, 3, 1, residual_gain);
      int shortcut = x;
      if (stride != 1 || g.channels(x) != width) {
        shortcut = g.conv(name + ".proj", x, width, 1, stride, 1.0);
      }
      x = g.unary(NodeOp::relu, g.binary(NodeOp::add, h2, shortcut));
    }
    scale *= 2;
    features[scale] = x;
  }

  for (int d = 0; d < cfg.decoder_stages; ++d) {
    const std::string name = "dec.u" + std::to_string(d);
    if (scale > 1) {
      scale /= 2;
      const auto skip = features.find(scale);
      const int width = skip != features.end() ? g.channels(skip->second) : cfg.encoder_channels[0];
      int up = g.unary(NodeOp::relu, g.deconv(name + ".up", x, width));
      if (cfg.use_skip_connections && skip != features.end()) {
        up = g.binary(NodeOp::concat, up, skip->second);
      }
      x = g.unary(NodeOp::relu, g.conv(name + ".fuse", up, width, 3, 1, relu_gain));
    } else {
      x = g.unary(NodeOp::relu, g.conv(name + ".refine", x, g.channels(x), 3, 1, relu_gain));
    }
  }
  x = g.conv("head.proj", x, cfg.descriptor_dim, 1, 1, 1.0);
  g.unary(NodeOp::l2norm, x);
  return arch;
}

template <typename Scalar>
std::size_t Parameters<Scalar>::count() const
{
  std::size_t n = 0;
  for (const auto & b : blobs) n += static_cast<std::size_t>(b.value.size());
  return n;
}

template struct Parameters<float>;
template struct Parameters<double>;

Parameters<float> init_network(const NetworkConfig & cfg)
{
  auto arch = std::make_shared<const Architecture>(build_architecture(cfg));
  Parameters<float> params{cfg, arch, {}};
  Rng rng(derive_seed(cfg.seed, {0x696e6974}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < arch->blob_names.size(); ++i) {
    const auto & shape = arch->blob_shapes[i];
    const Eigen::Index n = std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
    Vector<float> v(n);
    const double sd = arch->blob_init_std[i];
    for (Eigen::Index k = 0; k < n; ++k) v[k] = sd > 0.0 ? static_cast<float>(sd * normal(rng)) : 0.0f;
    params.blobs.push_back({arch->blob_names[i], shape, std::move(v)});
  }
  return params;
}

// ---------------------------------------------------------------------------- forward / backward

namespace
{

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> weight_matrix(const Blob<Scalar> & b, int rows)
{
  return {b.value.data(), rows, b.value.size() / rows};
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> grad_matrix(Vector<Scalar> & g, int rows)
{
  return {g.data(), rows, g.size() / rows};
}

int weight_rows(const Node & n) { return n.op == NodeOp::deconv2 ? 4 * n.channels : n.channels; }

}  // namespace

template <typename Scalar>
DescriptorMap<Scalar> forward(
  const Parameters<Scalar> & params, const Planar<Scalar> & frame, ForwardTrace<Scalar> * trace)
{
  const auto & arch = *params.arch;
  const int stride = params.config.total_stride();
  if (frame.channels() != 3) throw ShapeError("forward expects an RGB frame");
  if (frame.height % stride != 0 || frame.width % stride != 0) {
    throw ShapeError(
      "frame size " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
      " is not divisible by the network stride " + std::to_string(stride));
  }

  // Reference counts let untraced passes drop activations as soon as they are consumed.
  std::vector<int> uses(arch.nodes.size(), 0);
  for (const auto & n : arch.nodes) {
    if (n.a >= 0) ++uses[static_cast<std::size_t>(n.a)];
    if (n.b >= 0) ++uses[static_cast<std::size_t>(n.b)];
  }
  std::vector<Planar<Scalar>> values(arch.nodes.size());
  auto release = [&](int i) {
    if (!trace && --uses[static_cast<std::size_t>(i)] == 0) values[static_cast<std::size_t>(i)] = {};
  };

  for (std::size_t i = 0; i < arch.nodes.size(); ++i) {
    const Node & n = arch.nodes[i];
    auto & out = values[i];
    switch (n.op) {
      case NodeOp::input:
        out = frame;
        out.data.array() -= Scalar(0.5);
        break;
      case NodeOp::conv: {
        const auto & w = params.blobs[static_cast<std::size_t>(n.weight)];
        const auto & b = params.blobs[static_cast<std::size_t>(n.bias)];
        out = layers::conv2d<Scalar>(
          values[static_cast<std::size_t>(n.a)], weight_matrix(w, n.channels), b.value,
          {n.kernel, n.stride, n.pad});
        release(n.a);
        break;
      }
      case NodeOp::deconv2: {
        const auto & w = params.blobs[static_cast<std::size_t>(n.weight)];
        const auto & b = params.blobs[static_cast<std::size_t>(n.bias)];
        out = layers::deconv2x2<Scalar>(values[static_cast<std::size_t>(n.a)], weight_matrix(w, 4 * n.channels), b.value);
        release(n.a);
        break;
      }
      case NodeOp::relu:
        out = values[static_cast<std::size_t>(n.a)];
        layers::relu_inplace(out);
        release(n.a);
        break;
      case NodeOp::add: {
        const auto & x = values[static_cast<std::size_t>(n.a)];
        const auto & y = values[static_cast<std::size_t>(n.b)];
        out = x;
        out.data += y.data;
        release(n.a);
        release(n.b);
        break;
      }
      case NodeOp::concat: {
        const auto & x = values[static_cast<std::size_t>(n.a)];
        const auto & y = values[static_cast<std::size_t>(n.b)];
        out = Planar<Scalar>(x.channels() + y.channels(), x.height, x.width);
        out.data.topRows(x.channels()) = x.data;
        out.data.bottomRows(y.channels()) = y.data;
        release(n.a);
        release(n.b);
        break;
      }
      case NodeOp::l2norm:
        out = layers::l2_normalize(values[static_cast<std::size_t>(n.a)]);
        release(n.a);
        break;
    }
  }
  DescriptorMap<Scalar> result = values.back();
  if (trace) trace->values = std::move(values);
  return result;
}

template <typename Scalar>
void backward(
  const Parameters<Scalar> & params, const ForwardTrace<Scalar> & trace,
  const Planar<Scalar> & grad_output, Gradients<Scalar> & grads)
{
  const auto & arch = *params.arch;
  const auto & vals = trace.values;
  if (vals.size() != arch.nodes.size()) throw ShapeError("backward: trace does not match network");
  std::vector<Planar<Scalar>> grad(arch.nodes.size());
  grad.back() = grad_output;

  auto accumulate = [&](int idx, Planar<Scalar> && g) {
    auto & slot = grad[static_cast<std::size_t>(idx)];
    if (slot.data.size() == 0) {
      slot = std::move(g);
    } else {
      slot.data += g.data;
    }
  };

  for (std::size_t ii = arch.nodes.size(); ii-- > 0;) {
    const Node & n = arch.nodes[ii];
    Planar<Scalar> g = std::move(grad[ii]);
    grad[ii] = {};
    if (g.data.size() == 0 || n.op == NodeOp::input) continue;
    switch (n.op) {
      case NodeOp::conv: {
        const auto & w = params.blobs[static_cast<std::size_t>(n.weight)];
        auto & gw = grads.blobs[static_cast<std::size_t>(n.weight)];
        auto & gb = grads.blobs[static_cast<std::size_t>(n.bias)];
        auto dx = layers::conv2d_backward<Scalar>(
          vals[static_cast<std::size_t>(n.a)], weight_matrix(w, n.channels), g,
          {n.kernel, n.stride, n.pad}, grad_matrix(gw, n.channels), gb);
        if (arch.nodes[static_cast<std::size_t>(n.a)].op != NodeOp::input) accumulate(n.a, std::move(dx));
        break;
      }
      case NodeOp::deconv2: {
        const auto & w = params.blobs[static_cast<std::size_t>(n.weight)];
        auto & gw = grads.blobs[static_cast<std::size_t>(n.weight)];
        auto & gb = grads.blobs[static_cast<std::size_t>(n.bias)];
        accumulate(n.a, layers::deconv2x2_backward<Scalar>(
          vals[static_cast<std::size_t>(n.a)], weight_matrix(w, weight_rows(n)), g,
          grad_matrix(gw, weight_rows(n)), gb));
        break;
      }
      case NodeOp::relu:
        accumulate(n.a, layers::relu_backward(vals[ii], g));
        break;
      case NodeOp::add: {
        Planar<Scalar> copy = g;
        accumulate(n.a, std::move(copy));
        accumulate(n.b, std::move(g));
        break;
      }
      case NodeOp::concat: {
        const int ca = vals[static_cast<std::size_t>(n.a)].channels();
        const int cb = vals[static_cast<std::size_t>(n.b)].channels();
        Planar<Scalar> ga(ca, g.height, g.width);
        Planar<Scalar> gb(cb, g.height, g.width);
        ga.data = g.data.topRows(ca);
        gb.data = g.data.bottomRows(cb);
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
      case NodeOp::l2norm:
        accumulate(n.a, layers::l2_normalize_backward(vals[static_cast<std::size_t>(n.a)], g));
        break;
      case NodeOp::input:
        break;
    }
  }
}

template DescriptorMap<float> forward(const Parameters<float> &, const Planar<float> &, ForwardTrace<float> *);
template DescriptorMap<double> forward(const Parameters<double> &, const Planar<double> &, ForwardTrace<double> *);
template void backward(const Parameters<float> &, const ForwardTrace<float> &, const Planar<float> &, Gradients<float> &);
template void backward(const Parameters<double> &, const ForwardTrace<double> &, const Planar<double> &, Gradients<double> &);

// ---------------------------------------------------------------------------- distance and loss

namespace
{

template <typename Scalar>
Eigen::Index lookup_index(const DescriptorMap<Scalar> & f, const PixelCoord & p)
{
  const int x = round_px(p.x);
  const int y = round_px(p.y);
  if (!f.contains(x, y)) {
    throw ShapeError(
      "descriptor lookup out of bounds at (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
  }
  return f.index(x, y);
}

/// Up to four (pixel, weight) taps; nearest mode uses a single tap.
struct Taps
{
  std::array<Eigen::Index, 4> index{};
  std::array<double, 4> weight{};
  int count = 0;
};

template <typename Scalar>
Taps make_taps(const DescriptorMap<Scalar> & f, const PixelCoord & p, bool bilinear)
{
  Taps t;
  if (!bilinear) {
    t.index[0] = lookup_index(f, p);
    t.weight[0] = 1.0;
    t.count = 1;
    return t;
  }
  if (!(p.x >= -0.5 && p.y >= -0.5 && p.x < f.width - 0.5 && p.y < f.height - 0.5)) {
    lookup_index(f, p);  // throws
  }
  const double cx = std::clamp(p.x, 0.0, static_cast<double>(f.width - 1));
  const double cy = std::clamp(p.y, 0.0, static_cast<double>(f.height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(cx)), f.width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(cy)), f.height - 1);
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const double fx = cx - x0;
  const double fy = cy - y0;
  const std::array<std::pair<Eigen::Index, double>, 4> taps{{
    {f.index(x0, y0), (1 - fx) * (1 - fy)},
    {f.index(x1, y0), fx * (1 - fy)},
    {f.index(x0, y1), (1 - fx) * fy},
    {f.index(x1, y1), fx * fy},
  }};
  for (const auto & [idx, w] : taps) {
    if (w == 0.0) continue;
    t.index[static_cast<std::size_t>(t.count)] = idx;
    t.weight[static_cast<std::size_t>(t.count)] = w;
    ++t.count;
  }
  return t;
}

template <typename Scalar>
Vector<Scalar> gather(const DescriptorMap<Scalar> & f, const Taps & t)
{
  Vector<Scalar> v = Vector<Scalar>::Zero(f.channels());
  for (int k = 0; k < t.count; ++k) v += Scalar(t.weight[static_cast<std::size_t>(k)]) * f.data.col(t.index[static_cast<std::size_t>(k)]);
  return v;
}

template <typename Scalar>
void scatter(Planar<Scalar> * g, const Taps & t, const Vector<Scalar> & v)
{
  if (!g) return;
  for (int k = 0; k < t.count; ++k) g->data.col(t.index[static_cast<std::size_t>(k)]) += Scalar(t.weight[static_cast<std::size_t>(k)]) * v;
}

}  // namespace

template <typename Scalar>
double descriptor_distance(
  const DescriptorMap<Scalar> & fa, const PixelCoord & ua, const DescriptorMap<Scalar> & fb,
  const PixelCoord & ub)
{
  return static_cast<double>((fa.data.col(lookup_index(fa, ua)) - fb.data.col(lookup_index(fb, ub))).norm());
}

template double descriptor_distance(const DescriptorMap<float> &, const PixelCoord &, const DescriptorMap<float> &, const PixelCoord &);
template double descriptor_distance(const DescriptorMap<double> &, const PixelCoord &, const DescriptorMap<double> &, const PixelCoord &);

template <typename Scalar>
LossTerms contrastive_loss(
  const DescriptorMap<Scalar> & fa, const DescriptorMap<Scalar> & fb, const MatchSet & matches,
  const LossConfig & cfg, Planar<Scalar> * grad_a, Planar<Scalar> * grad_b)
{
  if (matches.size() == 0) throw SamplingError("contrastive_loss: empty match set");
  if (!(cfg.margin > 0.0)) throw ConfigError("loss.margin must be positive");
  if (fa.channels() != fb.channels()) throw ShapeError("descriptor dimensions differ");

  const double n_pos = static_cast<double>(matches.size());
  const double n_negpairs = n_pos * matches.n_neg;
  double pos_scale = 1.0 / n_pos;
  double neg_scale = matches.n_neg > 0 ? 1.0 / n_negpairs : 0.0;
  if (cfg.averaging == LossAveraging::pooled) {
    pos_scale = neg_scale = 1.0 / (n_pos + n_negpairs);
  }

  LossTerms terms;
  double pos_sum = 0.0;
  double neg_sum = 0.0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Taps ta = make_taps(fa, matches.source[i], cfg.bilinear_lookup);
    const Taps tb = make_taps(fb, matches.target[i], cfg.bilinear_lookup);
    const Vector<Scalar> da = gather(fa, ta);
    const Vector<Scalar> diff = da - gather(fb, tb);
    pos_sum += static_cast<double>(diff.squaredNorm());
    if (grad_a || grad_b) {
      const Vector<Scalar> g = Scalar(2.0 * pos_scale) * diff;
      scatter(grad_a, ta, g);
      scatter(grad_b, tb, Vector<Scalar>(-g));
    }
    for (int k = 0; k < matches.n_neg; ++k) {
      const Taps tn = make_taps(fb, matches.negative(i, k), cfg.bilinear_lookup);
      const Vector<Scalar> nd = da - gather(fb, tn);
      const double dist = static_cast<double>(nd.norm());
      const double hinge = cfg.margin - dist;
      if (hinge <= 0.0) continue;
      ++terms.active_negatives;
      neg_sum += hinge * hinge;
      if ((grad_a || grad_b) && dist > 0.0) {
        // d/dfa of (M - ‖fa - fb‖)² = -2 (M - D) (fa - fb) / D
        const Vector<Scalar> g = Scalar(-2.0 * neg_scale * hinge / dist) * nd;
        scatter(grad_a, ta, g);
        scatter(grad_b, tn, Vector<Scalar>(-g));
      }
    }
  }
  terms.match = pos_sum * pos_scale;
  terms.nonmatch = neg_sum * neg_scale;
  terms.total = terms.match + terms.nonmatch;
  return terms;
}

template LossTerms contrastive_loss(const DescriptorMap<float> &, const DescriptorMap<float> &, const MatchSet &, const LossConfig &, Planar<float> *, Planar<float> *);
template LossTerms contrastive_loss(const DescriptorMap<double> &, const DescriptorMap<double> &, const MatchSet &, const LossConfig &, Planar<double> *, Planar<double> *);

nlohmann::json to_json(const LossConfig & c)
{
  return {
    {"margin", c.margin},
    {"averaging", c.averaging == LossAveraging::separate ? "separate" : "pooled"},
    {"bilinear_lookup", c.bilinear_lookup},
  };
}

LossConfig loss_config_from_json(const nlohmann::json & j)
{
  LossConfig c;
  for (const auto & [key, v] : j.items()) {
    if (key == "margin") c.margin = v.get<double>();
    else if (key == "averaging") {
      const auto s = v.get<std::string>();
      if (s == "separate") c.averaging = LossAveraging::separate;
      else if (s == "pooled") c.averaging = LossAveraging::pooled;
      else throw ConfigError("loss.averaging must be separate | pooled");
    }
    else if (key == "bilinear_lookup") c.bilinear_lookup = v.get<bool>();
    else throw ConfigError("unknown key loss." + key);
  }
  if (!(c.margin > 0.0)) throw ConfigError("loss.margin must be positive");
  return c;
}

// ---------------------------------------------------------------------------- checkpoints

const Blob<float> * Checkpoint::find(const std::string & name) const
{
  for (const auto & b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint & ckpt)
{
  detail::ByteWriter out;
  out.magic("DNC1");
  out.u32(kCheckpointVersion);
  out.str(ckpt.meta.dump());
  out.u64(ckpt.step);
  out.u64(ckpt.epoch);
  out.str(ckpt.rng_state);
  out.u32(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto & b : ckpt.blobs) {
    out.str(b.name);
    out.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) out.u32(static_cast<std::uint32_t>(d));
    out.u64(static_cast<std::uint64_t>(b.value.size()));
    for (Eigen::Index i = 0; i < b.value.size(); ++i) out.f32(b.value[i]);
  }
  return out.bytes();
}

void write_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt)
{
  detail::ByteWriter out;
  const auto bytes = serialize_checkpoint(ckpt);
  for (auto b : bytes) out.u8(b);
  out.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path & path)
{
  auto in = detail::ByteReader::load(path);
  in.expect_magic("DNC1");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(in.str());
  ckpt.step = in.u64();
  ckpt.epoch = in.u64();
  ckpt.rng_state = in.str();
  const auto n = in.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Blob<float> b;
    b.name = in.str();
    const auto ndim = in.u32();
    for (std::uint32_t d = 0; d < ndim; ++d) b.shape.push_back(static_cast<int>(in.u32()));
    const auto count = in.u64();
    b.value.resize(static_cast<Eigen::Index>(count));
    for (std::uint64_t k = 0; k < count; ++k) b.value[static_cast<Eigen::Index>(k)] = in.f32();
    ckpt.blobs.push_back(std::move(b));
  }
  return ckpt;
}

Checkpoint checkpoint_from_parameters(const Parameters<float> & params)
{
  Checkpoint ckpt;
  ckpt.meta["network"] = to_json(params.config);
  ckpt.blobs = params.blobs;
  return ckpt;
}

Parameters<float> parameters_from_checkpoint(const Checkpoint & ckpt)
{
  if (!ckpt.meta.contains("network")) throw IoError("checkpoint has no network config");
  auto params = init_network(network_config_from_json(ckpt.meta.at("network")));
  for (auto & b : params.blobs) {
    const auto * src = ckpt.find(b.name);
    if (!src || src->shape != b.shape) {
      throw IoError("checkpoint is missing or misshapes blob " + b.name);
    }
    b.value = src->value;
  }
  return params;
}

int import_encoder_weights(Parameters<float> & params, const Checkpoint & external)
{
  int copied = 0;
  for (auto & b : params.blobs) {
    if (b.name.rfind("enc.", 0) != 0) continue;
    const auto * src = external.find(b.name);
    if (src && src->shape == b.shape) {
      b.value = src->value;
      ++copied;
    }
  }
  return copied;
}

}  // namespace flowdesc
