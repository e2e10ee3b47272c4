#ifndef FLOWDESC_DESCNET_HPP_
#define FLOWDESC_DESCNET_HPP_

#include "flowdesc/flowlab.hpp"
#include "flowdesc/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace flowdesc
{

struct NetworkConfig
{
  int descriptor_dim = 3;
  std::vector<int> encoder_channels{16, 32, 64};
  /// Residual blocks per encoder stage; every stage halves the resolution.
  std::vector<int> encoder_blocks{2, 2, 2};
  /// The first log2(total stride) stages upsample ×2, any further ones refine at full size.
  int decoder_stages = 3;
  bool use_skip_connections = true;
  int input_height = 128;
  int input_width = 128;
  int stem_kernel = 3;
  int stem_stride = 1;
  std::uint64_t seed = 1;

  int total_stride() const;
  /// Throws ConfigError on inconsistent stage geometry.
  void validate() const;
  bool operator==(const NetworkConfig &) const = default;
};

nlohmann::json to_json(const NetworkConfig & cfg);
NetworkConfig network_config_from_json(const nlohmann::json & j);

/// ResNet-34-like encoder ([3, 4, 6, 3] blocks) with a six-stage decoder.
NetworkConfig full_scale_network();

template <typename Scalar>
struct Blob
{
  std::string name;
  std::vector<int> shape;
  Vector<Scalar> value;
};

enum class NodeOp
{
  input,
  conv,
  deconv2,
  relu,
  add,
  concat,
  l2norm,
};

struct Node
{
  NodeOp op = NodeOp::input;
  int a = -1;
  int b = -1;
  int weight = -1;  // blob index
  int bias = -1;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int channels = 0;
};

/// Layer graph in topological order; the last node is the normalized descriptor output.
struct Architecture
{
  std::vector<Node> nodes;
  std::vector<std::string> blob_names;
  std::vector<std::vector<int>> blob_shapes;
  /// Per-blob initialization standard deviation (0 for biases).
  std::vector<double> blob_init_std;
};

Architecture build_architecture(const NetworkConfig & cfg);

template <typename Scalar>
struct Parameters
{
  NetworkConfig config;
  std::shared_ptr<const Architecture> arch;
  std::vector<Blob<Scalar>> blobs;

  std::size_t count() const;
  template <typename Other>
  Parameters<Other> cast() const
  {
    Parameters<Other> out{config, arch, {}};
    for (const auto & b : blobs) out.blobs.push_back({b.name, b.shape, b.value.template cast<Other>()});
    return out;
  }
};

/// Fan-in scaled Gaussian weights, zero biases; deterministic in `cfg.seed`.
Parameters<float> init_network(const NetworkConfig & cfg);

template <typename Scalar>
struct Gradients
{
  std::vector<Vector<Scalar>> blobs;

  static Gradients zeros_like(const Parameters<Scalar> & p)
  {
    Gradients g;
    for (const auto & b : p.blobs) g.blobs.push_back(Vector<Scalar>::Zero(b.value.size()));
    return g;
  }
  void add(const Gradients & other)
  {
    for (std::size_t i = 0; i < blobs.size(); ++i) blobs[i] += other.blobs[i];
  }
};

template <typename Scalar>
using DescriptorMap = Planar<Scalar>;

template <typename Scalar>
struct ForwardTrace
{
  std::vector<Planar<Scalar>> values;
};

/// Descriptor image of `frame` (RGB in [0, 1]); unit norm at every pixel. Frame sides must be
/// divisible by the total stride. When `trace` is given, all activations are kept for backward.
template <typename Scalar>
DescriptorMap<Scalar> forward(
  const Parameters<Scalar> & params, const Planar<Scalar> & frame,
  ForwardTrace<Scalar> * trace = nullptr);

/// Accumulates parameter gradients of a scalar loss given its gradient w.r.t. the output.
template <typename Scalar>
void backward(
  const Parameters<Scalar> & params, const ForwardTrace<Scalar> & trace,
  const Planar<Scalar> & grad_output, Gradients<Scalar> & grads);

/// ‖f_a(round(u_a)) - f_b(round(u_b))‖₂. Throws ShapeError for out-of-bounds coordinates.
template <typename Scalar>
double descriptor_distance(
  const DescriptorMap<Scalar> & fa, const PixelCoord & ua, const DescriptorMap<Scalar> & fb,
  const PixelCoord & ub);

enum class LossAveraging
{
  separate,  // mean over positives + mean over negative pairs
  pooled,    // both sums over (#positives + #negative pairs)
};

struct LossConfig
{
  double margin = 0.5;
  LossAveraging averaging = LossAveraging::separate;
  bool bilinear_lookup = false;
};

nlohmann::json to_json(const LossConfig & cfg);
LossConfig loss_config_from_json(const nlohmann::json & j);

struct LossTerms
{
  double total = 0.0;
  double match = 0.0;
  double nonmatch = 0.0;
  long active_negatives = 0;
};

/// Pixelwise contrastive loss: D² on positives, max(0, M - D)² on negatives. Gradients w.r.t.
/// both descriptor maps are accumulated into `grad_a` / `grad_b` when non-null (they must be
/// shaped like the maps).
template <typename Scalar>
LossTerms contrastive_loss(
  const DescriptorMap<Scalar> & fa, const DescriptorMap<Scalar> & fb, const MatchSet & matches,
  const LossConfig & cfg, Planar<Scalar> * grad_a = nullptr, Planar<Scalar> * grad_b = nullptr);

// ---------------------------------------------------------------------------- checkpoints

/// DNC1 container: magic, u32 version, JSON meta (config echo), u64 step, u64 epoch, rng
/// state string, then named float32 blobs with their shapes.
struct Checkpoint
{
  nlohmann::json meta;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
  std::vector<Blob<float>> blobs;

  const Blob<float> * find(const std::string & name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt);
Checkpoint read_checkpoint(const std::filesystem::path & path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint & ckpt);

/// Network blobs plus `meta["network"]`.
Checkpoint checkpoint_from_parameters(const Parameters<float> & params);
/// Rebuilds parameters from `meta["network"]` and the "enc." / "dec." / "head." blobs.
Parameters<float> parameters_from_checkpoint(const Checkpoint & ckpt);

/// Copies every encoder blob of `external` whose name and shape match; returns how many.
int import_encoder_weights(Parameters<float> & params, const Checkpoint & external);

}  // namespace flowdesc

#endif  // FLOWDESC_DESCNET_HPP_
