#ifndef FLOWDESC_EVALHARNESS_HPP_
#define FLOWDESC_EVALHARNESS_HPP_

#include "flowdesc/baseline.hpp"
#include "flowdesc/dataset.hpp"
#include "flowdesc/descnet.hpp"

#include "json.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowdesc
{

enum class DomainMode
{
  full,
  mask,
};

DomainMode parse_domain(const std::string & name);
std::string to_string(DomainMode mode);

/// Distances from one query pixel of image A to every pixel of image B.
struct DistanceRow
{
  PixelCoord query;
  Plane<double> distance;
  Plane<std::uint8_t> domain;
  DomainMode mode = DomainMode::full;
};

DistanceRow make_distance_row(
  const DescriptorMap<float> & fa, const PixelCoord & query, const DescriptorMap<float> & fb,
  const Plane<std::uint8_t> & domain, DomainMode mode);

/// 100 · |{p ∈ domain : d(p) < d(round(gt))}| / |domain|. Throws ShapeError when the rounded
/// ground truth lies outside the domain.
double false_positive_percentile(const DistanceRow & row, const PixelCoord & gt);

/// Pixels eligible as queries (in A) and as candidates (in B) for one pair.
struct EvalDomain
{
  Plane<std::uint8_t> a;
  Plane<std::uint8_t> b;
  DomainMode mode = DomainMode::full;
};

/// Patch support (border excluded) intersected with the masks in mask mode.
EvalDomain evaluation_domain(
  const ForegroundMask & mask_a, const ForegroundMask & mask_b, DomainMode mode, int border);

/// Foreground pixels of A that are visible, inside domain A, and whose rounded ground-truth
/// target lies inside domain B. Row-major linear indices.
std::vector<Eigen::Index> query_pixels(
  const GroundTruthMap & gt, const ForegroundMask & mask_a, const EvalDomain & domain);

struct DescriptorPair
{
  std::shared_ptr<const DescriptorMap<float>> a;
  std::shared_ptr<const DescriptorMap<float>> b;
};

/// Anything that assigns descriptor maps to dataset frames.
class DescriptorSource
{
public:
  virtual ~DescriptorSource() = default;
  virtual std::string name() const = 0;
  virtual std::shared_ptr<const DescriptorMap<float>> describe_frame(const SequenceDataset & ds, int index) = 0;
  virtual DescriptorPair describe_pair(const SequenceDataset & ds, const GroundTruthMap & gt)
  {
    return {describe_frame(ds, gt.source), describe_frame(ds, gt.target)};
  }
};

/// Small per-frame cache shared by the concrete sources.
class CachedSource : public DescriptorSource
{
public:
  explicit CachedSource(std::size_t capacity = 4) : capacity_(capacity) {}
  std::shared_ptr<const DescriptorMap<float>> describe_frame(const SequenceDataset & ds, int index) override;

protected:
  virtual DescriptorMap<float> compute(const SequenceDataset & ds, int index) = 0;

private:
  std::size_t capacity_;
  std::map<int, std::shared_ptr<const DescriptorMap<float>>> cache_;
  std::deque<int> order_;
};

class NetworkDescriptors : public CachedSource
{
public:
  explicit NetworkDescriptors(Parameters<float> params, std::string label = "ours");
  std::string name() const override { return label_; }

protected:
  DescriptorMap<float> compute(const SequenceDataset & ds, int index) override;

private:
  Parameters<float> params_;
  std::string label_;
};

/// Dense orientation-histogram baseline. Invalid (zero) descriptors are replaced by random
/// unit vectors seeded per frame so that ties cannot favour the baseline.
class BaselineDescriptors : public CachedSource
{
public:
  explicit BaselineDescriptors(BaselineParams params = {}, std::uint64_t seed = 0, std::string label = "baseline");
  std::string name() const override { return label_; }
  const BaselineParams & params() const { return params_; }

protected:
  DescriptorMap<float> compute(const SequenceDataset & ds, int index) override;

private:
  BaselineParams params_;
  std::uint64_t seed_;
  std::string label_;
};

/// Encodes ground truth: f_A(u) = round(map(u)) / size and f_B(v) = v / size.
class OracleDescriptors : public DescriptorSource
{
public:
  std::string name() const override { return "oracle"; }
  std::shared_ptr<const DescriptorMap<float>> describe_frame(const SequenceDataset & ds, int index) override;
  DescriptorPair describe_pair(const SequenceDataset & ds, const GroundTruthMap & gt) override;
};

/// Independent random unit vectors per pixel and frame.
class RandomDescriptors : public CachedSource
{
public:
  explicit RandomDescriptors(std::uint64_t seed, int dim = 3) : seed_(seed), dim_(dim) {}
  std::string name() const override { return "random"; }

protected:
  DescriptorMap<float> compute(const SequenceDataset & ds, int index) override;

private:
  std::uint64_t seed_;
  int dim_;
};

DescriptorMap<float> random_unit_descriptors(int dim, int height, int width, std::uint64_t seed);

struct EvalOptions
{
  DomainMode domain = DomainMode::full;
  /// Query pixels per pair; 0 = every eligible foreground pixel.
  int samples_per_pair = 0;
  /// Border excluded for every method; the baseline patch radius.
  int border = 8;
  std::uint64_t seed = 1;
};

/// Percentiles of every method on one pair, on the same query pixels and domain.
struct PairPercentiles
{
  int frame_a = 0;
  int frame_b = 0;
  std::vector<Eigen::Index> queries;
  long domain_b_size = 0;
  std::vector<std::vector<double>> per_method;  // [method][query]
};

PairPercentiles evaluate_pair(
  const SequenceDataset & ds, const GroundTruthMap & gt, const std::vector<DescriptorSource *> & methods,
  const EvalOptions & options);

/// Same, with explicit descriptor maps (used by tests and the pair evaluator).
std::vector<std::vector<double>> percentiles_for_queries(
  const std::vector<DescriptorPair> & maps, const GroundTruthMap & gt, const EvalDomain & domain,
  const std::vector<Eigen::Index> & queries);

struct MethodSummary
{
  std::string name;
  std::vector<double> per_pair;
  double mean = 0.0;
  double stddev = 0.0;
};

void summarize(MethodSummary & s);

/// Fraction of values ≤ each bin's upper edge; edges are (i+1)·100/bins.
std::vector<double> cumulative_fraction(const std::vector<double> & values, int bins);
/// Counts per bin over [0, 100]; the last bin includes 100.
std::vector<long> percentile_histogram(const std::vector<double> & values, int bins);

struct ConsecutiveResult
{
  std::vector<std::pair<int, int>> pairs;
  std::vector<MethodSummary> methods;
  std::vector<long> queries_per_pair;
};

/// Test 1: consecutive pairs (i, i+1) inside `frames`, at most `n_pairs` (0 = all).
ConsecutiveResult eval_consecutive(
  const SequenceDataset & ds, const SplitRange & frames, int n_pairs,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options);

enum class SplitPair
{
  train_train,
  train_test,
  test_test,
};

struct CrossCell
{
  bool same_background = true;
  SplitPair split = SplitPair::train_train;
  std::vector<std::pair<int, int>> pairs;
  std::vector<MethodSummary> methods;
};

struct CrossResult
{
  std::vector<CrossCell> cells;  // same background first, then different; train-train, train-test, test-test
};

/// Test 2: `pairs_per_cell` random pairs (a ≠ b) per {train,test}² × {same,different} cell.
/// Throws Error when a cell has no candidate pair.
CrossResult eval_cross(
  const SequenceDataset & ds, const DatasetSplit & split, int pairs_per_cell,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options);

struct PixelwiseResult
{
  std::vector<std::pair<int, int>> pairs;
  int bins = 100;
  std::vector<std::string> names;
  std::vector<std::vector<double>> percentiles;  // [method][pixel]
  std::vector<std::vector<long>> histogram;
  std::vector<std::vector<double>> cumulative;
};

/// Test 3: per-pixel percentiles pooled over the given pairs, binned over [0, 100].
PixelwiseResult eval_pixelwise_histogram(
  const SequenceDataset & ds, const std::vector<std::pair<int, int>> & pairs, int bins,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options);

struct KeypointMatch
{
  int frame_a = 0;
  int frame_b = 0;
  Keypoint keypoint;
  PixelCoord ground_truth;
  std::vector<PixelCoord> found;  // per method
  std::vector<double> error;      // per method, pixels
};

struct KeypointResult
{
  std::vector<std::string> names;
  std::vector<KeypointMatch> matches;
  std::vector<double> median_error;
  std::vector<double> mean_error;
};

/// Test 4: DoG keypoints on the foreground of A matched by nearest neighbour over domain B.
/// Throws Error when no keypoint qualifies on any pair.
KeypointResult eval_keypoints(
  const SequenceDataset & ds, const std::vector<std::pair<int, int>> & pairs,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options,
  const DogParams & dog = {});

/// Index of the domain pixel of `fb` closest to `query` (first on ties).
Eigen::Index nearest_neighbour(
  const DescriptorMap<float> & fb, const Eigen::Ref<const Vector<float>> & query,
  const Plane<std::uint8_t> & domain);

struct TrackResult
{
  int reference = 0;
  std::vector<PixelCoord> seeds;
  std::vector<std::vector<PixelCoord>> positions;                   // [frame][point]
  std::vector<std::vector<std::optional<PixelCoord>>> ground_truth;  // [frame][point]
};

/// Nearest-neighbour location of each seed descriptor in every frame. Overlays (one PNG per
/// frame) are written when `overlay_dir` is given.
TrackResult track_points(
  const SequenceDataset & ds, DescriptorSource & source, const std::vector<PixelCoord> & seeds,
  int reference, bool mask_restricted, const std::optional<std::filesystem::path> & overlay_dir = {});

/// side×side square of seed points centred on `center`.
std::vector<PixelCoord> grid_seed_points(const PixelCoord & center, int side = 5);

// ---------------------------------------------------------------------------- reports

/// Report metadata shared by all tests.
struct ReportMeta
{
  std::string checkpoint_id;
  std::string dataset_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  DomainMode domain = DomainMode::full;
};

nlohmann::json meta_json(const ReportMeta & meta);

/// Each writer emits <dir>/testN.json plus CSV tables and returns the JSON.
nlohmann::json write_consecutive_report(const std::filesystem::path & dir, const ConsecutiveResult & r, const ReportMeta & meta);
nlohmann::json write_cross_report(const std::filesystem::path & dir, const CrossResult & r, const ReportMeta & meta);
nlohmann::json write_pixelwise_report(const std::filesystem::path & dir, const PixelwiseResult & r, const ReportMeta & meta);
nlohmann::json write_keypoint_report(const std::filesystem::path & dir, const KeypointResult & r, const ReportMeta & meta);
void write_track_report(const std::filesystem::path & dir, const TrackResult & r);

}  // namespace flowdesc

#endif  // FLOWDESC_EVALHARNESS_HPP_
