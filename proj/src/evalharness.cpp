#include "flowdesc/evalharness.hpp"

#include "flowdesc/error.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace flowdesc
{

DomainMode parse_domain(const std::string & name)
{
  if (name == "full") return DomainMode::full;
  if (name == "mask") return DomainMode::mask;
  throw ConfigError("unknown evaluation domain '" + name + "' (expected full | mask)");
}

std::string to_string(DomainMode mode) { return mode == DomainMode::full ? "full" : "mask"; }

DistanceRow make_distance_row(
  const DescriptorMap<float> & fa, const PixelCoord & query, const DescriptorMap<float> & fb,
  const Plane<std::uint8_t> & domain, DomainMode mode)
{
  const int qx = round_px(query.x);
  const int qy = round_px(query.y);
  if (!fa.contains(qx, qy)) throw ShapeError("query pixel outside image A");
  if (domain.rows() != fb.height || domain.cols() != fb.width) throw ShapeError("domain does not match image B");
  DistanceRow row{query, Plane<double>(fb.height, fb.width), domain, mode};
  const Vector<double> q = fa.pixel(qx, qy).cast<double>();
  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) row.distance(y, x) = (fb.pixel(x, y).cast<double>() - q).norm();
  }
  return row;
}

double false_positive_percentile(const DistanceRow & row, const PixelCoord & gt)
{
  const int gx = round_px(gt.x);
  const int gy = round_px(gt.y);
  if (gx < 0 || gy < 0 || gx >= row.domain.cols() || gy >= row.domain.rows() || row.domain(gy, gx) == 0) {
    throw ShapeError("ground-truth pixel lies outside the evaluation domain");
  }
  const double ref = row.distance(gy, gx);
  long closer = 0;
  long total = 0;
  for (Eigen::Index i = 0; i < row.domain.size(); ++i) {
    if (row.domain(i) == 0) continue;
    ++total;
    if (row.distance(i) < ref) ++closer;
  }
  return 100.0 * static_cast<double>(closer) / static_cast<double>(total);
}

EvalDomain evaluation_domain(
  const ForegroundMask & mask_a, const ForegroundMask & mask_b, DomainMode mode, int border)
{
  EvalDomain d;
  d.mode = mode;
  d.a = patch_support(mask_a.height(), mask_a.width(), border);
  d.b = patch_support(mask_b.height(), mask_b.width(), border);
  if (mode == DomainMode::mask) {
    d.a = d.a * mask_a.bits;
    d.b = d.b * mask_b.bits;
  }
  return d;
}

std::vector<Eigen::Index> query_pixels(
  const GroundTruthMap & gt, const ForegroundMask & mask_a, const EvalDomain & domain)
{
  std::vector<Eigen::Index> out;
  const int h = gt.height();
  const int w = gt.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask_a.contains(x, y) || gt.visible(y, x) == 0 || domain.a(y, x) == 0) continue;
      const int tx = round_px(gt.map_x(y, x));
      const int ty = round_px(gt.map_y(y, x));
      if (tx < 0 || ty < 0 || tx >= domain.b.cols() || ty >= domain.b.rows() || domain.b(ty, tx) == 0) continue;
      out.push_back(Eigen::Index{y} * w + x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------- sources

std::shared_ptr<const DescriptorMap<float>> CachedSource::describe_frame(const SequenceDataset & ds, int index)
{
  if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  auto map = std::make_shared<const DescriptorMap<float>>(compute(ds, index));
  cache_[index] = map;
  order_.push_back(index);
  while (order_.size() > capacity_) {
    cache_.erase(order_.front());
    order_.pop_front();
  }
  return map;
}

NetworkDescriptors::NetworkDescriptors(Parameters<float> params, std::string label)
: CachedSource(4), params_(std::move(params)), label_(std::move(label))
{}

DescriptorMap<float> NetworkDescriptors::compute(const SequenceDataset & ds, int index)
{
  return forward(params_, ds.frame(index));
}

BaselineDescriptors::BaselineDescriptors(BaselineParams params, std::uint64_t seed, std::string label)
: CachedSource(4), params_(params), seed_(seed), label_(std::move(label))
{}

DescriptorMap<float> random_unit_descriptors(int dim, int height, int width, std::uint64_t seed)
{
  Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  DescriptorMap<float> out(dim, height, width);
  for (Eigen::Index p = 0; p < out.pixels(); ++p) {
    auto v = out.data.col(p);
    do {
      for (int c = 0; c < dim; ++c) v(c) = n(rng);
    } while (v.norm() < 1e-6f);
    v /= v.norm();
  }
  return out;
}

DescriptorMap<float> BaselineDescriptors::compute(const SequenceDataset & ds, int index)
{
  auto field = compute_baseline(ds.frame(index), params_);
  if ((field.valid == 0).any()) {
    const auto noise = random_unit_descriptors(
      kBaselineDim, field.descriptors.height, field.descriptors.width,
      derive_seed(seed_, {0x6e6f6973, static_cast<std::uint64_t>(index)}));
    for (Eigen::Index p = 0; p < field.descriptors.pixels(); ++p) {
      if (field.valid(p) == 0) field.descriptors.data.col(p) = noise.data.col(p);
    }
  }
  return std::move(field.descriptors);
}

std::shared_ptr<const DescriptorMap<float>> OracleDescriptors::describe_frame(const SequenceDataset & ds, int)
{
  const int h = ds.height();
  const int w = ds.width();
  const float s = static_cast<float>(std::max(h, w));
  auto out = std::make_shared<DescriptorMap<float>>(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out->at(0, x, y) = static_cast<float>(x) / s;
      out->at(1, x, y) = static_cast<float>(y) / s;
    }
  }
  return out;
}

DescriptorPair OracleDescriptors::describe_pair(const SequenceDataset & ds, const GroundTruthMap & gt)
{
  const int h = gt.height();
  const int w = gt.width();
  const float s = static_cast<float>(std::max(h, w));
  auto a = std::make_shared<DescriptorMap<float>>(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      a->at(0, x, y) = static_cast<float>(round_px(gt.map_x(y, x))) / s;
      a->at(1, x, y) = static_cast<float>(round_px(gt.map_y(y, x))) / s;
    }
  }
  return {a, describe_frame(ds, gt.target)};
}

DescriptorMap<float> RandomDescriptors::compute(const SequenceDataset & ds, int index)
{
  return random_unit_descriptors(dim_, ds.height(), ds.width(), derive_seed(seed_, {static_cast<std::uint64_t>(index)}));
}

// ---------------------------------------------------------------------------- percentiles

namespace
{

constexpr int kDirectDistanceMaxDim = 16;
constexpr Eigen::Index kQueryBlock = 256;

struct Gathered
{
  std::vector<Eigen::Index> index;  // domain pixel linear indices
  std::vector<Eigen::Index> slot;   // pixel -> position in `index`, -1 outside
};

Gathered gather_domain(const Plane<std::uint8_t> & domain)
{
  Gathered g;
  g.slot.assign(static_cast<std::size_t>(domain.size()), -1);
  for (Eigen::Index i = 0; i < domain.size(); ++i) {
    if (domain(i) != 0) {
      g.slot[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(g.index.size());
      g.index.push_back(i);
    }
  }
  return g;
}

RowMatrix<float> columns(const DescriptorMap<float> & f, const std::vector<Eigen::Index> & idx)
{
  RowMatrix<float> out(f.channels(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = f.data.col(idx[j]);
  return out;
}

// Squared distances from a block of query columns to all candidate columns.
template <typename Fn>
void for_each_distance_row(const RowMatrix<float> & queries, const RowMatrix<float> & cands, Fn && fn)
{
  const Eigen::Index nq = queries.cols();
  Eigen::Matrix<float, 1, Eigen::Dynamic> row(cands.cols());
  if (queries.rows() <= kDirectDistanceMaxDim) {
    for (Eigen::Index q = 0; q < nq; ++q) {
      row = (cands.colwise() - queries.col(q)).colwise().squaredNorm();
      fn(q, row);
    }
    return;
  }
  const Eigen::Matrix<float, 1, Eigen::Dynamic> cn = cands.colwise().squaredNorm();
  for (Eigen::Index q0 = 0; q0 < nq; q0 += kQueryBlock) {
    const Eigen::Index nb = std::min(kQueryBlock, nq - q0);
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> qb = queries.middleCols(q0, nb);
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> dots = qb.transpose() * cands;
    for (Eigen::Index i = 0; i < nb; ++i) {
      row = (cn.array() + qb.col(i).squaredNorm() - 2.0f * dots.row(i).array()).max(0.0f);
      fn(q0 + i, row);
    }
  }
}

std::uint64_t pair_key(int a, int b)
{
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

ForegroundMask dataset_mask(const SequenceDataset & ds, int index)
{
  return ds.has_masks() ? ds.mask(index) : ForegroundMask::full(ds.height(), ds.width());
}

double mean_of(const std::vector<double> & v)
{
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v)
{
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<std::vector<double>> percentiles_for_queries(
  const std::vector<DescriptorPair> & maps, const GroundTruthMap & gt, const EvalDomain & domain,
  const std::vector<Eigen::Index> & queries)
{
  const auto dom = gather_domain(domain.b);
  const int w = gt.width();
  std::vector<Eigen::Index> target_slot(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const int x = static_cast<int>(queries[i] % w);
    const int y = static_cast<int>(queries[i] / w);
    const Eigen::Index t = Eigen::Index{round_px(gt.map_y(y, x))} * w + round_px(gt.map_x(y, x));
    target_slot[i] = dom.slot[static_cast<std::size_t>(t)];
    if (target_slot[i] < 0) throw ShapeError("query target outside the evaluation domain");
  }
  const double n = static_cast<double>(dom.index.size());

  std::vector<std::vector<double>> out;
  for (const auto & m : maps) {
    const auto qcols = columns(*m.a, queries);
    const auto bcols = columns(*m.b, dom.index);
    std::vector<double> pct(queries.size());
    for_each_distance_row(qcols, bcols, [&](Eigen::Index q, const auto & row) {
      const float ref = row(target_slot[static_cast<std::size_t>(q)]);
      pct[static_cast<std::size_t>(q)] = 100.0 * static_cast<double>((row.array() < ref).count()) / n;
    });
    out.push_back(std::move(pct));
  }
  return out;
}

PairPercentiles evaluate_pair(
  const SequenceDataset & ds, const GroundTruthMap & gt, const std::vector<DescriptorSource *> & methods,
  const EvalOptions & options)
{
  const auto mask_a = dataset_mask(ds, gt.source);
  const auto mask_b = dataset_mask(ds, gt.target);
  const auto domain = evaluation_domain(mask_a, mask_b, options.domain, options.border);
  PairPercentiles r;
  r.frame_a = gt.source;
  r.frame_b = gt.target;
  r.queries = query_pixels(gt, mask_a, domain);
  r.domain_b_size = static_cast<long>((domain.b != 0).count());
  if (options.samples_per_pair > 0 && static_cast<int>(r.queries.size()) > options.samples_per_pair) {
    Rng rng(derive_seed(options.seed, {0x71727973, pair_key(gt.source, gt.target)}));
    for (int i = 0; i < options.samples_per_pair; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), r.queries.size() - 1);
      std::swap(r.queries[static_cast<std::size_t>(i)], r.queries[pick(rng)]);
    }
    r.queries.resize(static_cast<std::size_t>(options.samples_per_pair));
    std::sort(r.queries.begin(), r.queries.end());
  }
  if (r.queries.empty()) return r;
  std::vector<DescriptorPair> maps;
  for (auto * m : methods) maps.push_back(m->describe_pair(ds, gt));
  r.per_method = percentiles_for_queries(maps, gt, domain, r.queries);
  return r;
}

void summarize(MethodSummary & s)
{
  s.mean = mean_of(s.per_pair);
  double var = 0.0;
  for (double v : s.per_pair) var += (v - s.mean) * (v - s.mean);
  s.stddev = s.per_pair.empty() ? 0.0 : std::sqrt(var / static_cast<double>(s.per_pair.size()));
}

std::vector<long> percentile_histogram(const std::vector<double> & values, int bins)
{
  std::vector<long> h(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>(std::floor(v * bins / 100.0));
    h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  return h;
}

std::vector<double> cumulative_fraction(const std::vector<double> & values, int bins)
{
  std::vector<double> out(static_cast<std::size_t>(bins), 0.0);
  if (values.empty()) return out;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < bins; ++i) {
    const double edge = 100.0 * (i + 1) / bins;
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), edge);
    out[static_cast<std::size_t>(i)] = static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
  }
  return out;
}

ConsecutiveResult eval_consecutive(
  const SequenceDataset & ds, const SplitRange & frames, int n_pairs,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options)
{
  ConsecutiveResult r;
  for (auto * m : methods) r.methods.push_back({m->name(), {}, 0.0, 0.0});
  int evaluated = 0;
  for (int a = frames.begin; a + 1 < frames.end; ++a) {
    if (n_pairs > 0 && evaluated >= n_pairs) break;
    if (!ds.has_ground_truth(a, a + 1)) throw IoError("missing ground truth for pair " + frame_name(a));
    const auto gt = ds.ground_truth(a, a + 1);
    const auto p = evaluate_pair(ds, gt, methods, options);
    ++evaluated;
    if (p.queries.empty()) continue;
    r.pairs.emplace_back(a, a + 1);
    r.queries_per_pair.push_back(static_cast<long>(p.queries.size()));
    for (std::size_t m = 0; m < methods.size(); ++m) r.methods[m].per_pair.push_back(mean_of(p.per_method[m]));
  }
  if (r.pairs.empty()) throw Error("no evaluable consecutive pair in the requested range");
  for (auto & m : r.methods) summarize(m);
  return r;
}

CrossResult eval_cross(
  const SequenceDataset & ds, const DatasetSplit & split, int pairs_per_cell,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options)
{
  if (split.train.size() < 1 || split.test.size() < 1) throw Error("both splits must be nonempty");
  if (ds.background(split.train.begin) < 0) throw Error("background labels are unavailable");
  if (pairs_per_cell < 1) throw ConfigError("eval.cross_pairs_per_cell must be at least 1");
  CrossResult result;
  int cell_index = 0;
  for (bool same : {true, false}) {
    for (SplitPair sp : {SplitPair::train_train, SplitPair::train_test, SplitPair::test_test}) {
      const SplitRange & ra = sp == SplitPair::test_test ? split.test : split.train;
      const SplitRange & rb = sp == SplitPair::train_train ? split.train : split.test;
      std::vector<std::pair<int, int>> candidates;
      for (int a = ra.begin; a < ra.end; ++a) {
        for (int b = rb.begin; b < rb.end; ++b) {
          if (a == b) continue;
          if ((ds.background(a) == ds.background(b)) == same) candidates.emplace_back(a, b);
        }
      }
      CrossCell cell;
      cell.same_background = same;
      cell.split = sp;
      for (auto * m : methods) cell.methods.push_back({m->name(), {}, 0.0, 0.0});
      Rng rng(derive_seed(options.seed, {0x63726f73, static_cast<std::uint64_t>(cell_index++)}));
      for (std::size_t i = 0; i < candidates.size() && static_cast<int>(cell.pairs.size()) < pairs_per_cell; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng)]);
        const auto [a, b] = candidates[i];
        const auto p = evaluate_pair(ds, ds.ground_truth(a, b), methods, options);
        if (p.queries.empty()) continue;
        cell.pairs.emplace_back(a, b);
        for (std::size_t m = 0; m < methods.size(); ++m) cell.methods[m].per_pair.push_back(mean_of(p.per_method[m]));
      }
      if (cell.pairs.empty()) {
        throw Error(std::string("empty cell: ") + (same ? "same" : "different") + " background, split pair " +
                    std::to_string(static_cast<int>(sp)));
      }
      for (auto & m : cell.methods) summarize(m);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

PixelwiseResult eval_pixelwise_histogram(
  const SequenceDataset & ds, const std::vector<std::pair<int, int>> & pairs, int bins,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options)
{
  if (bins < 1) throw ConfigError("histogram bins must be at least 1");
  PixelwiseResult r;
  r.bins = bins;
  r.percentiles.resize(methods.size());
  for (auto * m : methods) r.names.push_back(m->name());
  for (const auto & [a, b] : pairs) {
    const auto p = evaluate_pair(ds, ds.ground_truth(a, b), methods, options);
    if (p.queries.empty()) continue;
    r.pairs.emplace_back(a, b);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      r.percentiles[m].insert(r.percentiles[m].end(), p.per_method[m].begin(), p.per_method[m].end());
    }
  }
  for (const auto & v : r.percentiles) {
    r.histogram.push_back(percentile_histogram(v, bins));
    r.cumulative.push_back(cumulative_fraction(v, bins));
  }
  return r;
}

Eigen::Index nearest_neighbour(
  const DescriptorMap<float> & fb, const Eigen::Ref<const Vector<float>> & query,
  const Plane<std::uint8_t> & domain)
{
  Eigen::Index best = -1;
  float best_d = std::numeric_limits<float>::infinity();
  for (Eigen::Index p = 0; p < fb.pixels(); ++p) {
    if (domain(p) == 0) continue;
    const float d = (fb.data.col(p) - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

KeypointResult eval_keypoints(
  const SequenceDataset & ds, const std::vector<std::pair<int, int>> & pairs,
  const std::vector<DescriptorSource *> & methods, const EvalOptions & options, const DogParams & dog)
{
  KeypointResult r;
  for (auto * m : methods) r.names.push_back(m->name());
  for (const auto & [a, b] : pairs) {
    const auto gt = ds.ground_truth(a, b);
    const auto mask_a = dataset_mask(ds, a);
    const auto mask_b = dataset_mask(ds, b);
    const auto domain = evaluation_domain(mask_a, mask_b, options.domain, options.border);
    const auto queries = query_pixels(gt, mask_a, domain);
    Plane<std::uint8_t> eligible = Plane<std::uint8_t>::Zero(gt.height(), gt.width());
    for (auto q : queries) eligible(q) = 1;

    std::vector<Keypoint> kps;
    for (const auto & kp : detect_dog_keypoints(to_gray(ds.frame(a)), dog)) {
      if (eligible(kp.y, kp.x) != 0) kps.push_back(kp);
    }
    if (kps.empty()) continue;
    std::vector<DescriptorPair> maps;
    for (auto * m : methods) maps.push_back(m->describe_pair(ds, gt));
    const int w = gt.width();
    for (const auto & kp : kps) {
      KeypointMatch km;
      km.frame_a = a;
      km.frame_b = b;
      km.keypoint = kp;
      km.ground_truth = gt.at(kp.x, kp.y);
      for (const auto & m : maps) {
        const auto nn = nearest_neighbour(*m.b, m.a->pixel(kp.x, kp.y), domain.b);
        const PixelCoord found{static_cast<double>(nn % w), static_cast<double>(nn / w)};
        km.found.push_back(found);
        km.error.push_back(std::hypot(found.x - km.ground_truth.x, found.y - km.ground_truth.y));
      }
      r.matches.push_back(std::move(km));
    }
  }
  if (r.matches.empty()) throw Error("no keypoints detected on the foreground of the evaluated pairs");
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> e;
    for (const auto & km : r.matches) e.push_back(km.error[m]);
    r.median_error.push_back(median_of(e));
    r.mean_error.push_back(mean_of(e));
  }
  return r;
}

std::vector<PixelCoord> grid_seed_points(const PixelCoord & center, int side)
{
  std::vector<PixelCoord> out;
  const int half = side / 2;
  const int cx = round_px(center.x);
  const int cy = round_px(center.y);
  for (int dy = -half; dy < side - half; ++dy) {
    for (int dx = -half; dx < side - half; ++dx) out.push_back({double(cx + dx), double(cy + dy)});
  }
  return out;
}

namespace
{

std::array<float, 3> palette(std::size_t i, std::size_t n)
{
  const double hue = 6.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n, 1));
  const double f = hue - std::floor(hue);
  switch (static_cast<int>(hue) % 6) {
    case 0: return {1.0f, static_cast<float>(f), 0.0f};
    case 1: return {static_cast<float>(1 - f), 1.0f, 0.0f};
    case 2: return {0.0f, 1.0f, static_cast<float>(f)};
    case 3: return {0.0f, static_cast<float>(1 - f), 1.0f};
    case 4: return {static_cast<float>(f), 0.0f, 1.0f};
    default: return {1.0f, 0.0f, static_cast<float>(1 - f)};
  }
}

}  // namespace

TrackResult track_points(
  const SequenceDataset & ds, DescriptorSource & source, const std::vector<PixelCoord> & seeds,
  int reference, bool mask_restricted, const std::optional<std::filesystem::path> & overlay_dir)
{
  if (reference < 0 || reference >= ds.size()) throw ShapeError("reference frame out of range");
  for (const auto & s : seeds) {
    if (!ds.frame(reference).contains(round_px(s.x), round_px(s.y))) {
      throw ShapeError("seed point outside the reference frame");
    }
  }
  TrackResult r;
  r.reference = reference;
  r.seeds = seeds;
  const auto ref = source.describe_frame(ds, reference);
  RowMatrix<float> seed_desc(ref->channels(), static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seed_desc.col(static_cast<Eigen::Index>(i)) = ref->pixel(round_px(seeds[i].x), round_px(seeds[i].y));
  }
  if (overlay_dir) std::filesystem::create_directories(*overlay_dir);

  for (int f = 0; f < ds.size(); ++f) {
    const auto desc = source.describe_frame(ds, f);
    const Plane<std::uint8_t> domain = mask_restricted && ds.has_masks()
                                         ? ds.mask(f).bits
                                         : Plane<std::uint8_t>::Ones(ds.height(), ds.width());
    std::vector<PixelCoord> pos;
    for (Eigen::Index i = 0; i < seed_desc.cols(); ++i) {
      const auto nn = nearest_neighbour(*desc, seed_desc.col(i), domain);
      pos.push_back({static_cast<double>(nn % ds.width()), static_cast<double>(nn / ds.width())});
    }
    std::vector<std::optional<PixelCoord>> truth(seeds.size());
    if (ds.has_ground_truth(reference, f) && ds.has_poses()) {
      const auto gt = ds.ground_truth(reference, f);
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const int x = round_px(seeds[i].x);
        const int y = round_px(seeds[i].y);
        if (gt.visible(y, x) != 0) truth[i] = gt.at(x, y);
      }
    }
    if (overlay_dir) {
      ImageFrame img = ds.frame(f);
      for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto color = palette(i, pos.size());
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = round_px(pos[i].x) + dx;
            const int y = round_px(pos[i].y) + dy;
            if (!img.contains(x, y)) continue;
            for (int c = 0; c < 3; ++c) img.at(c, x, y) = color[static_cast<std::size_t>(c)];
          }
        }
      }
      write_png(*overlay_dir / (frame_name(f) + ".png"), img);
    }
    r.positions.push_back(std::move(pos));
    r.ground_truth.push_back(std::move(truth));
  }
  return r;
}

// ---------------------------------------------------------------------------- reports

namespace
{

std::string num(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const std::filesystem::path & path, const std::string & text)
{
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

nlohmann::json summary_json(const MethodSummary & s)
{
  return {{"name", s.name}, {"mean", s.mean}, {"std", s.stddev}, {"per_pair", s.per_pair}};
}

nlohmann::json pairs_json(const std::vector<std::pair<int, int>> & pairs)
{
  auto j = nlohmann::json::array();
  for (const auto & [a, b] : pairs) j.push_back({a, b});
  return j;
}

const char * split_name(SplitPair sp)
{
  switch (sp) {
    case SplitPair::train_train: return "train_train";
    case SplitPair::train_test: return "train_test";
    case SplitPair::test_test: return "test_test";
  }
  return "?";
}

}  // namespace

nlohmann::json meta_json(const ReportMeta & meta)
{
  return {{"checkpoint", meta.checkpoint_id}, {"dataset", meta.dataset_id}, {"config_hash", meta.config_hash},
          {"seed", meta.seed}, {"domain", to_string(meta.domain)}};
}

nlohmann::json write_consecutive_report(const std::filesystem::path & dir, const ConsecutiveResult & r, const ReportMeta & meta)
{
  constexpr int bins = 100;
  nlohmann::json j{{"test", 1}, {"name", "consecutive"}, {"meta", meta_json(meta)}, {"pairs", pairs_json(r.pairs)},
                   {"queries_per_pair", r.queries_per_pair}};
  j["methods"] = nlohmann::json::array();
  for (const auto & m : r.methods) {
    auto s = summary_json(m);
    s["cumulative"] = cumulative_fraction(m.per_pair, bins);
    j["methods"].push_back(s);
  }

  std::string csv = "frame_a,frame_b,queries";
  for (const auto & m : r.methods) csv += "," + m.name;
  csv += "\n";
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    csv += std::to_string(r.pairs[i].first) + "," + std::to_string(r.pairs[i].second) + "," +
           std::to_string(r.queries_per_pair[i]);
    for (const auto & m : r.methods) csv += "," + num(m.per_pair[i]);
    csv += "\n";
  }
  write_text(dir / "test1_pairs.csv", csv);

  std::string cum = "percentile";
  for (const auto & m : r.methods) cum += "," + m.name;
  cum += "\n";
  std::vector<std::vector<double>> curves;
  for (const auto & m : r.methods) curves.push_back(cumulative_fraction(m.per_pair, bins));
  for (int b = 0; b < bins; ++b) {
    cum += num(100.0 * (b + 1) / bins);
    for (const auto & c : curves) cum += "," + num(c[static_cast<std::size_t>(b)]);
    cum += "\n";
  }
  write_text(dir / "test1_cumulative.csv", cum);

  std::string table = "method,mean,std\n";
  for (const auto & m : r.methods) table += m.name + "," + num(m.mean) + "," + num(m.stddev) + "\n";
  write_text(dir / "test1_summary.csv", table);
  write_text(dir / "test1.json", j.dump(2) + "\n");
  return j;
}

nlohmann::json write_cross_report(const std::filesystem::path & dir, const CrossResult & r, const ReportMeta & meta)
{
  nlohmann::json j{{"test", 2}, {"name", "cross"}, {"meta", meta_json(meta)}};
  j["cells"] = nlohmann::json::array();
  for (const auto & c : r.cells) {
    nlohmann::json cell{{"background", c.same_background ? "same" : "different"}, {"split", split_name(c.split)},
                        {"pairs", pairs_json(c.pairs)}};
    cell["methods"] = nlohmann::json::array();
    for (const auto & m : c.methods) cell["methods"].push_back(summary_json(m));
    j["cells"].push_back(cell);
  }
  std::string csv = "method,background,train_train,train_test,test_test\n";
  const std::size_t n_methods = r.cells.empty() ? 0 : r.cells.front().methods.size();
  for (std::size_t m = 0; m < n_methods; ++m) {
    for (bool same : {true, false}) {
      csv += r.cells.front().methods[m].name + "," + (same ? "same" : "different");
      for (const auto & c : r.cells) {
        if (c.same_background == same) csv += "," + num(c.methods[m].mean);
      }
      csv += "\n";
    }
  }
  write_text(dir / "test2_cross.csv", csv);
  write_text(dir / "test2.json", j.dump(2) + "\n");
  return j;
}

nlohmann::json write_pixelwise_report(const std::filesystem::path & dir, const PixelwiseResult & r, const ReportMeta & meta)
{
  nlohmann::json j{{"test", 3}, {"name", "pixelwise"}, {"meta", meta_json(meta)}, {"pairs", pairs_json(r.pairs)},
                   {"bins", r.bins}};
  j["methods"] = nlohmann::json::array();
  for (std::size_t m = 0; m < r.names.size(); ++m) {
    const auto & v = r.percentiles[m];
    auto frac_below = [&](double t) {
      if (v.empty()) return 0.0;
      return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double p) { return p < t; })) / static_cast<double>(v.size());
    };
    j["methods"].push_back({{"name", r.names[m]}, {"pixels", v.size()}, {"histogram", r.histogram[m]},
                            {"cumulative", r.cumulative[m]}, {"fraction_below_1", frac_below(1.0)},
                            {"fraction_below_2", frac_below(2.0)}, {"fraction_below_5", frac_below(5.0)},
                            {"median", median_of(v)}});
  }
  std::string csv = "bin_low,bin_high";
  for (const auto & n : r.names) csv += "," + n + "_count," + n + "_cumulative";
  csv += "\n";
  for (int b = 0; b < r.bins; ++b) {
    csv += num(100.0 * b / r.bins) + "," + num(100.0 * (b + 1) / r.bins);
    for (std::size_t m = 0; m < r.names.size(); ++m) {
      csv += "," + std::to_string(r.histogram[m][static_cast<std::size_t>(b)]) + "," + num(r.cumulative[m][static_cast<std::size_t>(b)]);
    }
    csv += "\n";
  }
  write_text(dir / "test3_pixelwise.csv", csv);
  write_text(dir / "test3.json", j.dump(2) + "\n");
  return j;
}

nlohmann::json write_keypoint_report(const std::filesystem::path & dir, const KeypointResult & r, const ReportMeta & meta)
{
  constexpr int max_px = 30;
  nlohmann::json j{{"test", 4}, {"name", "keypoints"}, {"meta", meta_json(meta)}, {"keypoints", r.matches.size()}};
  j["methods"] = nlohmann::json::array();
  std::vector<std::vector<long>> hist(r.names.size(), std::vector<long>(max_px + 1, 0));
  for (const auto & km : r.matches) {
    for (std::size_t m = 0; m < r.names.size(); ++m) {
      hist[m][static_cast<std::size_t>(std::min(max_px, static_cast<int>(std::floor(km.error[m]))))] += 1;
    }
  }
  for (std::size_t m = 0; m < r.names.size(); ++m) {
    j["methods"].push_back({{"name", r.names[m]}, {"median_error_px", r.median_error[m]},
                            {"mean_error_px", r.mean_error[m]}, {"histogram", hist[m]}});
  }
  std::string csv = "frame_a,frame_b,kp_x,kp_y,gt_x,gt_y";
  for (const auto & n : r.names) csv += "," + n + "_x," + n + "_y," + n + "_error";
  csv += "\n";
  for (const auto & km : r.matches) {
    csv += std::to_string(km.frame_a) + "," + std::to_string(km.frame_b) + "," + std::to_string(km.keypoint.x) + "," +
           std::to_string(km.keypoint.y) + "," + num(km.ground_truth.x) + "," + num(km.ground_truth.y);
    for (std::size_t m = 0; m < r.names.size(); ++m) {
      csv += "," + num(km.found[m].x) + "," + num(km.found[m].y) + "," + num(km.error[m]);
    }
    csv += "\n";
  }
  write_text(dir / "test4_keypoints.csv", csv);
  std::string hcsv = "error_px_low,error_px_high";
  for (const auto & n : r.names) hcsv += "," + n;
  hcsv += "\n";
  for (int b = 0; b <= max_px; ++b) {
    hcsv += std::to_string(b) + "," + (b == max_px ? std::string("inf") : std::to_string(b + 1));
    for (const auto & h : hist) hcsv += "," + std::to_string(h[static_cast<std::size_t>(b)]);
    hcsv += "\n";
  }
  write_text(dir / "test4_histogram.csv", hcsv);
  write_text(dir / "test4.json", j.dump(2) + "\n");
  return j;
}

void write_track_report(const std::filesystem::path & dir, const TrackResult & r)
{
  std::string csv = "frame,point,x,y,gt_x,gt_y\n";
  for (std::size_t f = 0; f < r.positions.size(); ++f) {
    for (std::size_t i = 0; i < r.positions[f].size(); ++i) {
      const auto & g = r.ground_truth[f][i];
      csv += std::to_string(f) + "," + std::to_string(i) + "," + num(r.positions[f][i].x) + "," +
             num(r.positions[f][i].y) + "," + (g ? num(g->x) : "") + "," + (g ? num(g->y) : "") + "\n";
    }
  }
  write_text(dir / "trajectories.csv", csv);
}

}  // namespace flowdesc
