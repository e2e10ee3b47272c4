#ifndef FLOWDESC_DATASET_HPP_
#define FLOWDESC_DATASET_HPP_

#include "flowdesc/mask.hpp"
#include "flowdesc/synthgen.hpp"
#include "flowdesc/tensor.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowdesc
{

/// A frame sequence on disk: frames/*.png, optional masks/*.png, optional gt/*.gtm and an
/// optional motion.json (synthetic sequences). Frames and masks are loaded lazily and cached.
class SequenceDataset
{
public:
  static SequenceDataset open(const std::filesystem::path & root);

  const std::filesystem::path & root() const { return root_; }
  int size() const { return static_cast<int>(frame_files_.size()); }
  int height() const { return height_; }
  int width() const { return width_; }
  /// Content identifier: FNV-1a of motion.json when present, else of the frame listing.
  const std::string & id() const { return id_; }

  const ImageFrame & frame(int index) const;
  bool has_masks() const { return !mask_files_.empty(); }
  /// Synthetic masks keep the ground-truth provenance; any other masks/ directory is "file".
  const ForegroundMask & mask(int index) const;

  bool has_poses() const { return !poses_.empty(); }
  const MotionFrame & motion(int index) const;
  /// Background label of a frame, -1 when unknown.
  int background(int index) const;
  int background_count() const { return background_count_; }

  bool has_ground_truth(int source, int target) const;
  /// Stored gt/ file when one exists for the pair, otherwise recomputed from the poses.
  GroundTruthMap ground_truth(int source, int target) const;

  /// Loads every frame and mask so that later const access is read-only.
  void preload() const;

private:
  std::filesystem::path root_;
  std::vector<std::filesystem::path> frame_files_;
  std::vector<std::filesystem::path> mask_files_;
  std::vector<MotionFrame> poses_;
  MaskSource mask_source_ = MaskSource::file;
  int background_count_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::string id_;
  mutable std::vector<std::shared_ptr<const ImageFrame>> frames_;
  mutable std::vector<std::shared_ptr<const ForegroundMask>> masks_;
};

/// Index ranges of the train / test split: the first floor(n · train_fraction) frames train.
struct SplitRange
{
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
  bool contains(int i) const { return i >= begin && i < end; }
};

struct DatasetSplit
{
  SplitRange train;
  SplitRange test;
};

DatasetSplit split_dataset(int frame_count, double train_fraction);

std::uint64_t fnv1a(const void * data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string & s, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace flowdesc

#endif  // FLOWDESC_DATASET_HPP_
