#include "flowdesc/dataset.hpp"

#include "flowdesc/error.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/segment.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flowdesc
{

std::uint64_t fnv1a(const void * data, std::size_t size, std::uint64_t h)
{
  const auto * p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string & s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace
{

std::vector<std::filesystem::path> list_png(const std::filesystem::path & dir)
{
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto & e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path gt_path(const std::filesystem::path & root, int s, int t)
{
  return root / "gt" / (frame_name(s) + "_" + frame_name(t) + ".gtm");
}

}  // namespace

SequenceDataset SequenceDataset::open(const std::filesystem::path & root)
{
  SequenceDataset ds;
  ds.root_ = root;
  ds.frame_files_ = list_png(root / "frames");
  if (ds.frame_files_.empty()) throw IoError("no frames found under " + (root / "frames").string());
  ds.mask_files_ = list_png(root / "masks");
  if (!ds.mask_files_.empty() && ds.mask_files_.size() != ds.frame_files_.size()) {
    throw IoError("masks/ and frames/ hold different numbers of files");
  }

  const auto motion_file = root / "motion.json";
  if (std::filesystem::exists(motion_file)) {
    std::ifstream in(motion_file);
    std::stringstream text;
    text << in.rdbuf();
    ds.id_ = hex64(fnv1a(text.str()));
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(text.str());
    } catch (const nlohmann::json::exception & e) {
      throw IoError("malformed motion.json: " + std::string(e.what()));
    }
    const auto script = motion_from_json(meta.at("frames"));
    if (script.frames.size() != ds.frame_files_.size()) {
      throw IoError("motion.json frame count does not match frames/");
    }
    ds.poses_ = script.frames;
    ds.height_ = meta.at("height").get<int>();
    ds.width_ = meta.at("width").get<int>();
    ds.background_count_ = static_cast<int>(meta.at("backgrounds").size());
    ds.mask_source_ = MaskSource::ground_truth;
  } else {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto & f : ds.frame_files_) {
      h = fnv1a(f.filename().string(), h);
      const auto size = std::filesystem::file_size(f);
      h = fnv1a(&size, sizeof size, h);
    }
    ds.id_ = hex64(h);
    const auto & first = ds.frame(0);
    ds.height_ = first.height;
    ds.width_ = first.width;
  }
  ds.frames_.resize(ds.frame_files_.size());
  ds.masks_.resize(ds.frame_files_.size());
  return ds;
}

const ImageFrame & SequenceDataset::frame(int index) const
{
  if (index < 0 || index >= size()) throw ShapeError("frame index out of range");
  if (frames_.size() != frame_files_.size()) frames_.resize(frame_files_.size());
  auto & slot = frames_[static_cast<std::size_t>(index)];
  if (!slot) {
    auto img = read_png(frame_files_[static_cast<std::size_t>(index)]);
    if (img.channels() == 1) {
      ImageFrame rgb(3, img.height, img.width);
      for (int c = 0; c < 3; ++c) rgb.data.row(c) = img.data.row(0);
      img = std::move(rgb);
    }
    if (height_ != 0 && (img.height != height_ || img.width != width_)) {
      throw ShapeError("frame " + std::to_string(index) + " has a different size");
    }
    slot = std::make_shared<const ImageFrame>(std::move(img));
  }
  return *slot;
}

const ForegroundMask & SequenceDataset::mask(int index) const
{
  if (!has_masks()) throw IoError("dataset has no masks/ directory");
  if (index < 0 || index >= size()) throw ShapeError("mask index out of range");
  auto & slot = masks_[static_cast<std::size_t>(index)];
  if (!slot) {
    auto m = load_mask(mask_files_[static_cast<std::size_t>(index)], std::pair{height_, width_});
    m.source = mask_source_;
    slot = std::make_shared<const ForegroundMask>(std::move(m));
  }
  return *slot;
}

const MotionFrame & SequenceDataset::motion(int index) const
{
  if (!has_poses()) throw IoError("dataset has no motion.json");
  if (index < 0 || index >= size()) throw ShapeError("frame index out of range");
  return poses_[static_cast<std::size_t>(index)];
}

int SequenceDataset::background(int index) const
{
  return has_poses() ? motion(index).background : -1;
}

bool SequenceDataset::has_ground_truth(int source, int target) const
{
  if (source < 0 || target < 0 || source >= size() || target >= size()) return false;
  return std::filesystem::exists(gt_path(root_, source, target)) || (has_poses() && has_masks());
}

GroundTruthMap SequenceDataset::ground_truth(int source, int target) const
{
  const auto path = gt_path(root_, source, target);
  if (std::filesystem::exists(path)) {
    auto gt = read_ground_truth(path);
    gt.source = source;
    gt.target = target;
    return gt;
  }
  if (!has_poses() || !has_masks()) {
    throw IoError("no ground truth for pair " + frame_name(source) + "_" + frame_name(target));
  }
  auto gt = ground_truth_map(motion(source).pose, motion(target).pose, mask(source), mask(target));
  gt.source = source;
  gt.target = target;
  return gt;
}

void SequenceDataset::preload() const
{
  for (int i = 0; i < size(); ++i) {
    frame(i);
    if (has_masks()) mask(i);
  }
}

DatasetSplit split_dataset(int frame_count, double train_fraction)
{
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("dataset.train_fraction must lie in (0, 1)");
  }
  const int n_train = static_cast<int>(std::floor(frame_count * train_fraction));
  if (n_train < 2 || frame_count - n_train < 2) {
    throw ConfigError("train/test split leaves fewer than 2 frames on one side");
  }
  return {{0, n_train}, {n_train, frame_count}};
}

}  // namespace flowdesc
