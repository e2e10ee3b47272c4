#ifndef FLOWDESC_SEGMENT_HPP_
#define FLOWDESC_SEGMENT_HPP_

#include "flowdesc/mask.hpp"

#include <filesystem>
#include <optional>

namespace flowdesc
{

struct FlowField;

/// Connectivity used by `motion_mask` component analysis.
inline constexpr int kMaskConnectivity = 4;

/// Loads a single-channel 8-bit mask; pixels > 127 are foreground. RGB files are reduced to
/// luminance first. When `expected_size` is given (height, width), a mismatch throws ShapeError.
/// An all-background file is returned as-is; callers skip such frames (see `usable_for_sampling`).
ForegroundMask load_mask(
  const std::filesystem::path & path,
  std::optional<std::pair<int, int>> expected_size = std::nullopt);

void save_mask(const std::filesystem::path & path, const ForegroundMask & mask);

/// Largest 4-connected component of pixels whose flow magnitude exceeds `threshold_px`.
/// Throws EmptyMaskError when no pixel does.
ForegroundMask motion_mask(const FlowField & flow, double threshold_px);

/// False for empty masks; logs a warning naming `what`.
bool usable_for_sampling(const ForegroundMask & mask, const char * what);

}  // namespace flowdesc

#endif  // FLOWDESC_SEGMENT_HPP_
