#ifndef FLOWDESC_TOOLS_COMMANDS_HPP_
#define FLOWDESC_TOOLS_COMMANDS_HPP_

#include "flowdesc/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowdesc::cli
{

struct CommonOptions
{
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> output_dir;
  /// section.key=value assignments, value parsed as JSON (plain strings allowed).
  std::vector<std::string> set;
};

/// Config file, then FLOWDESC__ environment overrides, then --set, then dedicated flags.
PipelineConfig resolve_config(const CommonOptions & opts);

int cmd_gen(const PipelineConfig & cfg);

struct FlowOptions
{
  std::optional<std::filesystem::path> convert_in;
  std::optional<std::filesystem::path> convert_out;
};
int cmd_flow(const PipelineConfig & cfg, const FlowOptions & opts);

struct TrainOptions
{
  std::optional<std::filesystem::path> resume;
};
int cmd_train(const PipelineConfig & cfg, const TrainOptions & opts);

struct EvalCliOptions
{
  std::string test = "all";
  std::optional<std::filesystem::path> checkpoint;
};
int cmd_eval(const PipelineConfig & cfg, const EvalCliOptions & opts);

struct TrackOptions
{
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> points;
  std::optional<std::string> grid;
  std::optional<int> reference;
  bool mask = false;
};
int cmd_track(const PipelineConfig & cfg, const TrackOptions & opts);

/// "x y" or "x,y" per line; '#' starts a comment. Throws ConfigError on malformed input.
std::vector<PixelCoord> read_points_file(const std::filesystem::path & path);

}  // namespace flowdesc::cli

#endif  // FLOWDESC_TOOLS_COMMANDS_HPP_
