#ifndef FLOWDESC_CONFIG_HPP_
#define FLOWDESC_CONFIG_HPP_

#include "flowdesc/descnet.hpp"
#include "flowdesc/evalharness.hpp"
#include "flowdesc/flowlab.hpp"
#include "flowdesc/synthgen.hpp"
#include "flowdesc/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace flowdesc
{

/// Prefix of environment overrides: FLOWDESC__<section>__<key>=<json value>.
inline constexpr const char * kEnvPrefix = "FLOWDESC__";

struct PipelineConfig
{
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";
  bool deterministic = true;
  int workers = 1;

  struct Dataset
  {
    /// Empty means <output_dir>/dataset.
    std::filesystem::path path;
    double train_fraction = 0.5;
  } dataset;

  SynthConfig synth;

  struct Segment
  {
    MaskSource source = MaskSource::ground_truth;
    double motion_threshold_px = 0.5;
  } segment;

  struct Flow
  {
    FlowBackend backend = FlowBackend::classical;
    ClassicalFlowParams params;
    bool fb_check = true;
    double fb_tau = kDefaultFbTau;
    /// Flow files for the file backend; empty means <output_dir>/flow.
    std::filesystem::path dir;
  } flow;

  struct Sample
  {
    int n_matches = kDefaultMatches;
    int n_neg = kDefaultNegatives;
    std::uint64_t seed = 0;
  } sample;

  struct Augment
  {
    double flip_prob = 0.5;
  } augment;

  NetworkConfig network;
  LossConfig loss;

  struct Train
  {
    int epochs = 10;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;
    bool cosine_decay = false;
    int batch = 1;
    int max_pairs = 0;
  } train;

  struct Eval
  {
    DomainMode domain = DomainMode::full;
    int samples_per_pair = 0;
    int n_pairs = 100;
    int cross_pairs_per_cell = 20;
    int histogram_bins = 100;
    int histogram_pairs = 10;
    int keypoint_pairs = 10;
    int patch_radius = 8;
    /// Empty means <output_dir>/train/checkpoints/latest.dnc.
    std::filesystem::path checkpoint;
    int track_reference = 0;
    bool track_mask = false;
  } eval;

  std::filesystem::path dataset_dir() const;
  std::filesystem::path flow_dir() const;
  std::filesystem::path train_dir() const { return output_dir / "train"; }
  std::filesystem::path eval_dir() const { return output_dir / "eval"; }
  std::filesystem::path track_dir() const { return output_dir / "track"; }
  std::filesystem::path checkpoint_path() const;
};

/// Parses a config document; unknown keys and ill-typed values throw ConfigError. Seeds and
/// the network input size that are not given explicitly follow the global seed and the
/// synthetic frame size.
PipelineConfig parse_config(const nlohmann::json & j);

/// Reads the file, applies environment overrides, then parses.
PipelineConfig load_config(const std::filesystem::path & path, bool use_environment = true);

/// Applies FLOWDESC__section__key overrides found in `environ`-style entries.
void apply_overrides(nlohmann::json & j, const std::vector<std::string> & assignments);
std::vector<std::string> environment_overrides();

/// Fully resolved config, every key present.
nlohmann::json to_json(const PipelineConfig & cfg);
/// FNV-1a of the resolved config's compact dump without file locations, as 16 hex digits.
std::string config_hash(const PipelineConfig & cfg);

TrainConfig make_train_config(const PipelineConfig & cfg, const DatasetSplit & split);
EvalOptions make_eval_options(const PipelineConfig & cfg);

}  // namespace flowdesc

#endif  // FLOWDESC_CONFIG_HPP_
