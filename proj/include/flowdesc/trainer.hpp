#ifndef FLOWDESC_TRAINER_HPP_
#define FLOWDESC_TRAINER_HPP_

#include "flowdesc/dataset.hpp"
#include "flowdesc/descnet.hpp"
#include "flowdesc/flowlab.hpp"
#include "flowdesc/optim.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flowdesc
{

struct TrainConfig
{
  int epochs = 10;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;
  bool cosine_decay = false;
  /// Frame pairs whose gradients are averaged into one update.
  int batch = 1;
  std::uint64_t seed = 1;

  FlowBackend flow_backend = FlowBackend::classical;
  ClassicalFlowParams flow_params;
  /// Directory of "<a>_<b>.flo" files for the file backend.
  std::filesystem::path flow_dir;
  bool fb_check = true;
  double fb_tau = kDefaultFbTau;

  MaskSource mask_source = MaskSource::ground_truth;
  double motion_threshold_px = 0.5;

  int n_matches = kDefaultMatches;
  int n_neg = kDefaultNegatives;
  std::uint64_t sample_seed = 0;
  double flip_prob = 0.5;

  LossConfig loss;

  /// Frames [train_begin, train_end) provide the consecutive training pairs; end 0 = all.
  int train_begin = 0;
  int train_end = 0;
  /// Caps the number of training pairs (evenly spaced); 0 = all.
  int max_pairs = 0;

  bool deterministic = true;
  int workers = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig & cfg);

struct StepRecord
{
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  int frame_a = 0;
  int frame_b = 0;
  std::string flip = "none";
  long matches = 0;
  LossTerms loss;
};

struct SkipRecord
{
  std::uint64_t epoch = 0;
  int frame_a = 0;
  int frame_b = 0;
  std::string reason;
};

struct EpochRecord
{
  std::uint64_t epoch = 0;
  long steps = 0;
  long skipped = 0;
  double mean_total = 0.0;
  double mean_match = 0.0;
  double mean_nonmatch = 0.0;
  double wall_s = 0.0;
};

struct TrainLog
{
  std::vector<StepRecord> steps;
  std::vector<SkipRecord> skips;
  std::vector<EpochRecord> epochs;
  double wall_s = 0.0;
};

/// One JSON object per line: step, skip and epoch records in execution order. Wall-clock
/// fields are left out when `include_wall_time` is false.
std::string log_records_jsonl(const TrainLog & log, std::size_t first_epoch, bool include_wall_time);

/// Correspondences of one consecutive frame pair, computed once per run.
struct PreparedPair
{
  int frame_a = 0;
  int frame_b = 0;
  bool usable = false;
  std::string skip_reason;
  ForegroundMask mask_a;
  ForegroundMask mask_b;
  CorrespondenceMap correspondence;
};

/// What the last step actually trained on, after augmentation.
struct StepInputs
{
  MatchSet matches;
  ForegroundMask mask_a;
  ForegroundMask mask_b;
  std::optional<FlipAxis> flip;
};

struct TrainOutputs
{
  /// When set: checkpoints/epoch_NNN.dnc + latest.dnc, train_log.jsonl and flow_cache/.
  std::optional<std::filesystem::path> directory;
};

class TrainingSession
{
public:
  TrainingSession(
    const SequenceDataset & dataset, const NetworkConfig & net_cfg, const TrainConfig & cfg,
    const TrainOutputs & outputs = {});
  /// Continues from `ckpt`; throws ConfigError if the checkpoint does not fit the configs.
  TrainingSession(
    const SequenceDataset & dataset, const Checkpoint & ckpt, const NetworkConfig & net_cfg,
    const TrainConfig & cfg, const TrainOutputs & outputs = {});

  const std::vector<PreparedPair> & pairs() const { return pairs_; }
  const Parameters<float> & parameters() const { return params_; }
  const TrainLog & log() const { return log_; }
  std::uint64_t epoch() const { return epoch_; }
  std::uint64_t steps() const { return step_; }
  const StepInputs & last_inputs() const { return last_inputs_; }

  /// Forward, loss, backward and update on one prepared pair with the matches of `epoch`.
  StepRecord step(std::size_t pair_slot, std::uint64_t epoch);
  EpochRecord run_epoch();
  Checkpoint checkpoint() const;

private:
  void prepare_pairs();
  PreparedPair prepare(int a, int b) const;
  FlowField cached_flow(int a, int b) const;
  StepRecord accumulate(std::size_t pair_slot, std::uint64_t epoch, Gradients<float> & grads);

  const SequenceDataset & dataset_;
  NetworkConfig net_cfg_;
  TrainConfig cfg_;
  TrainOutputs outputs_;
  Parameters<float> params_;
  std::unique_ptr<Optimizer> optimizer_;
  std::vector<PreparedPair> pairs_;
  TrainLog log_;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_ = 0;
  StepInputs last_inputs_;
};

struct TrainResult
{
  Checkpoint checkpoint;
  TrainLog log;
};

TrainResult train(
  const SequenceDataset & dataset, const NetworkConfig & net_cfg, const TrainConfig & cfg,
  const TrainOutputs & outputs = {});

/// Runs `additional_epochs` more epochs after the checkpoint's epoch counter.
TrainResult resume(
  const Checkpoint & ckpt, const SequenceDataset & dataset, const NetworkConfig & net_cfg,
  const TrainConfig & cfg, int additional_epochs, const TrainOutputs & outputs = {});

}  // namespace flowdesc

#endif  // FLOWDESC_TRAINER_HPP_
