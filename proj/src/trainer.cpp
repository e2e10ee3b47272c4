#include "flowdesc/trainer.hpp"

#include "flowdesc/error.hpp"
#include "flowdesc/rng.hpp"
#include "flowdesc/segment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace flowdesc
{

void TrainConfig::validate() const
{
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be non-negative");
  if (batch < 1) throw ConfigError("train.batch must be at least 1");
  if (n_matches < 1) throw ConfigError("sample.n_matches must be at least 1");
  if (n_neg < 0) throw ConfigError("sample.n_neg must be non-negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment.flip_prob must lie in [0, 1]");
  if (!(loss.margin > 0.0)) throw ConfigError("loss.margin must be positive");
  if (fb_tau <= 0.0) throw ConfigError("flow.fb_tau must be positive");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (max_pairs < 0) throw ConfigError("train.max_pairs must be non-negative");
}

nlohmann::json to_json(const TrainConfig & cfg)
{
  return {
    {"epochs", cfg.epochs},
    {"learning_rate", cfg.learning_rate},
    {"optimizer", to_string(cfg.optimizer)},
    {"momentum", cfg.momentum},
    {"cosine_decay", cfg.cosine_decay},
    {"batch", cfg.batch},
    {"seed", cfg.seed},
    {"flow_backend", to_string(cfg.flow_backend)},
    {"pyramid_levels", cfg.flow_params.pyramid_levels},
    {"window", cfg.flow_params.window},
    {"iterations", cfg.flow_params.iterations},
    {"fb_check", cfg.fb_check},
    {"fb_tau", cfg.fb_tau},
    {"mask_source", std::string(to_string(cfg.mask_source))},
    {"motion_threshold_px", cfg.motion_threshold_px},
    {"n_matches", cfg.n_matches},
    {"n_neg", cfg.n_neg},
    {"sample_seed", cfg.sample_seed},
    {"flip_prob", cfg.flip_prob},
    {"loss", to_json(cfg.loss)},
    {"train_begin", cfg.train_begin},
    {"train_end", cfg.train_end},
    {"max_pairs", cfg.max_pairs},
  };
}

namespace
{

nlohmann::json step_json(const StepRecord & r)
{
  return {
    {"type", "step"},        {"epoch", r.epoch},         {"step", r.step},
    {"frame_a", r.frame_a},  {"frame_b", r.frame_b},     {"flip", r.flip},
    {"matches", r.matches},  {"total", r.loss.total},    {"match", r.loss.match},
    {"nonmatch", r.loss.nonmatch}, {"active_negatives", r.loss.active_negatives},
  };
}

nlohmann::json epoch_json(const EpochRecord & r, bool wall)
{
  nlohmann::json j{
    {"type", "epoch"},       {"epoch", r.epoch},           {"steps", r.steps},
    {"skipped", r.skipped},  {"mean_total", r.mean_total}, {"mean_match", r.mean_match},
    {"mean_nonmatch", r.mean_nonmatch},
  };
  if (wall) j["wall_s"] = r.wall_s;
  return j;
}

nlohmann::json skip_json(const SkipRecord & r)
{
  return {{"type", "skip"}, {"epoch", r.epoch}, {"frame_a", r.frame_a}, {"frame_b", r.frame_b},
          {"reason", r.reason}};
}

std::string epoch_dir_name(std::uint64_t epoch)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03llu.dnc", static_cast<unsigned long long>(epoch));
  return buf;
}

OptimizerConfig optimizer_config(const TrainConfig & cfg, std::size_t pairs)
{
  OptimizerConfig o;
  o.kind = cfg.optimizer;
  o.learning_rate = cfg.learning_rate;
  o.momentum = cfg.momentum;
  o.cosine_decay = cfg.cosine_decay;
  const std::size_t updates_per_epoch = (pairs + static_cast<std::size_t>(cfg.batch) - 1) / static_cast<std::size_t>(cfg.batch);
  o.decay_steps = static_cast<std::uint64_t>(cfg.epochs) * updates_per_epoch;
  return o;
}

constexpr std::uint64_t kSampleKey = 0x73616d70;
constexpr std::uint64_t kFlipKey = 0x666c6970;

}  // namespace

std::string log_records_jsonl(const TrainLog & log, std::size_t first_epoch, bool include_wall_time)
{
  std::string out;
  for (const auto & e : log.epochs) {
    if (e.epoch < first_epoch) continue;
    for (const auto & s : log.skips) {
      if (s.epoch == e.epoch) out += skip_json(s).dump() + "\n";
    }
    for (const auto & s : log.steps) {
      if (s.epoch == e.epoch) out += step_json(s).dump() + "\n";
    }
    out += epoch_json(e, include_wall_time).dump() + "\n";
  }
  return out;
}

TrainingSession::TrainingSession(
  const SequenceDataset & dataset, const NetworkConfig & net_cfg, const TrainConfig & cfg,
  const TrainOutputs & outputs)
: dataset_(dataset), net_cfg_(net_cfg), cfg_(cfg), outputs_(outputs)
{
  cfg_.validate();
  net_cfg_.validate();
  if (cfg_.deterministic) cfg_.workers = 1;
  params_ = init_network(net_cfg_);
  prepare_pairs();
  optimizer_ = std::make_unique<Optimizer>(optimizer_config(cfg_, pairs_.size()), params_);
  if (outputs_.directory) {
    std::filesystem::create_directories(*outputs_.directory / "checkpoints");
    std::ofstream(*outputs_.directory / "train_log.jsonl", std::ios::trunc);
  }
}

TrainingSession::TrainingSession(
  const SequenceDataset & dataset, const Checkpoint & ckpt, const NetworkConfig & net_cfg,
  const TrainConfig & cfg, const TrainOutputs & outputs)
: dataset_(dataset), net_cfg_(net_cfg), cfg_(cfg), outputs_(outputs)
{
  cfg_.validate();
  net_cfg_.validate();
  if (cfg_.deterministic) cfg_.workers = 1;
  if (!ckpt.meta.contains("network") || network_config_from_json(ckpt.meta.at("network")) != net_cfg_) {
    throw ConfigError("config mismatch: checkpoint network differs from the configured network");
  }
  if (ckpt.meta.contains("dataset")) {
    const auto & d = ckpt.meta.at("dataset");
    if (d.at("height").get<int>() != dataset.height() || d.at("width").get<int>() != dataset.width()) {
      throw ConfigError("config mismatch: checkpoint was trained on a different frame size");
    }
  }
  params_ = parameters_from_checkpoint(ckpt);
  prepare_pairs();
  optimizer_ = std::make_unique<Optimizer>(optimizer_config(cfg_, pairs_.size()), params_);
  optimizer_->load(ckpt, params_);
  epoch_ = ckpt.epoch;
  step_ = ckpt.step;
  if (outputs_.directory) std::filesystem::create_directories(*outputs_.directory / "checkpoints");
}

FlowField TrainingSession::cached_flow(int a, int b) const
{
  if (cfg_.flow_backend == FlowBackend::file) {
    return read_flow_file(cfg_.flow_dir / (frame_name(a) + "_" + frame_name(b) + ".flo"));
  }
  std::optional<std::filesystem::path> path;
  if (outputs_.directory) {
    const nlohmann::json key{{"dataset", dataset_.id()}, {"levels", cfg_.flow_params.pyramid_levels},
                             {"window", cfg_.flow_params.window}, {"iterations", cfg_.flow_params.iterations}};
    path = *outputs_.directory / "flow_cache" /
           ("classical_" + hex64(fnv1a(key.dump())) + "_" + frame_name(a) + "_" + frame_name(b) + ".flo");
    if (std::filesystem::exists(*path)) {
      auto f = read_flow_file(*path);
      f.backend = FlowBackend::classical;
      return f;
    }
  }
  auto flow = estimate_flow_classical(dataset_.frame(a), dataset_.frame(b), cfg_.flow_params);
  if (path) write_flow_file(*path, flow);
  return flow;
}

PreparedPair TrainingSession::prepare(int a, int b) const
{
  PreparedPair pair;
  pair.frame_a = a;
  pair.frame_b = b;

  FlowField forward;
  std::optional<FlowField> backward;
  if (cfg_.flow_backend == FlowBackend::ground_truth) {
    forward = flow_from_ground_truth(dataset_.ground_truth(a, b));
  } else {
    forward = cached_flow(a, b);
    const bool need_backward = cfg_.fb_check || cfg_.mask_source == MaskSource::motion;
    if (need_backward) {
      if (cfg_.flow_backend == FlowBackend::file &&
          !std::filesystem::exists(cfg_.flow_dir / (frame_name(b) + "_" + frame_name(a) + ".flo"))) {
        if (cfg_.mask_source == MaskSource::motion) {
          throw IoError("motion masks need backward flow files " + frame_name(b) + "_" + frame_name(a) + ".flo");
        }
      } else {
        backward = cached_flow(b, a);
      }
    }
  }

  try {
    if (cfg_.mask_source == MaskSource::motion) {
      pair.mask_a = motion_mask(forward, cfg_.motion_threshold_px);
      pair.mask_b = motion_mask(*backward, cfg_.motion_threshold_px);
    } else {
      pair.mask_a = dataset_.mask(a);
      pair.mask_b = dataset_.mask(b);
    }
  } catch (const EmptyMaskError &) {
    pair.skip_reason = "empty motion mask";
    return pair;
  }
  if (!usable_for_sampling(pair.mask_a, "source frame") || !usable_for_sampling(pair.mask_b, "target frame")) {
    pair.skip_reason = "empty mask";
    return pair;
  }
  if (pair.mask_b.count() < 2) {
    pair.skip_reason = "target mask smaller than 2 pixels";
    return pair;
  }
  const FlowField * bwd = (cfg_.fb_check && backward) ? &*backward : nullptr;
  pair.correspondence = flow_to_correspondence(forward, pair.mask_a, pair.mask_b, bwd, cfg_.fb_tau);
  if (pair.correspondence.valid_count() == 0) {
    pair.skip_reason = "no valid correspondences";
    return pair;
  }
  pair.usable = true;
  return pair;
}

void TrainingSession::prepare_pairs()
{
  const int begin = std::max(0, cfg_.train_begin);
  const int end = cfg_.train_end > 0 ? std::min(cfg_.train_end, dataset_.size()) : dataset_.size();
  std::vector<int> sources;
  for (int a = begin; a + 1 < end; ++a) sources.push_back(a);
  if (sources.empty()) throw ConfigError("training range holds fewer than 2 frames");
  if (cfg_.max_pairs > 0 && static_cast<int>(sources.size()) > cfg_.max_pairs) {
    std::vector<int> picked;
    const double stride = static_cast<double>(sources.size()) / cfg_.max_pairs;
    for (int i = 0; i < cfg_.max_pairs; ++i) picked.push_back(sources[static_cast<std::size_t>(i * stride)]);
    sources = std::move(picked);
  }

  pairs_.assign(sources.size(), {});
  if (cfg_.workers <= 1) {
    for (std::size_t i = 0; i < sources.size(); ++i) pairs_[i] = prepare(sources[i], sources[i] + 1);
  } else {
    dataset_.preload();
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg_.workers));
    for (int w = 0; w < cfg_.workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < sources.size(); i += static_cast<std::size_t>(cfg_.workers)) {
            pairs_[i] = prepare(sources[i], sources[i] + 1);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto & t : pool) t.join();
    for (auto & e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  if (std::none_of(pairs_.begin(), pairs_.end(), [](const PreparedPair & p) { return p.usable; })) {
    throw Error("all training pairs were skipped (no valid correspondences)");
  }
}

StepRecord TrainingSession::accumulate(std::size_t pair_slot, std::uint64_t epoch, Gradients<float> & grads)
{
  const auto & pair = pairs_.at(pair_slot);
  if (!pair.usable) throw Error("pair " + std::to_string(pair.frame_a) + " is not usable: " + pair.skip_reason);

  const std::uint64_t seed =
    derive_seed(cfg_.seed, {kSampleKey, cfg_.sample_seed, epoch, static_cast<std::uint64_t>(pair.frame_a)});
  StepInputs in;
  in.matches = sample_matches(pair.correspondence, pair.mask_b, cfg_.n_matches, cfg_.n_neg, seed);
  in.mask_a = pair.mask_a;

  Rng rng(derive_seed(seed, {kFlipKey}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool flip = cfg_.flip_prob > 0.0 && coin(rng) < cfg_.flip_prob;
  const ImageFrame * frame_b = &dataset_.frame(pair.frame_b);
  ImageFrame flipped;
  if (flip) {
    in.flip = coin(rng) < 0.5 ? FlipAxis::horizontal : FlipAxis::vertical;
    auto res = augment_flip(*frame_b, pair.mask_b, in.matches, *in.flip);
    flipped = std::move(res.frame);
    in.mask_b = std::move(res.mask);
    in.matches = std::move(res.matches);
    frame_b = &flipped;
  } else {
    in.mask_b = pair.mask_b;
  }

  ForwardTrace<float> trace_a;
  ForwardTrace<float> trace_b;
  const auto fa = forward(params_, dataset_.frame(pair.frame_a), &trace_a);
  const auto fb = forward(params_, *frame_b, &trace_b);
  Planar<float> ga(fa.channels(), fa.height, fa.width);
  Planar<float> gb(fb.channels(), fb.height, fb.width);
  const auto terms = contrastive_loss(fa, fb, in.matches, cfg_.loss, &ga, &gb);
  if (cfg_.batch > 1) {
    const float s = 1.0f / static_cast<float>(cfg_.batch);
    ga.data *= s;
    gb.data *= s;
  }
  backward(params_, trace_a, ga, grads);
  backward(params_, trace_b, gb, grads);

  StepRecord rec;
  rec.epoch = epoch;
  rec.frame_a = pair.frame_a;
  rec.frame_b = pair.frame_b;
  rec.flip = !flip ? "none" : (*in.flip == FlipAxis::horizontal ? "horizontal" : "vertical");
  rec.matches = static_cast<long>(in.matches.size());
  rec.loss = terms;
  last_inputs_ = std::move(in);
  return rec;
}

StepRecord TrainingSession::step(std::size_t pair_slot, std::uint64_t epoch)
{
  auto grads = Gradients<float>::zeros_like(params_);
  auto rec = accumulate(pair_slot, epoch, grads);
  optimizer_->step(params_, grads);
  rec.step = step_++;
  log_.steps.push_back(rec);
  return rec;
}

EpochRecord TrainingSession::run_epoch()
{
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t first_step = log_.steps.size();
  const std::size_t first_skip = log_.skips.size();
  EpochRecord er;
  er.epoch = epoch_;

  auto grads = Gradients<float>::zeros_like(params_);
  int pending = 0;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (!pairs_[i].usable) {
      log_.skips.push_back({epoch_, pairs_[i].frame_a, pairs_[i].frame_b, pairs_[i].skip_reason});
      ++er.skipped;
      continue;
    }
    auto rec = accumulate(i, epoch_, grads);
    rec.step = step_++;
    log_.steps.push_back(rec);
    if (++pending == cfg_.batch) {
      optimizer_->step(params_, grads);
      grads = Gradients<float>::zeros_like(params_);
      pending = 0;
    }
  }
  if (pending > 0) optimizer_->step(params_, grads);

  for (std::size_t i = first_step; i < log_.steps.size(); ++i) {
    er.mean_total += log_.steps[i].loss.total;
    er.mean_match += log_.steps[i].loss.match;
    er.mean_nonmatch += log_.steps[i].loss.nonmatch;
  }
  er.steps = static_cast<long>(log_.steps.size() - first_step);
  if (er.steps > 0) {
    er.mean_total /= static_cast<double>(er.steps);
    er.mean_match /= static_cast<double>(er.steps);
    er.mean_nonmatch /= static_cast<double>(er.steps);
  }
  er.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_.wall_s += er.wall_s;
  log_.epochs.push_back(er);
  ++epoch_;

  if (outputs_.directory) {
    const auto ckpt = checkpoint();
    write_checkpoint(*outputs_.directory / "checkpoints" / epoch_dir_name(epoch_), ckpt);
    write_checkpoint(*outputs_.directory / "checkpoints" / "latest.dnc", ckpt);
    std::ofstream log(*outputs_.directory / "train_log.jsonl", std::ios::app);
    for (std::size_t i = first_skip; i < log_.skips.size(); ++i) log << skip_json(log_.skips[i]).dump() << "\n";
    for (std::size_t i = first_step; i < log_.steps.size(); ++i) log << step_json(log_.steps[i]).dump() << "\n";
    log << epoch_json(er, !cfg_.deterministic).dump() << "\n";
  }
  return er;
}

Checkpoint TrainingSession::checkpoint() const
{
  auto ckpt = checkpoint_from_parameters(params_);
  ckpt.meta["train"] = to_json(cfg_);
  ckpt.meta["dataset"] = {{"id", dataset_.id()}, {"height", dataset_.height()}, {"width", dataset_.width()},
                          {"frames", dataset_.size()}};
  optimizer_->save(ckpt, params_);
  ckpt.step = step_;
  ckpt.epoch = epoch_;
  ckpt.rng_state = rng_state(Rng(derive_seed(cfg_.seed, {kSampleKey, cfg_.sample_seed, epoch_})));
  return ckpt;
}

TrainResult train(
  const SequenceDataset & dataset, const NetworkConfig & net_cfg, const TrainConfig & cfg,
  const TrainOutputs & outputs)
{
  TrainingSession session(dataset, net_cfg, cfg, outputs);
  for (int e = 0; e < cfg.epochs; ++e) session.run_epoch();
  return {session.checkpoint(), session.log()};
}

TrainResult resume(
  const Checkpoint & ckpt, const SequenceDataset & dataset, const NetworkConfig & net_cfg,
  const TrainConfig & cfg, int additional_epochs, const TrainOutputs & outputs)
{
  if (additional_epochs < 0) throw ConfigError("additional epochs must be non-negative");
  TrainingSession session(dataset, ckpt, net_cfg, cfg, outputs);
  for (int e = 0; e < additional_epochs; ++e) session.run_epoch();
  return {session.checkpoint(), session.log()};
}

}  // namespace flowdesc
