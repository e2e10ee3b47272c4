#include "flowdesc/dataset.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/image_io.hpp"
#include "flowdesc/optim.hpp"
#include "flowdesc/synthgen.hpp"
#include "flowdesc/trainer.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace flowdesc;

namespace
{

std::filesystem::path temp_dir(const std::string & name)
{
  auto p = std::filesystem::temp_directory_path() / ("flowdesc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path make_sequence(const std::string & name, int frames, bool still)
{
  const auto dir = temp_dir(name);
  SynthConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.frames = frames;
  cfg.seed = 5;
  cfg.background_block = 3;
  if (still) cfg.motion = MotionMode::constant;
  generate_sequence(cfg, dir);
  return dir;
}

NetworkConfig small_net()
{
  NetworkConfig cfg;
  cfg.descriptor_dim = 3;
  cfg.encoder_channels = {8, 16};
  cfg.encoder_blocks = {1, 1};
  cfg.decoder_stages = 2;
  cfg.input_height = cfg.input_width = 32;
  cfg.seed = 2;
  return cfg;
}

TrainConfig small_train()
{
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.flow_backend = FlowBackend::ground_truth;
  cfg.n_matches = 200;
  cfg.n_neg = 16;
  cfg.seed = 3;
  return cfg;
}

std::vector<std::uint8_t> blob_bytes(const Parameters<float> & p)
{
  std::vector<std::uint8_t> out;
  for (const auto & b : p.blobs) {
    const auto * d = reinterpret_cast<const std::uint8_t *>(b.value.data());
    out.insert(out.end(), d, d + b.value.size() * sizeof(float));
  }
  return out;
}

}  // namespace

TEST(TrainConfig, Validation)
{
  auto cfg = small_train();
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_train();
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_train();
  cfg.flip_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_optimizer("adaptive-moment"), OptimizerKind::adam);
  EXPECT_EQ(parse_optimizer("momentum-sgd"), OptimizerKind::momentum_sgd);
  EXPECT_THROW(parse_optimizer("lbfgs"), ConfigError);
}

TEST(Optimizer, AdamFirstStepIsLearningRateTimesSign)
{
  Parameters<float> p;
  p.blobs.push_back({"w", {3}, Vector<float>::Zero(3)});
  OptimizerConfig oc;
  oc.learning_rate = 0.01;
  Optimizer opt(oc, p);
  Gradients<float> g;
  g.blobs.push_back((Vector<float>(3) << 2.0f, -0.5f, 0.0f).finished());
  opt.step(p, g);
  EXPECT_NEAR(p.blobs[0].value[0], -0.01f, 1e-6f);
  EXPECT_NEAR(p.blobs[0].value[1], 0.01f, 1e-6f);
  EXPECT_EQ(p.blobs[0].value[2], 0.0f);
}

TEST(Optimizer, MomentumSgdAccumulates)
{
  Parameters<float> p;
  p.blobs.push_back({"w", {1}, Vector<float>::Zero(1)});
  OptimizerConfig oc;
  oc.kind = OptimizerKind::momentum_sgd;
  oc.learning_rate = 0.1;
  oc.momentum = 0.5;
  Optimizer opt(oc, p);
  Gradients<float> g;
  g.blobs.push_back(Vector<float>::Ones(1));
  opt.step(p, g);
  opt.step(p, g);
  // v1 = 1, v2 = 0.5 + 1 = 1.5; w = -0.1 * (1 + 1.5).
  EXPECT_NEAR(p.blobs[0].value[0], -0.25f, 1e-6f);
}

int count_increases(const std::vector<double> & v)
{
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) n += v[i] > v[i - 1];
  return n;
}

TEST(Trainer, RepeatedStepsOnIdentityPair)
{
  const auto dir = make_sequence("train_still", 2, true);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.flip_prob = 0.0;
  TrainingSession session(ds, small_net(), cfg);
  ASSERT_EQ(session.pairs().size(), 1u);
  std::vector<double> total;
  for (int i = 0; i < 50; ++i) {
    const auto rec = session.step(0, 0);
    // Identical frames give identical descriptors, so every positive already has D = 0.
    EXPECT_EQ(rec.loss.match, 0.0);
    total.push_back(rec.loss.total);
  }
  EXPECT_LE(count_increases(total), 5);
  EXPECT_LT(total.back(), total.front());
  EXPECT_EQ(session.steps(), 50u);
}

TEST(Trainer, RepeatedStepsReduceMatchLoss)
{
  const auto dir = temp_dir("train_shift");
  SynthConfig sc;
  sc.height = sc.width = 32;
  sc.frames = 2;
  sc.motion = MotionMode::constant;
  sc.translation_step = {2.0, 1.0};
  generate_sequence(sc, dir);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.flip_prob = 0.0;
  TrainingSession session(ds, small_net(), cfg);
  std::vector<double> match;
  for (int i = 0; i < 50; ++i) match.push_back(session.step(0, 0).loss.match);
  EXPECT_LE(count_increases(match), 5);
  EXPECT_LT(match.back(), match.front());
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged)
{
  const auto dir = make_sequence("train_zero_lr", 4, false);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const auto before = blob_bytes(init_network(small_net()));
  const auto result = train(ds, small_net(), cfg);
  EXPECT_TRUE(blob_bytes(parameters_from_checkpoint(result.checkpoint)) == before);
  EXPECT_EQ(result.log.steps.size(), 3u);
}

TEST(Trainer, LossTermsAndStepAccounting)
{
  const auto dir = make_sequence("train_accounting", 5, false);
  // An empty mask makes two pairs unusable; they are logged, not counted as steps.
  write_png_gray8(dir / "masks/000002.png", Plane<std::uint8_t>::Zero(32, 32));
  const auto ds = SequenceDataset::open(dir);
  const auto result = train(ds, small_net(), small_train());
  EXPECT_EQ(result.log.steps.size(), 4u);
  EXPECT_EQ(result.log.skips.size(), 4u);
  for (const auto & s : result.log.steps) {
    EXPECT_NEAR(s.loss.total, s.loss.match + s.loss.nonmatch, 1e-6);
    EXPECT_NE(s.frame_a, 2);
    EXPECT_NE(s.frame_b, 2);
  }
  for (const auto & e : result.log.epochs) {
    EXPECT_EQ(e.steps, 2);
    EXPECT_EQ(e.skipped, 2);
  }
  EXPECT_EQ(result.checkpoint.step, 4u);
}

TEST(Trainer, AllPairsSkippedIsAnError)
{
  const auto dir = make_sequence("train_all_skipped", 2, false);
  write_png_gray8(dir / "masks/000000.png", Plane<std::uint8_t>::Zero(32, 32));
  const auto ds = SequenceDataset::open(dir);
  EXPECT_THROW(train(ds, small_net(), small_train()), Error);
}

TEST(Trainer, FlipAugmentationKeepsSamplesOnMasks)
{
  const auto dir = make_sequence("train_flip", 4, false);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.flip_prob = 1.0;
  TrainingSession session(ds, small_net(), cfg);
  int flipped = 0;
  for (std::size_t slot = 0; slot < session.pairs().size(); ++slot) {
    for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
      session.step(slot, epoch);
      const auto & in = session.last_inputs();
      ASSERT_TRUE(in.flip.has_value());
      ++flipped;
      for (std::size_t i = 0; i < in.matches.size(); ++i) {
        EXPECT_TRUE(in.mask_a.contains(in.matches.source[i]));
        EXPECT_TRUE(in.mask_b.contains(in.matches.target[i]));
        for (int k = 0; k < in.matches.n_neg; ++k) EXPECT_TRUE(in.mask_b.contains(in.matches.negative(i, k)));
      }
    }
  }
  EXPECT_EQ(flipped, 9);
}

TEST(Trainer, DeterministicOutputs)
{
  const auto dir = make_sequence("train_det", 4, false);
  const auto ds = SequenceDataset::open(dir);
  const auto a = temp_dir("train_det_a");
  const auto b = temp_dir("train_det_b");
  train(ds, small_net(), small_train(), {a});
  train(ds, small_net(), small_train(), {b});
  EXPECT_TRUE(std::filesystem::exists(a / "checkpoints/epoch_001.dnc"));
  EXPECT_TRUE(std::filesystem::exists(a / "checkpoints/epoch_002.dnc"));
  EXPECT_TRUE(slurp(a / "checkpoints/latest.dnc") == slurp(b / "checkpoints/latest.dnc"));
  EXPECT_TRUE(slurp(a / "train_log.jsonl") == slurp(b / "train_log.jsonl"));
  EXPECT_TRUE(slurp(a / "checkpoints/latest.dnc") == slurp(a / "checkpoints/epoch_002.dnc"));
}

TEST(Trainer, ResumeWithZeroEpochsIsIdentity)
{
  const auto dir = make_sequence("train_resume0", 4, false);
  const auto ds = SequenceDataset::open(dir);
  const auto first = train(ds, small_net(), small_train());
  const auto again = resume(first.checkpoint, ds, small_net(), small_train(), 0);
  EXPECT_TRUE(serialize_checkpoint(again.checkpoint) == serialize_checkpoint(first.checkpoint));
}

TEST(Trainer, SplitTrainingMatchesStraightTraining)
{
  const auto dir = make_sequence("train_split", 4, false);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.epochs = 10;
  const auto straight = train(ds, small_net(), cfg);
  cfg.epochs = 5;
  const auto half = train(ds, small_net(), cfg);
  cfg.epochs = 10;
  const auto rest = resume(half.checkpoint, ds, small_net(), cfg, 5);
  EXPECT_TRUE(blob_bytes(parameters_from_checkpoint(rest.checkpoint)) == blob_bytes(parameters_from_checkpoint(straight.checkpoint)));
  EXPECT_EQ(rest.checkpoint.step, straight.checkpoint.step);
  EXPECT_EQ(rest.checkpoint.epoch, 10u);
  ASSERT_EQ(rest.log.steps.size(), 15u);
  for (std::size_t i = 0; i < 15; ++i) {
    EXPECT_EQ(rest.log.steps[i].loss.total, straight.log.steps[15 + i].loss.total);
  }
}

TEST(Trainer, ResumeRejectsDifferentNetwork)
{
  const auto dir = make_sequence("train_mismatch", 3, false);
  const auto ds = SequenceDataset::open(dir);
  auto cfg = small_train();
  cfg.epochs = 1;
  const auto first = train(ds, small_net(), cfg);
  auto other = small_net();
  other.descriptor_dim = 4;
  EXPECT_THROW(resume(first.checkpoint, ds, other, cfg, 1), ConfigError);
}

TEST(Trainer, ClassicalFlowIsCached)
{
  const auto dir = make_sequence("train_flowcache", 3, false);
  const auto ds = SequenceDataset::open(dir);
  const auto out = temp_dir("train_flowcache_out");
  auto cfg = small_train();
  cfg.epochs = 1;
  cfg.flow_backend = FlowBackend::classical;
  const auto a = train(ds, small_net(), cfg, {out});
  int cached = 0;
  for (const auto & e : std::filesystem::directory_iterator(out / "flow_cache")) cached += e.is_regular_file();
  EXPECT_GE(cached, 2);
  const auto b = train(ds, small_net(), cfg, {out});
  EXPECT_TRUE(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
}

TEST(Trainer, LogIsLineDelimitedJson)
{
  const auto dir = make_sequence("train_log", 3, false);
  const auto ds = SequenceDataset::open(dir);
  const auto result = train(ds, small_net(), small_train());
  std::istringstream lines(log_records_jsonl(result.log, 0, false));
  std::string line;
  int steps = 0, epochs = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_FALSE(j.contains("wall_s"));
    const auto type = j.at("type").get<std::string>();
    steps += type == "step";
    epochs += type == "epoch";
  }
  EXPECT_EQ(steps, 4);
  EXPECT_EQ(epochs, 2);
}
