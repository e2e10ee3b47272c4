#include "flowdesc/config.hpp"
#include "flowdesc/error.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace flowdesc;
using nlohmann::json;

namespace
{

std::filesystem::path source_dir() { return std::filesystem::path(__FILE__).parent_path().parent_path(); }

}  // namespace

TEST(Config, DefaultsFromEmptyDocument)
{
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.flow.backend, FlowBackend::classical);
  EXPECT_EQ(c.train.epochs, 10);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.train.optimizer, OptimizerKind::adam);
  EXPECT_EQ(c.sample.n_matches, 2500);
  EXPECT_EQ(c.sample.n_neg, 128);
  EXPECT_DOUBLE_EQ(c.augment.flip_prob, 0.5);
  EXPECT_DOUBLE_EQ(c.loss.margin, 0.5);
  EXPECT_EQ(c.network.descriptor_dim, 3);
  EXPECT_EQ(c.eval.domain, DomainMode::full);
  EXPECT_EQ(c.dataset_dir(), std::filesystem::path("runs/default/dataset"));
  EXPECT_EQ(c.checkpoint_path(), std::filesystem::path("runs/default/train/checkpoints/latest.dnc"));
}

TEST(Config, UnknownKeysAndBadTypesRejected)
{
  EXPECT_THROW(parse_config({{"sede", 3}}), ConfigError);
  EXPECT_THROW(parse_config({{"train", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"train", {{"epochs", "ten"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"flow", {{"backend", "flownet2"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"eval", {{"domain", "object"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"network", {{"descriptor_dim", 1}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"workers", 0}}), ConfigError);
}

TEST(Config, SeedsAndSizesFollowGlobals)
{
  const auto c = parse_config({{"seed", 9}, {"synth", {{"height", 64}, {"width", 96}}}});
  EXPECT_EQ(c.synth.seed, 9u);
  EXPECT_EQ(c.network.seed, 9u);
  EXPECT_EQ(c.network.input_height, 64);
  EXPECT_EQ(c.network.input_width, 96);
  const auto d = parse_config({{"seed", 9}, {"synth", {{"seed", 4}}}, {"network", {{"seed", 5}}}});
  EXPECT_EQ(d.synth.seed, 4u);
  EXPECT_EQ(d.network.seed, 5u);
}

TEST(Config, ResolvedJsonRoundTrips)
{
  const auto c = parse_config({{"seed", 3}, {"train", {{"epochs", 4}}}, {"flow", {{"backend", "ground-truth"}}}});
  const auto j = to_json(c);
  const auto back = parse_config(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  const auto other = parse_config({{"seed", 4}, {"train", {{"epochs", 4}}}, {"flow", {{"backend", "ground-truth"}}}});
  EXPECT_NE(config_hash(other), config_hash(c));
  auto moved = c;
  moved.output_dir = "elsewhere/run";
  EXPECT_EQ(config_hash(moved), config_hash(c));
}

TEST(Config, Overrides)
{
  json j{{"train", {{"epochs", 3}}}};
  apply_overrides(j, {"FLOWDESC__train__epochs=7", "FLOWDESC__flow__backend=file", "FLOWDESC__seed=11"});
  const auto c = parse_config(j);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.flow.backend, FlowBackend::file);
  EXPECT_EQ(c.seed, 11u);
  json bad;
  EXPECT_THROW(apply_overrides(bad, {"FLOWDESC__=3"}), ConfigError);
}

TEST(Config, EnvironmentOverridesApplyOnLoad)
{
  const auto path = std::filesystem::temp_directory_path() / "flowdesc_test_env.json";
  std::ofstream(path) << R"({"train": {"epochs": 2}})";
  ::setenv("FLOWDESC__train__epochs", "5", 1);
  EXPECT_EQ(load_config(path).train.epochs, 5);
  EXPECT_EQ(load_config(path, false).train.epochs, 2);
  ::unsetenv("FLOWDESC__train__epochs");
  EXPECT_THROW(load_config(path.parent_path() / "flowdesc_missing.json"), ConfigError);
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, ShippedConfigsParse)
{
  for (const auto & e : std::filesystem::directory_iterator(source_dir() / "configs")) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path(), false)) << e.path();
  }
  const auto desk = load_config(source_dir() / "configs/desk.json", false);
  EXPECT_EQ(desk.synth.height, 128);
  EXPECT_EQ(desk.synth.frames, 200);
  EXPECT_EQ(desk.network.descriptor_dim, 3);
  EXPECT_EQ(desk.network.encoder_channels, (std::vector<int>{16, 32, 64}));
  EXPECT_EQ(desk.train.epochs, 10);
  EXPECT_EQ(desk.flow.backend, FlowBackend::ground_truth);
}

TEST(Config, TrainAndEvalViews)
{
  const auto c = parse_config({{"seed", 6}, {"workers", 3}, {"deterministic", false}});
  const auto split = split_dataset(10, 0.5);
  const auto t = make_train_config(c, split);
  EXPECT_EQ(t.train_begin, 0);
  EXPECT_EQ(t.train_end, 5);
  EXPECT_EQ(t.seed, 6u);
  EXPECT_EQ(t.workers, 3);
  EXPECT_FALSE(t.deterministic);
  const auto o = make_eval_options(c);
  EXPECT_EQ(o.border, 8);
  EXPECT_EQ(split.test.begin, 5);
  EXPECT_EQ(split.test.end, 10);
  EXPECT_THROW(split_dataset(3, 0.5), ConfigError);
}
