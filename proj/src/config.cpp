#include "flowdesc/config.hpp"

#include "flowdesc/dataset.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/rng.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

extern char ** environ;

namespace flowdesc
{

std::filesystem::path PipelineConfig::dataset_dir() const
{
  return dataset.path.empty() ? output_dir / "dataset" : dataset.path;
}

std::filesystem::path PipelineConfig::flow_dir() const
{
  return flow.dir.empty() ? output_dir / "flow" : flow.dir;
}

std::filesystem::path PipelineConfig::checkpoint_path() const
{
  return eval.checkpoint.empty() ? train_dir() / "checkpoints" / "latest.dnc" : eval.checkpoint;
}

namespace
{

using Handler = std::function<void(const nlohmann::json &)>;

void dispatch(const nlohmann::json & j, const std::string & section, const std::map<std::string, Handler> & handlers)
{
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto & [key, value] : j.items()) {
    const auto it = handlers.find(key);
    const std::string name = section.empty() ? key : section + "." + key;
    if (it == handlers.end()) throw ConfigError("unknown config key '" + name + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception & e) {
      throw ConfigError("bad value for '" + name + "': " + e.what());
    }
  }
}

template <typename T>
Handler set(T & target)
{
  return [&target](const nlohmann::json & v) { target = v.get<T>(); };
}

Handler set_path(std::filesystem::path & target)
{
  return [&target](const nlohmann::json & v) { target = v.get<std::string>(); };
}

MaskSource parse_mask_source(const std::string & s)
{
  if (s == "ground-truth" || s == "ground_truth") return MaskSource::ground_truth;
  if (s == "file") return MaskSource::file;
  if (s == "motion") return MaskSource::motion;
  throw ConfigError("unknown segment.source '" + s + "' (expected ground-truth | file | motion)");
}

template <typename Parse>
auto wrap(const std::string & name, const nlohmann::json & v, Parse && parse)
{
  try {
    return parse(v);
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError("bad value in '" + name + "': " + e.what());
  }
}

}  // namespace

PipelineConfig parse_config(const nlohmann::json & j)
{
  PipelineConfig c;
  bool synth_seed = false;
  bool network_seed = false;
  bool network_size = false;
  dispatch(j, "", {
    {"seed", set(c.seed)},
    {"output_dir", set_path(c.output_dir)},
    {"deterministic", set(c.deterministic)},
    {"workers", set(c.workers)},
    {"dataset", [&](const nlohmann::json & s) {
       dispatch(s, "dataset", {{"path", set_path(c.dataset.path)}, {"train_fraction", set(c.dataset.train_fraction)}});
     }},
    {"synth", [&](const nlohmann::json & s) {
       synth_seed = s.is_object() && s.contains("seed");
       c.synth = wrap("synth", s, synth_config_from_json);
     }},
    {"segment", [&](const nlohmann::json & s) {
       dispatch(s, "segment", {
         {"source", [&](const nlohmann::json & v) { c.segment.source = parse_mask_source(v.get<std::string>()); }},
         {"motion_threshold_px", set(c.segment.motion_threshold_px)},
       });
     }},
    {"flow", [&](const nlohmann::json & s) {
       dispatch(s, "flow", {
         {"backend", [&](const nlohmann::json & v) { c.flow.backend = parse_flow_backend(v.get<std::string>()); }},
         {"pyramid_levels", set(c.flow.params.pyramid_levels)},
         {"window", set(c.flow.params.window)},
         {"iterations", set(c.flow.params.iterations)},
         {"fb_check", set(c.flow.fb_check)},
         {"fb_tau", set(c.flow.fb_tau)},
         {"dir", set_path(c.flow.dir)},
       });
     }},
    {"sample", [&](const nlohmann::json & s) {
       dispatch(s, "sample", {{"n_matches", set(c.sample.n_matches)}, {"n_neg", set(c.sample.n_neg)},
                              {"seed", set(c.sample.seed)}});
     }},
    {"augment", [&](const nlohmann::json & s) { dispatch(s, "augment", {{"flip_prob", set(c.augment.flip_prob)}}); }},
    {"network", [&](const nlohmann::json & s) {
       network_seed = s.is_object() && s.contains("seed");
       network_size = s.is_object() && (s.contains("input_height") || s.contains("input_width"));
       c.network = wrap("network", s, network_config_from_json);
     }},
    {"loss", [&](const nlohmann::json & s) { c.loss = wrap("loss", s, loss_config_from_json); }},
    {"train", [&](const nlohmann::json & s) {
       dispatch(s, "train", {
         {"epochs", set(c.train.epochs)},
         {"learning_rate", set(c.train.learning_rate)},
         {"optimizer", [&](const nlohmann::json & v) { c.train.optimizer = parse_optimizer(v.get<std::string>()); }},
         {"momentum", set(c.train.momentum)},
         {"cosine_decay", set(c.train.cosine_decay)},
         {"batch", set(c.train.batch)},
         {"max_pairs", set(c.train.max_pairs)},
       });
     }},
    {"eval", [&](const nlohmann::json & s) {
       dispatch(s, "eval", {
         {"domain", [&](const nlohmann::json & v) { c.eval.domain = parse_domain(v.get<std::string>()); }},
         {"samples_per_pair", set(c.eval.samples_per_pair)},
         {"n_pairs", set(c.eval.n_pairs)},
         {"cross_pairs_per_cell", set(c.eval.cross_pairs_per_cell)},
         {"histogram_bins", set(c.eval.histogram_bins)},
         {"histogram_pairs", set(c.eval.histogram_pairs)},
         {"keypoint_pairs", set(c.eval.keypoint_pairs)},
         {"patch_radius", set(c.eval.patch_radius)},
         {"checkpoint", set_path(c.eval.checkpoint)},
         {"track_reference", set(c.eval.track_reference)},
         {"track_mask", set(c.eval.track_mask)},
       });
     }},
  });
  if (!synth_seed) c.synth.seed = c.seed;
  if (!network_seed) c.network.seed = c.seed;
  if (!network_size) {
    c.network.input_height = c.synth.height;
    c.network.input_width = c.synth.width;
  }
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (c.eval.samples_per_pair < 0 || c.eval.n_pairs < 0) throw ConfigError("eval sample counts must be non-negative");
  if (c.segment.motion_threshold_px < 0.0) throw ConfigError("segment.motion_threshold_px must be non-negative");
  c.network.validate();
  return c;
}

void apply_overrides(nlohmann::json & j, const std::vector<std::string> & assignments)
{
  const std::string prefix = kEnvPrefix;
  for (const auto & a : assignments) {
    if (a.rfind(prefix, 0) != 0) continue;
    const auto eq = a.find('=');
    if (eq == std::string::npos) continue;
    std::string key = a.substr(prefix.size(), eq - prefix.size());
    const std::string text = a.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &) {
      value = text;
    }
    nlohmann::json * node = &j;
    std::size_t pos = 0;
    while ((pos = key.find("__")) != std::string::npos) {
      const auto part = key.substr(0, pos);
      if (part.empty()) throw ConfigError("malformed override " + a);
      node = &(*node)[part];
      key = key.substr(pos + 2);
    }
    if (key.empty()) throw ConfigError("malformed override " + a);
    (*node)[key] = value;
  }
}

std::vector<std::string> environment_overrides()
{
  std::vector<std::string> out;
  for (char ** e = environ; e && *e; ++e) {
    std::string s(*e);
    if (s.rfind(kEnvPrefix, 0) == 0) out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end());
  return out;
}

PipelineConfig load_config(const std::filesystem::path & path, bool use_environment)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path.string() +
                      "' (expected a JSON object with sections such as synth, flow, network, train, eval)");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (use_environment) apply_overrides(j, environment_overrides());
  return parse_config(j);
}

nlohmann::json to_json(const PipelineConfig & c)
{
  return {
    {"seed", c.seed},
    {"output_dir", c.output_dir.string()},
    {"deterministic", c.deterministic},
    {"workers", c.workers},
    {"dataset", {{"path", c.dataset.path.string()}, {"train_fraction", c.dataset.train_fraction}}},
    {"synth", to_json(c.synth)},
    {"segment", {{"source", std::string(to_string(c.segment.source))}, {"motion_threshold_px", c.segment.motion_threshold_px}}},
    {"flow", {{"backend", to_string(c.flow.backend)}, {"pyramid_levels", c.flow.params.pyramid_levels},
              {"window", c.flow.params.window}, {"iterations", c.flow.params.iterations},
              {"fb_check", c.flow.fb_check}, {"fb_tau", c.flow.fb_tau}, {"dir", c.flow.dir.string()}}},
    {"sample", {{"n_matches", c.sample.n_matches}, {"n_neg", c.sample.n_neg}, {"seed", c.sample.seed}}},
    {"augment", {{"flip_prob", c.augment.flip_prob}}},
    {"network", to_json(c.network)},
    {"loss", to_json(c.loss)},
    {"train", {{"epochs", c.train.epochs}, {"learning_rate", c.train.learning_rate},
               {"optimizer", to_string(c.train.optimizer)}, {"momentum", c.train.momentum},
               {"cosine_decay", c.train.cosine_decay}, {"batch", c.train.batch}, {"max_pairs", c.train.max_pairs}}},
    {"eval", {{"domain", to_string(c.eval.domain)}, {"samples_per_pair", c.eval.samples_per_pair},
              {"n_pairs", c.eval.n_pairs}, {"cross_pairs_per_cell", c.eval.cross_pairs_per_cell},
              {"histogram_bins", c.eval.histogram_bins}, {"histogram_pairs", c.eval.histogram_pairs},
              {"keypoint_pairs", c.eval.keypoint_pairs}, {"patch_radius", c.eval.patch_radius},
              {"checkpoint", c.eval.checkpoint.string()}, {"track_reference", c.eval.track_reference},
              {"track_mask", c.eval.track_mask}}},
  };
}

std::string config_hash(const PipelineConfig & cfg)
{
  // Locations are left out so that relocated runs hash alike.
  auto j = to_json(cfg);
  j.erase("output_dir");
  j["dataset"].erase("path");
  j["flow"].erase("dir");
  j["eval"].erase("checkpoint");
  return hex64(fnv1a(j.dump()));
}

TrainConfig make_train_config(const PipelineConfig & c, const DatasetSplit & split)
{
  TrainConfig t;
  t.epochs = c.train.epochs;
  t.learning_rate = c.train.learning_rate;
  t.optimizer = c.train.optimizer;
  t.momentum = c.train.momentum;
  t.cosine_decay = c.train.cosine_decay;
  t.batch = c.train.batch;
  t.seed = c.seed;
  t.flow_backend = c.flow.backend;
  t.flow_params = c.flow.params;
  t.flow_dir = c.flow_dir();
  t.fb_check = c.flow.fb_check;
  t.fb_tau = c.flow.fb_tau;
  t.mask_source = c.segment.source;
  t.motion_threshold_px = c.segment.motion_threshold_px;
  t.n_matches = c.sample.n_matches;
  t.n_neg = c.sample.n_neg;
  t.sample_seed = c.sample.seed;
  t.flip_prob = c.augment.flip_prob;
  t.loss = c.loss;
  t.train_begin = split.train.begin;
  t.train_end = split.train.end;
  t.max_pairs = c.train.max_pairs;
  t.deterministic = c.deterministic;
  t.workers = c.workers;
  return t;
}

EvalOptions make_eval_options(const PipelineConfig & c)
{
  EvalOptions o;
  o.domain = c.eval.domain;
  o.samples_per_pair = c.eval.samples_per_pair;
  o.border = c.eval.patch_radius;
  o.seed = derive_seed(c.seed, {0x6576616c});
  return o;
}

}  // namespace flowdesc
