#include "commands.hpp"

#include "flowdesc/dataset.hpp"
#include "flowdesc/error.hpp"
#include "flowdesc/evalharness.hpp"
#include "flowdesc/trainer.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace flowdesc::cli
{

PipelineConfig resolve_config(const CommonOptions & opts)
{
  std::ifstream in(opts.config);
  if (!in) {
    throw ConfigError("cannot open config file '" + opts.config.string() +
                      "'; expected a JSON object with optional sections seed, output_dir, dataset, synth, "
                      "segment, flow, sample, augment, network, loss, train, eval");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw ConfigError("config file '" + opts.config.string() + "' is not valid JSON: " + e.what());
  }
  apply_overrides(j, environment_overrides());
  std::vector<std::string> sets;
  for (const auto & s : opts.set) {
    auto key = s.substr(0, s.find('='));
    if (key.size() == s.size()) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    for (std::size_t p; (p = key.find('.')) != std::string::npos;) key.replace(p, 1, "__");
    sets.push_back(std::string(kEnvPrefix) + key + s.substr(s.find('=')));
  }
  apply_overrides(j, sets);
  if (opts.seed) j["seed"] = *opts.seed;
  if (opts.workers) j["workers"] = *opts.workers;
  if (opts.output_dir) j["output_dir"] = *opts.output_dir;
  return parse_config(j);
}

namespace
{

void write_resolved(const PipelineConfig & cfg, const std::string & name)
{
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / name, std::ios::trunc);
  out << to_json(cfg).dump(2) << "\n";
}

std::string file_id(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

std::vector<std::pair<int, int>> spaced_pairs(const SplitRange & r, int count)
{
  std::vector<std::pair<int, int>> out;
  const int available = r.size() - 1;
  if (available < 1) return out;
  const int n = count <= 0 ? available : std::min(count, available);
  for (int i = 0; i < n; ++i) {
    const int a = r.begin + static_cast<int>(static_cast<long>(i) * available / n);
    out.emplace_back(a, a + 1);
  }
  return out;
}

}  // namespace

int cmd_gen(const PipelineConfig & cfg)
{
  const auto dir = cfg.dataset_dir();
  for (const char * sub : {"frames", "masks", "gt"}) std::filesystem::remove_all(dir / sub);
  generate_sequence(cfg.synth, dir);
  write_resolved(cfg, "gen_config.json");
  std::cout << "wrote " << cfg.synth.frames << " frames to " << dir.string() << "\n";
  return 0;
}

int cmd_flow(const PipelineConfig & cfg, const FlowOptions & opts)
{
  if (opts.convert_in || opts.convert_out) {
    if (!opts.convert_in || !opts.convert_out) throw ConfigError("--convert needs an input and an output path");
    convert_middlebury_flow(*opts.convert_in, *opts.convert_out);
    std::cout << "converted " << opts.convert_in->string() << " -> " << opts.convert_out->string() << "\n";
    return 0;
  }
  const auto ds = SequenceDataset::open(cfg.dataset_dir());
  const auto dir = cfg.flow_dir();
  std::filesystem::create_directories(dir);
  for (int a = 0; a + 1 < ds.size(); ++a) {
    const int b = a + 1;
    write_flow_file(dir / (frame_name(a) + "_" + frame_name(b) + ".flo"),
                    estimate_flow_classical(ds.frame(a), ds.frame(b), cfg.flow.params));
    write_flow_file(dir / (frame_name(b) + "_" + frame_name(a) + ".flo"),
                    estimate_flow_classical(ds.frame(b), ds.frame(a), cfg.flow.params));
  }
  std::cout << "wrote flow for " << ds.size() - 1 << " pairs to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const PipelineConfig & cfg, const TrainOptions & opts)
{
  const auto ds = SequenceDataset::open(cfg.dataset_dir());
  const auto split = split_dataset(ds.size(), cfg.dataset.train_fraction);
  const auto tcfg = make_train_config(cfg, split);
  TrainOutputs out{cfg.train_dir()};
  TrainResult result;
  if (opts.resume) {
    const auto ckpt = read_checkpoint(*opts.resume);
    const int more = std::max(0, cfg.train.epochs - static_cast<int>(ckpt.epoch));
    result = resume(ckpt, ds, cfg.network, tcfg, more, out);
  } else {
    result = train(ds, cfg.network, tcfg, out);
  }
  write_resolved(cfg, "train_config.json");
  for (const auto & e : result.log.epochs) {
    std::cout << "epoch " << e.epoch << ": loss " << e.mean_total << " (match " << e.mean_match << ", non-match "
              << e.mean_nonmatch << "), " << e.steps << " steps, " << e.skipped << " skipped\n";
  }
  return 0;
}

int cmd_eval(const PipelineConfig & cfg, const EvalCliOptions & opts)
{
  std::vector<int> tests;
  if (opts.test == "all") tests = {1, 2, 3, 4};
  else if (opts.test == "1" || opts.test == "2" || opts.test == "3" || opts.test == "4") tests = {std::stoi(opts.test)};
  else throw ConfigError("--test must be 1, 2, 3, 4 or all");

  const auto ckpt_path = opts.checkpoint ? *opts.checkpoint : cfg.checkpoint_path();
  const auto ckpt = read_checkpoint(ckpt_path);
  const auto ds = SequenceDataset::open(cfg.dataset_dir());
  const auto split = split_dataset(ds.size(), cfg.dataset.train_fraction);
  const auto options = make_eval_options(cfg);

  NetworkDescriptors ours(parameters_from_checkpoint(ckpt));
  BaselineParams bp;
  bp.patch_radius = cfg.eval.patch_radius;
  BaselineDescriptors baseline(bp, options.seed);
  const std::vector<DescriptorSource *> methods{&ours, &baseline};

  ReportMeta meta{file_id(ckpt_path), ds.id(), config_hash(cfg), cfg.seed, options.domain};
  const auto dir = cfg.eval_dir() / to_string(options.domain);
  for (int t : tests) {
    if (t == 1) {
      const auto r = eval_consecutive(ds, split.test, cfg.eval.n_pairs, methods, options);
      write_consecutive_report(dir, r, meta);
      for (const auto & m : r.methods) {
        std::cout << "test 1 " << m.name << ": " << m.mean << " +- " << m.stddev << "\n";
      }
    } else if (t == 2) {
      const auto r = eval_cross(ds, split, cfg.eval.cross_pairs_per_cell, methods, options);
      write_cross_report(dir, r, meta);
      for (const auto & c : r.cells) {
        std::cout << "test 2 " << (c.same_background ? "same" : "different") << " cell:";
        for (const auto & m : c.methods) std::cout << " " << m.name << "=" << m.mean;
        std::cout << "\n";
      }
    } else if (t == 3) {
      const auto r = eval_pixelwise_histogram(ds, spaced_pairs(split.test, cfg.eval.histogram_pairs),
                                              cfg.eval.histogram_bins, methods, options);
      const auto j = write_pixelwise_report(dir, r, meta);
      for (const auto & m : j["methods"]) {
        std::cout << "test 3 " << m["name"].get<std::string>() << ": " << m["fraction_below_5"].get<double>()
                  << " of pixels under 5\n";
      }
    } else {
      const auto r = eval_keypoints(ds, spaced_pairs(split.test, cfg.eval.keypoint_pairs), methods, options);
      write_keypoint_report(dir, r, meta);
      for (std::size_t m = 0; m < r.names.size(); ++m) {
        std::cout << "test 4 " << r.names[m] << ": median error " << r.median_error[m] << " px over "
                  << r.matches.size() << " keypoints\n";
      }
    }
  }
  return 0;
}

std::vector<PixelCoord> read_points_file(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open points file '" + path.string() + "'");
  std::vector<PixelCoord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (auto & ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream ls(line);
    double x = 0.0;
    double y = 0.0;
    std::string rest;
    if (!(ls >> x)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError("points file line " + std::to_string(lineno) + ": expected 'x y'");
    }
    if (!(ls >> y) || (ls >> rest)) throw ConfigError("points file line " + std::to_string(lineno) + ": expected 'x y'");
    out.push_back({x, y});
  }
  if (out.empty()) throw ConfigError("points file '" + path.string() + "' holds no points");
  return out;
}

int cmd_track(const PipelineConfig & cfg, const TrackOptions & opts)
{
  std::vector<PixelCoord> seeds;
  if (opts.points && opts.grid) throw ConfigError("use either --points or --grid");
  if (opts.points) {
    seeds = read_points_file(*opts.points);
  } else if (opts.grid) {
    std::string g = *opts.grid;
    const auto comma = g.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("grid");
      seeds = grid_seed_points({std::stod(g.substr(0, comma)), std::stod(g.substr(comma + 1))});
    } catch (const std::exception &) {
      throw ConfigError("--grid expects x,y");
    }
  } else {
    throw ConfigError("track needs --points FILE or --grid x,y");
  }

  const auto ds = SequenceDataset::open(cfg.dataset_dir());
  const int reference = opts.reference.value_or(cfg.eval.track_reference);
  if (reference < 0 || reference >= ds.size()) throw ConfigError("reference frame out of range");
  for (const auto & s : seeds) {
    if (!ds.frame(reference).contains(round_px(s.x), round_px(s.y))) {
      throw ConfigError("seed point (" + std::to_string(s.x) + ", " + std::to_string(s.y) + ") lies outside the frame");
    }
  }
  const auto ckpt = read_checkpoint(opts.checkpoint ? *opts.checkpoint : cfg.checkpoint_path());
  NetworkDescriptors ours(parameters_from_checkpoint(ckpt));
  const auto r = track_points(ds, ours, seeds, reference, opts.mask || cfg.eval.track_mask,
                              cfg.track_dir() / "overlays");
  write_track_report(cfg.track_dir(), r);
  std::cout << "tracked " << seeds.size() << " points over " << ds.size() << " frames\n";
  return 0;
}

}  // namespace flowdesc::cli
