#include "commands.hpp"

#include "flowdesc/error.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace
{

void add_common(CLI::App & app, flowdesc::cli::CommonOptions & o)
{
  app.add_option("-c,--config", o.config, "Pipeline config (JSON)")->required();
  app.add_option("--seed", o.seed, "Global seed");
  app.add_option("--workers", o.workers, "Preprocessing workers (1 in deterministic mode)");
  app.add_option("-o,--output-dir", o.output_dir, "Output directory");
  app.add_option("--set", o.set, "Override section.key=value (value parsed as JSON)");
}

}  // namespace

int main(int argc, char ** argv)
{
  using namespace flowdesc::cli;
  CLI::App app{"Dense descriptor learning from video flow"};
  app.require_subcommand(1);

  CommonOptions gen_o, flow_o, train_o, eval_o, track_o;
  FlowOptions flow_x;
  TrainOptions train_x;
  EvalCliOptions eval_x;
  std::optional<std::string> eval_domain;
  std::optional<int> eval_samples;
  TrackOptions track_x;

  auto * gen = app.add_subcommand("gen", "Render a synthetic sequence");
  add_common(*gen, gen_o);

  auto * flow = app.add_subcommand("flow", "Precompute classical flow files or convert flow files");
  add_common(*flow, flow_o);
  flow->add_option("--convert-in", flow_x.convert_in, "Flow file to convert (Middlebury .flo)");
  flow->add_option("--convert-out", flow_x.convert_out, "Converted FLO1 output");

  auto * train = app.add_subcommand("train", "Train the descriptor network");
  add_common(*train, train_o);
  train->add_option("--resume", train_x.resume, "Checkpoint to continue from");

  auto * eval = app.add_subcommand("eval", "Run the evaluation tests");
  add_common(*eval, eval_o);
  eval->add_option("--test", eval_x.test, "1, 2, 3, 4 or all")->capture_default_str();
  eval->add_option("--checkpoint", eval_x.checkpoint, "Checkpoint (default: latest of train)");
  eval->add_option("--domain", eval_domain, "full | mask");
  eval->add_option("--samples", eval_samples, "Query pixels per pair (0 = all)");

  auto * track = app.add_subcommand("track", "Track seed points through the sequence");
  add_common(*track, track_o);
  track->add_option("--checkpoint", track_x.checkpoint, "Checkpoint (default: latest of train)");
  track->add_option("--points", track_x.points, "Points file, one 'x y' per line");
  track->add_option("--grid", track_x.grid, "Centre x,y of a 5x5 seed patch");
  track->add_option("--reference", track_x.reference, "Reference frame");
  track->add_flag("--mask", track_x.mask, "Restrict the search to the foreground mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen(resolve_config(gen_o));
    if (*flow) return cmd_flow(resolve_config(flow_o), flow_x);
    if (*train) return cmd_train(resolve_config(train_o), train_x);
    if (*eval) {
      if (eval_domain) eval_o.set.push_back("eval.domain=" + *eval_domain);
      if (eval_samples) eval_o.set.push_back("eval.samples_per_pair=" + std::to_string(*eval_samples));
      return cmd_eval(resolve_config(eval_o), eval_x);
    }
    if (*track) return cmd_track(resolve_config(track_o), track_x);
  } catch (const flowdesc::ConfigError & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
