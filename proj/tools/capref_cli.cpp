// capref_cli: run the capture-refinement pipeline or one of its stages.
//
// Exit codes: 0 success, 1 numeric failure, 2 input, parse or I/O error.

#include <capref/pipeline.hpp>

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

namespace {

int exit_code_for(const capref::Error& e) {
  if (dynamic_cast<const capref::IoError*>(&e) || dynamic_cast<const capref::ParseError*>(&e) ||
      dynamic_cast<const capref::UnsupportedVersion*>(&e) || dynamic_cast<const capref::InvalidInput*>(&e))
    return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-capture refinement pipeline on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path, out, checkpoint;
  std::uint64_t seed = 0;
  int flipflop = 0;
  bool skip_train = false;
  auto* o_seed = app.add_option("--seed", seed, "Random seed for the scene and training");
  auto* o_out = app.add_option("--out", out, "Run directory");
  auto* o_ckpt = app.add_option("--checkpoint", checkpoint, "Network checkpoint path");
  auto* o_ff = app.add_option("--flipflop-rounds", flipflop, "Refinement flip-flop rounds");
  app.add_option("--config", config_path, "pipeline/1 configuration file")->check(CLI::ExistingFile);
  app.add_flag("--skip-train", skip_train, "Use --checkpoint instead of training");

  const std::map<std::string, std::string> stages = {
      {"synth", "Generate the synthetic scene"},
      {"fit", "Monocular initial fit"},
      {"sparse-fit", "Sparse multi-view fit"},
      {"train", "Train the correction network"},
      {"infer", "Correct the initial fit with the network"},
      {"refine", "Refine the corrected motion against the observations"},
      {"eval", "Write report.json and errors.csv"},
      {"run", "All stages in order"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    capref::PipelineConfig cfg = config_path.empty() ? capref::PipelineConfig{} : capref::load_config(config_path);
    if (*o_seed) cfg.seed = seed;
    if (*o_out) cfg.out = out;
    if (*o_ckpt) cfg.checkpoint = checkpoint;
    if (*o_ff) cfg.refine.flipflop_rounds = flipflop;
    if (skip_train) cfg.skip_train = true;

    capref::Pipeline p(cfg, &std::cerr);
    const std::string cmd = app.get_subcommands().front()->get_name();
    const std::map<std::string, std::function<void()>> actions = {
        {"synth", [&] { p.synth(); }},     {"fit", [&] { p.fit(); }},
        {"sparse-fit", [&] { p.sparse_fit(); }}, {"train", [&] { p.train(); }},
        {"infer", [&] { p.infer(); }},     {"refine", [&] { p.refine(); }},
        {"eval", [&] { p.eval(); }},       {"run", [&] { p.run(); }},
    };
    actions.at(cmd)();
    return 0;
  } catch (const capref::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
