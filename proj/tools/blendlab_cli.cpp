// Command-line front end for the scenario pipelines.  Exit code 0 only when
// every stage of the requested pipeline passes.

#include "blendlab/scenarios.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"blendlab - numerical certificates for blender constructions"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format = "text";
  bool has_seed = false;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "flat key=value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory for reports");
  app.add_option("--format", format, "report format: text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  app.add_option("--seed", seed, "override the RNG seed")
      ->each([&](const std::string&) { has_seed = true; });

  const std::vector<std::string> names{"covering",        "blender",
                                       "tangency",        "cycle-unfolding",
                                       "paratangency",    "appendix-verify",
                                       "sweep"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& n : names)
    subs[n] = app.add_subcommand(n, "run the " + n + " pipeline");

  CLI11_PARSE(app, argc, argv);

  std::string pipeline;
  for (const auto& [n, sub] : subs)
    if (sub->parsed()) pipeline = n;

  try {
    blendlab::ScenarioConfig cfg;
    if (!config_path.empty()) cfg = blendlab::ScenarioConfig::from_file(config_path);
    if (has_seed) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!format.empty()) cfg.format = format;

    const blendlab::PipelineReport rep = blendlab::run_pipeline(pipeline, cfg);
    std::cout << rep.to_text();
    std::cerr << "elapsed: " << rep.elapsed_seconds << " s\n";
    return rep.pass ? 0 : 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}
