#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "poison/experiment.hpp"

// Experiment runner: declarative configs in, deterministic CSV artifacts out.

int main(int argc, char** argv) {
  CLI::App app{"poisoncraft experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int seeds_override = -1;
  int threads = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seeds", seeds_override, "override run.seeds");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* curve = app.add_subcommand("curve", "poisoning curve: test error vs budget");
  CLI::App* transfer = app.add_subcommand("transfer", "surrogate x target matrix");
  CLI::App* error_specific =
      app.add_subcommand("error-specific", "attack on a relabeled validation set");
  CLI::App* surface = app.add_subcommand("surface", "2-d attacker objective landscape");
  for (CLI::App* sub : {curve, transfer, error_specific, surface}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    poison::Config cfg = poison::Config::from_file(config_path);
    if (seeds_override > 0) cfg.set("run.seeds", std::to_string(seeds_override));
    if (curve->parsed()) poison::run_curve(cfg, out_dir, threads);
    if (transfer->parsed()) poison::run_transfer(cfg, out_dir, threads);
    if (error_specific->parsed()) poison::run_error_specific(cfg, out_dir, threads);
    if (surface->parsed()) poison::run_surface(cfg, out_dir, threads);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
