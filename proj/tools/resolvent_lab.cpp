#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resolvent_lab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Resolvent bounds lab: simulate, estimate, solve and verify"};
  std::string config;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string outdir;
  std::vector<std::string> sets;
  auto* config_opt = app.add_option("--config", config, "JSON run configuration")
                         ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* workers_opt = app.add_option("--workers", workers,
                                     "worker threads; 0 = RESOLVENT_LAB_WORKERS or all cores")
                          ->check(CLI::NonNegativeNumber);
  auto* out_opt = app.add_option("--outdir", outdir, "output directory");
  app.add_option("--set", sets, "dotted override, e.g. model.lambda=0.25 (repeatable)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : resolvent_lab::kExitError;
  }
  resolvent_lab::RunOverrides ov;
  if (*seed_opt) {
    ov.seed = seed;
  }
  if (*workers_opt) {
    ov.workers = workers;
  }
  if (*out_opt) {
    ov.outdir = outdir;
  }
  ov.sets = sets;
  const auto path = *config_opt ? std::optional<std::string>(config) : std::nullopt;
  return resolvent_lab::run(path, ov, std::cerr);
}
