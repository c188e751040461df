// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "CLI11.hpp"
#include "diloco/harness.hpp"

namespace harness = diloco::harness;

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale DiLoCo / synchronous data-parallel training experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--output-dir", output_dir, "override output_dir");
    sub->add_option("--seed", seed, "override global_seed");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  };
  auto* run = app.add_subcommand("run", "execute every stage and write reports");
  auto* compare = app.add_subcommand("compare", "run standard, DiLoCo and hybrid variants");
  auto* validate = app.add_subcommand("validate", "check a config and print it with defaults");
  add_common(run);
  add_common(compare);
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : harness::kExitConfigError;
  }

  harness::CliOverrides overrides;
  overrides.quiet = quiet;
  auto* sub = app.get_subcommands().front();
  if (sub->count("--output-dir")) overrides.output_dir = output_dir;
  if (sub->count("--seed")) overrides.seed = seed;

  if (*run) return harness::cmd_run(config_path, overrides, std::cout, std::cerr);
  if (*compare) return harness::cmd_compare(config_path, overrides, std::cout, std::cerr);
  return harness::cmd_validate(config_path, overrides, std::cout, std::cerr);
}
