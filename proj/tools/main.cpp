#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "entmlm/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Entity-augmented masked language model toolkit"};
  app.require_subcommand(1);
  entmlm::CommandOptions options;
  std::string config;
  std::uint64_t seed = 0;
  for (const auto& name : entmlm::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "key = value settings file");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", options.out, "output directory");
    sub->add_option("--set", options.overrides, "extra key=value setting (repeatable)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : entmlm::kExitConfig;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  if (!config.empty()) options.config = config;
  if (chosen->count("--seed") > 0) options.seed = seed;
  return entmlm::run_command_guarded(chosen->get_name(), options, std::cout, std::cerr);
}
