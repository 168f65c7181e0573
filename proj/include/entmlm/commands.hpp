#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace entmlm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;  // overrides the config's `seed`
  std::filesystem::path out = ".";
  std::vector<std::string> overrides;  // extra "key=value" settings
};

const std::vector<std::string>& command_names();

/// Runs one command. Errors propagate as exceptions; see exit_code_for().
int run_command(const std::string& name, const CommandOptions& options, std::ostream& log);

/// Same as run_command but maps exceptions to exit codes, printing the message to `err`.
int run_command_guarded(const std::string& name, const CommandOptions& options, std::ostream& log,
                        std::ostream& err);

}  // namespace entmlm
