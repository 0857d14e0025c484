#pragma once

// Command-line front end: ingest, synth, train, eval, gradcheck, sweep.

#include "prefalign/data.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace prefalign {

inline constexpr const char* kVersion = "0.3.0";

/// args excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Dataset directory written by `ingest` and `synth`.
void save_dataset_dir(const std::filesystem::path& dir, const ChronologicalSplit& split,
                      Index dropped_users = 0);
ChronologicalSplit load_dataset_dir(const std::filesystem::path& dir);

/// Merges `key=value` lines from `path` into args as `--key value`, skipping
/// keys already given on the command line. `true`/`false` values toggle flags.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args,
                                           const std::filesystem::path& path);

}  // namespace prefalign
