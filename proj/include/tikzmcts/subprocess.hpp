#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tikzmcts {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  double wall_time_s = 0.0;
};

/// Runs argv[0] (resolved via PATH) in `cwd` with stdin from /dev/null and
/// stdout+stderr redirected to `output_file`. The child leads its own process
/// group; on timeout the whole group is killed.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          const std::filesystem::path& output_file, double timeout_s);

}  // namespace tikzmcts
