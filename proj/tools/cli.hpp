#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace tikzmcts::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kEnvironment = 10,
  kGateway = 11,
  kEmptySearch = 12,
};

/// Entry point shared by the binary and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "10m", "5s", "1.5h", "600" (seconds) → seconds. Throws InvalidConfig.
double parse_duration(const std::string& text);

/// Effective key → value settings after layering file < environment < flags.
using Settings = std::map<std::string, std::string>;

/// Keys understood by `synthesize`, each also readable from TIKZMCTS_<KEY>.
const std::vector<std::string>& setting_keys();

Settings load_settings_file(const std::string& path);
Settings settings_from_environment();

}  // namespace tikzmcts::cli
