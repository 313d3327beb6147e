#pragma once

#include <filesystem>
#include <functional>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tikzmcts/compile.hpp"
#include "tikzmcts/program.hpp"
#include "tikzmcts/reward.hpp"
#include "tikzmcts/search.hpp"

namespace testsupport {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(TIKZMCTS_FIXTURE_DIR) / rel;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("tikzmcts-test-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Compiles nothing: every program is clean with a small white raster, unless
/// a line contains `fatal_marker`, which is then blamed.
class StubHarness final : public tikzmcts::CompileHarness {
 public:
  explicit StubHarness(std::string fatal_marker = "\\end{axis}") : marker_(std::move(fatal_marker)) {}

  tikzmcts::CompileOutcome compile(const std::string& source) override {
    ++calls;
    tikzmcts::CompileOutcome out;
    const auto lines = tikzmcts::split_lines(source);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (!marker_.empty() && lines[i].find(marker_) != std::string::npos) {
        out.status = tikzmcts::CompileStatus::FatalFailure;
        out.fatal_line = static_cast<int>(i + 1);
        out.log_text = "! Emergency stop.";
        return out;
      }
    }
    out.status = tikzmcts::CompileStatus::CleanSuccess;
    out.artifact_produced = true;
    out.raster = tikzmcts::RasterImage::filled(8, 8, 255);
    return out;
  }
  std::string describe() const override { return "stub"; }

  int calls = 0;

 private:
  std::string marker_;
};

/// Scores a program by how many positions hold their preferred line, mapped
/// onto [-1, 1]. Stands in for a visual reward with a known optimum.
class LandscapeReward final : public tikzmcts::RewardFunction {
 public:
  LandscapeReward(std::vector<std::string> preferred, bool rescale)
      : preferred_(std::move(preferred)), rescale_(rescale) {}

  tikzmcts::RewardValue evaluate(const std::vector<std::string>& lines,
                                 const tikzmcts::CompileOutcome&) override {
    return {score(lines), tikzmcts::RewardKind::SelfSim};
  }
  bool rescaled() const override { return rescale_; }
  tikzmcts::RewardKind kind() const override { return tikzmcts::RewardKind::SelfSim; }

  double score(const std::vector<std::string>& lines) const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preferred_.size() && i < lines.size(); ++i) {
      if (lines[i] == preferred_[i]) ++hits;
    }
    return 2.0 * static_cast<double>(hits) / static_cast<double>(preferred_.size()) - 1.0;
  }

 private:
  std::vector<std::string> preferred_;
  bool rescale_;
};

/// Appends a child with the given values and visit count.
inline tikzmcts::SearchNode& add_child(tikzmcts::SearchNode& parent, const std::string& line,
                                       std::vector<double> values, int visits,
                                       bool backtracking = false) {
  tikzmcts::ProgramState s = parent.state;
  if (!backtracking) s.push_back(line);
  auto node = std::make_unique<tikzmcts::SearchNode>(std::move(s));
  node->is_backtracking = backtracking;
  node->values = std::move(values);
  node->visits = visits;
  node->parent = &parent;
  parent.children.push_back(std::move(node));
  return *parent.children.back();
}

}  // namespace testsupport
