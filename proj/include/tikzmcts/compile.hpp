#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "tikzmcts/image.hpp"

namespace tikzmcts {

enum class CompileStatus { CleanSuccess, RecoverableErrors, FatalFailure };

std::string_view to_string(CompileStatus status);
CompileStatus compile_status_from_string(std::string_view name);

/// Result of one compilation.
///
/// Invariants: CleanSuccess implies artifact_produced; FatalFailure implies no
/// raster; fatal_line is only set for FatalFailure.
struct CompileOutcome {
  CompileStatus status = CompileStatus::FatalFailure;
  bool artifact_produced = false;
  std::optional<RasterImage> raster;
  std::string log_text;
  /// 1-based line of the candidate program that introduced the fatal error.
  std::optional<int> fatal_line;
  double wall_time_s = 0.0;
  /// Workspace directory used for this compile (empty for in-process engines).
  std::string workspace;
};

/// Marker appended to the log when the engine is killed for exceeding its time limit.
inline constexpr std::string_view kTimeoutMarker = "[tikzmcts] compile timeout";

/// How engine line numbers map back onto the candidate program.
struct LineMapping {
  int preamble_lines = 0;
  /// Number of lines in the candidate; 0 when unknown (disables clamping and
  /// the last-line fallback).
  int candidate_lines = 0;
};

struct LogClassification {
  CompileStatus status;
  std::optional<int> fatal_line;

  bool operator==(const LogClassification&) const = default;
};

/// Classifies an engine log into the three diagnostic classes.
///
/// FatalFailure when no artifact was produced or the log carries a fatal marker
/// ("Fatal error occurred", "Emergency stop", "==> Fatal error", or the harness
/// timeout marker). RecoverableErrors when an artifact exists and some line
/// starts with '!'. CleanSuccess otherwise.
///
/// For fatal logs the offending line is the first `l.<N>` after the first
/// fatal marker, else the `l.<N>` of the first '!' error block. N is shifted by
/// the preamble offset and clamped to the candidate's length; when nothing can
/// be parsed the candidate's last line is blamed.
LogClassification classify_log(std::string_view log_text, bool artifact_produced,
                               const LineMapping& mapping = {});

/// Candidate with the standalone preamble applied when it lacks one.
struct WrappedSource {
  std::string text;
  LineMapping mapping;
};

WrappedSource wrap_program(std::string_view source);

/// Anything that can turn program text into a CompileOutcome.
class CompileHarness {
 public:
  virtual ~CompileHarness() = default;

  virtual CompileOutcome compile(const std::string& source) = 0;

  /// Throws EnvironmentError when required tooling is unavailable.
  virtual void probe() const {}

  virtual std::string describe() const = 0;
};

struct HarnessConfig {
  std::string engine = "pdflatex";
  std::string rasterizer = "pdftoppm";
  double timeout_s = 60.0;
  int dpi = 300;
  int max_concurrent = 1;
  bool keep_workspace = false;
  std::filesystem::path workspace_root = std::filesystem::temp_directory_path();

  /// Applies TIKZMCTS_ENGINE / TIKZMCTS_RASTERIZER when set.
  void apply_environment();
};

/// Resolves an executable name against PATH (or checks an explicit path).
std::optional<std::filesystem::path> find_executable(const std::string& name);

/// Runs a real LaTeX engine in per-call scratch directories and rasterizes the
/// first page of the produced document with a pdftoppm-compatible tool.
class LatexHarness final : public CompileHarness {
 public:
  explicit LatexHarness(HarnessConfig config);

  CompileOutcome compile(const std::string& source) override;
  CompileOutcome compile_program(const std::string& source, double timeout_s, int dpi);

  void probe() const override;
  std::string describe() const override;

  const HarnessConfig& config() const { return config_; }

 private:
  HarnessConfig config_;
  std::unique_ptr<std::counting_semaphore<1024>> slots_;
};

}  // namespace tikzmcts
