#include "tikzmcts/compile.hpp"

#include <stdlib.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/program.hpp"
#include "tikzmcts/subprocess.hpp"

namespace tikzmcts {

namespace fs = std::filesystem;

std::string_view to_string(CompileStatus status) {
  switch (status) {
    case CompileStatus::CleanSuccess: return "clean";
    case CompileStatus::RecoverableErrors: return "recoverable";
    case CompileStatus::FatalFailure: return "fatal";
  }
  return "fatal";
}

CompileStatus compile_status_from_string(std::string_view name) {
  if (name == "clean") return CompileStatus::CleanSuccess;
  if (name == "recoverable") return CompileStatus::RecoverableErrors;
  if (name == "fatal") return CompileStatus::FatalFailure;
  throw ContractViolation("unknown compile status '" + std::string(name) + "'");
}

namespace {

constexpr std::array<std::string_view, 4> kFatalMarkers = {
    "Fatal error occurred", "Emergency stop", "==> Fatal error", kTimeoutMarker};

bool has_fatal_marker(std::string_view line) {
  return std::any_of(kFatalMarkers.begin(), kFatalMarkers.end(),
                     [&](std::string_view m) { return line.find(m) != std::string_view::npos; });
}

/// Parses "l.<N>" at the start of a line.
std::optional<int> context_line_number(std::string_view line) {
  if (line.size() < 3 || line[0] != 'l' || line[1] != '.') return std::nullopt;
  int value = 0;
  const char* first = line.data() + 2;
  const char* last = line.data() + line.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) return std::nullopt;
  return value;
}

std::vector<std::string_view> log_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

std::optional<int> first_context_after(const std::vector<std::string_view>& lines,
                                       std::size_t from) {
  for (std::size_t i = from; i < lines.size(); ++i) {
    if (auto n = context_line_number(lines[i])) return n;
  }
  return std::nullopt;
}

}  // namespace

LogClassification classify_log(std::string_view log_text, bool artifact_produced,
                               const LineMapping& mapping) {
  const auto lines = log_lines(log_text);

  std::optional<std::size_t> first_fatal;
  std::optional<std::size_t> first_error;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!first_fatal && has_fatal_marker(lines[i])) first_fatal = i;
    if (!first_error && !lines[i].empty() && lines[i].front() == '!') first_error = i;
  }

  if (artifact_produced && !first_fatal) {
    return {first_error ? CompileStatus::RecoverableErrors : CompileStatus::CleanSuccess,
            std::nullopt};
  }

  std::optional<int> raw;
  if (first_fatal) raw = first_context_after(lines, *first_fatal + 1);
  if (!raw && first_error) raw = first_context_after(lines, *first_error + 1);

  std::optional<int> fatal_line;
  if (raw) {
    int mapped = *raw - mapping.preamble_lines;
    if (mapping.candidate_lines > 0) mapped = std::min(mapped, mapping.candidate_lines);
    if (mapped >= 1) fatal_line = mapped;
  }
  if (!fatal_line && mapping.candidate_lines > 0) fatal_line = mapping.candidate_lines;
  return {CompileStatus::FatalFailure, fatal_line};
}

WrappedSource wrap_program(std::string_view source) {
  const int candidate_lines = static_cast<int>(split_lines(source).size());
  if (source.find("\\documentclass") != std::string_view::npos) {
    return {std::string(source), {0, candidate_lines}};
  }
  std::string text = "\\documentclass[tikz]{standalone}\n\\begin{document}\n";
  text += source;
  if (!source.empty() && source.back() != '\n') text.push_back('\n');
  text += "\\end{document}\n";
  return {std::move(text), {2, candidate_lines}};
}

void HarnessConfig::apply_environment() {
  if (const char* e = std::getenv("TIKZMCTS_ENGINE"); e && *e) engine = e;
  if (const char* r = std::getenv("TIKZMCTS_RASTERIZER"); r && *r) rasterizer = r;
}

std::optional<fs::path> find_executable(const std::string& name) {
  if (name.empty()) return std::nullopt;
  auto executable = [](const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
  };
  if (name.find('/') != std::string::npos) {
    if (executable(name)) return fs::path(name);
    return std::nullopt;
  }
  const char* path_env = std::getenv("PATH");
  std::stringstream dirs(path_env ? path_env : "/usr/bin:/bin");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    fs::path candidate = fs::path(dir) / name;
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workspace {
 public:
  Workspace(const fs::path& root, bool keep) : keep_(keep) {
    std::string tmpl = (root / "tikzmcts-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) {
      throw EnvironmentError("cannot create workspace under " + root.string());
    }
    path_ = tmpl;
  }
  ~Workspace() {
    if (!keep_) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool keep_;
};

struct SlotGuard {
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  std::counting_semaphore<1024>& sem;
};

}  // namespace

LatexHarness::LatexHarness(HarnessConfig config) : config_(std::move(config)) {
  if (config_.max_concurrent < 1 || config_.max_concurrent > 1024) {
    throw InvalidConfig("max_concurrent must be in [1, 1024]");
  }
  if (config_.timeout_s <= 0) throw InvalidConfig("compile timeout must be positive");
  if (config_.dpi <= 0) throw InvalidConfig("dpi must be positive");
  slots_ = std::make_unique<std::counting_semaphore<1024>>(config_.max_concurrent);
}

void LatexHarness::probe() const {
  if (!find_executable(config_.engine)) {
    throw EnvironmentError("LaTeX engine '" + config_.engine + "' not found");
  }
  if (!find_executable(config_.rasterizer)) {
    throw EnvironmentError("rasterizer '" + config_.rasterizer + "' not found");
  }
}

std::string LatexHarness::describe() const { return "latex:" + config_.engine; }

CompileOutcome LatexHarness::compile(const std::string& source) {
  return compile_program(source, config_.timeout_s, config_.dpi);
}

CompileOutcome LatexHarness::compile_program(const std::string& source, double timeout_s,
                                             int dpi) {
  if (source.empty()) throw ContractViolation("compile_program: empty source");
  const auto engine = find_executable(config_.engine);
  if (!engine) throw EnvironmentError("LaTeX engine '" + config_.engine + "' not found");

  SlotGuard slot(*slots_);
  const auto start = std::chrono::steady_clock::now();
  Workspace ws(config_.workspace_root, config_.keep_workspace);
  const WrappedSource wrapped = wrap_program(source);
  {
    std::ofstream out(ws.path() / "main.tex", std::ios::binary);
    out << wrapped.text;
  }

  const ProcessResult run = run_process(
      {engine->string(), "-interaction=nonstopmode", "-no-shell-escape", "main.tex"},
      ws.path(), ws.path() / "engine.out", timeout_s);

  CompileOutcome outcome;
  outcome.workspace = ws.path().string();
  outcome.log_text = slurp(ws.path() / "main.log");
  if (outcome.log_text.empty()) outcome.log_text = slurp(ws.path() / "engine.out");

  std::error_code ec;
  const fs::path pdf = ws.path() / "main.pdf";
  outcome.artifact_produced = !run.timed_out && fs::exists(pdf, ec) && fs::file_size(pdf, ec) > 0;
  if (run.timed_out) {
    std::ostringstream marker;
    marker << "\n" << kTimeoutMarker << " after " << timeout_s << " s\n";
    outcome.log_text += marker.str();
  }

  const LogClassification cls =
      classify_log(outcome.log_text, outcome.artifact_produced, wrapped.mapping);
  outcome.status = cls.status;
  outcome.fatal_line = cls.fatal_line;

  if (outcome.artifact_produced && outcome.status != CompileStatus::FatalFailure) {
    const auto rasterizer = find_executable(config_.rasterizer);
    if (rasterizer) {
      const ProcessResult r = run_process(
          {rasterizer->string(), "-png", "-r", std::to_string(dpi), "-f", "1", "-l", "1",
           "-singlefile", "main.pdf", "page"},
          ws.path(), ws.path() / "raster.out", timeout_s);
      const fs::path png = ws.path() / "page.png";
      if (!r.timed_out && r.exit_code == 0 && fs::exists(png, ec)) {
        try {
          outcome.raster = read_png(png);
        } catch (const Error& e) {
          outcome.log_text += std::string("\n[tikzmcts] raster decode failed: ") + e.what() + "\n";
        }
      } else {
        outcome.log_text += "\n[tikzmcts] rasterizer failed\n";
      }
    } else {
      outcome.log_text += "\n[tikzmcts] rasterizer '" + config_.rasterizer + "' not found\n";
    }
  }
  outcome.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

}  // namespace tikzmcts
