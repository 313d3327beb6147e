#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "tikzmcts/compile.hpp"
#include "tikzmcts/errors.hpp"
#include "tikzmcts/mock_engine.hpp"

using namespace tikzmcts;
using testsupport::fixture;
using testsupport::slurp;
using testsupport::golden_logs;

namespace {

HarnessConfig fake_config() {
  HarnessConfig cfg;
  cfg.engine = fixture("bin/fake-latex").string();
  cfg.rasterizer = fixture("bin/fake-pdftoppm").string();
  cfg.timeout_s = 10;
  cfg.workspace_root = testsupport::scratch_dir("compile");
  return cfg;
}

const char* kPicture = "\\begin{tikzpicture}\n\\draw (0,0) -- (1,1);\n\\end{tikzpicture}";

}  // namespace

TEST_CASE("golden logs classify as recorded") {
  const auto logs = golden_logs();
  REQUIRE(logs.size() >= 12);
  std::set<CompileStatus> seen;
  bool timeout_seen = false;
  for (const auto& g : logs) {
    CAPTURE(g.file);
    const std::string text = slurp(fixture("logs/" + g.file));
    const auto cls = classify_log(text, g.artifact, g.mapping);
    CHECK(cls.status == g.status);
    CHECK(cls.fatal_line == g.fatal_line);
    CHECK(classify_log(text, g.artifact, g.mapping) == cls);
    seen.insert(cls.status);
    if (text.find(kTimeoutMarker) != std::string::npos) timeout_seen = true;
  }
  CHECK(seen.size() == 3);
  CHECK(timeout_seen);
}

TEST_CASE("classify_log is total on arbitrary input") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> pieces = {"! ", "l.", "12", "Emergency stop", "\n", "\r\n",
                                           "==> Fatal error", "x", "l.-3", " ", "Output written"};
  for (int i = 0; i < 3000; ++i) {
    std::string log;
    const int n = static_cast<int>(rng() % 30);
    for (int k = 0; k < n; ++k) {
      if (rng() % 4 == 0) {
        log.push_back(static_cast<char>(rng() % 256));
      } else {
        log += pieces[rng() % pieces.size()];
      }
    }
    const bool artifact = rng() % 2;
    const LineMapping mapping{static_cast<int>(rng() % 4), static_cast<int>(rng() % 10)};
    const auto cls = classify_log(log, artifact, mapping);
    if (!artifact) CHECK(cls.status == CompileStatus::FatalFailure);
    if (cls.fatal_line) {
      CHECK(cls.status == CompileStatus::FatalFailure);
      CHECK(*cls.fatal_line >= 1);
      if (mapping.candidate_lines > 0) CHECK(*cls.fatal_line <= mapping.candidate_lines);
    }
  }
}

TEST_CASE("status names round trip") {
  for (auto s : {CompileStatus::CleanSuccess, CompileStatus::RecoverableErrors, CompileStatus::FatalFailure}) {
    CHECK(compile_status_from_string(to_string(s)) == s);
  }
  CHECK_THROWS(compile_status_from_string("bogus"));
}

TEST_CASE("wrap_program") {
  const auto w = wrap_program(kPicture);
  CHECK(w.mapping.preamble_lines == 2);
  CHECK(w.mapping.candidate_lines == 3);
  CHECK(w.text.rfind("\\documentclass[tikz]{standalone}\n\\begin{document}\n", 0) == 0);
  CHECK(w.text.ends_with("\\end{tikzpicture}\n\\end{document}\n"));

  const std::string full = "\\documentclass{article}\n\\begin{document}\nx\n\\end{document}";
  const auto f = wrap_program(full);
  CHECK(f.text == full);
  CHECK(f.mapping.preamble_lines == 0);
  CHECK(f.mapping.candidate_lines == 4);
}

TEST_CASE("LatexHarness with a stand-in engine") {
  auto cfg = fake_config();
  const auto raster_png = fixture("images/target.png").string();
  ::setenv("FAKE_RASTER_PNG", raster_png.c_str(), 1);

  SUBCASE("clean") {
    LatexHarness h(cfg);
    CHECK_NOTHROW(h.probe());
    const auto o = h.compile(kPicture);
    CHECK(o.status == CompileStatus::CleanSuccess);
    CHECK(o.artifact_produced);
    REQUIRE(o.raster);
    CHECK(o.raster->width == 64);
    CHECK_FALSE(std::filesystem::exists(o.workspace));
  }

  SUBCASE("recoverable") {
    LatexHarness h(cfg);
    const auto o = h.compile("\\begin{tikzpicture}\nFAKE_ERROR\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::RecoverableErrors);
    CHECK(o.artifact_produced);
    CHECK(o.raster);
    CHECK_FALSE(o.fatal_line);
  }

  SUBCASE("fatal") {
    LatexHarness h(cfg);
    const auto o = h.compile("\\begin{tikzpicture}\nFAKE_FATAL\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::FatalFailure);
    CHECK_FALSE(o.artifact_produced);
    CHECK_FALSE(o.raster);
    CHECK(o.fatal_line == 2);
  }

  SUBCASE("timeout") {
    cfg.timeout_s = 0.5;
    LatexHarness h(cfg);
    const auto o = h.compile("\\begin{tikzpicture}\nFAKE_SLEEP\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::FatalFailure);
    CHECK_FALSE(o.artifact_produced);
    CHECK(o.log_text.find(kTimeoutMarker) != std::string::npos);
    CHECK(o.wall_time_s < 5.0);
  }

  SUBCASE("rasterizer failure keeps the classification") {
    ::unsetenv("FAKE_RASTER_PNG");
    LatexHarness h(cfg);
    const auto o = h.compile(kPicture);
    CHECK(o.status == CompileStatus::CleanSuccess);
    CHECK_FALSE(o.raster);
    CHECK(o.log_text.find("rasterizer failed") != std::string::npos);
  }

  SUBCASE("concurrent compiles use separate workspaces") {
    cfg.max_concurrent = 4;
    cfg.keep_workspace = true;
    LatexHarness h(cfg);
    std::vector<CompileOutcome> outs(8);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      threads.emplace_back([&, i] { outs[i] = h.compile(kPicture); });
    }
    for (auto& t : threads) t.join();
    std::set<std::string> dirs;
    for (const auto& o : outs) {
      CHECK(o.status == CompileStatus::CleanSuccess);
      dirs.insert(o.workspace);
      auto cwd = slurp(std::filesystem::path(o.workspace) / "cwd.txt");
      while (!cwd.empty() && cwd.back() == '\n') cwd.pop_back();
      CHECK(std::filesystem::equivalent(cwd, o.workspace));
    }
    CHECK(dirs.size() == outs.size());
  }

  SUBCASE("missing tools") {
    cfg.engine = "/nonexistent/pdflatex";
    LatexHarness h(cfg);
    CHECK_THROWS_AS(h.probe(), EnvironmentError);
    CHECK_THROWS_AS(h.compile(kPicture), EnvironmentError);
    CHECK_THROWS_AS(h.compile(""), ContractViolation);
  }

  SUBCASE("config validation") {
    cfg.max_concurrent = 0;
    CHECK_THROWS_AS(LatexHarness{cfg}, InvalidConfig);
  }

  std::filesystem::remove_all(cfg.workspace_root);
}

TEST_CASE("mock engine") {
  MockEngineHarness engine;

  SUBCASE("clean picture renders") {
    const auto o = engine.compile("\\begin{tikzpicture}\n\\draw (1,1) rectangle (6,6);\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::CleanSuccess);
    REQUIRE(o.raster);
    int dark = 0;
    for (int y = 0; y < o.raster->height; ++y) {
      for (int x = 0; x < o.raster->width; ++x) dark += o.raster->gray(x, y) < 0.5;
    }
    CHECK(dark > 0);
  }

  SUBCASE("mismatched end is fatal at that line") {
    const auto o = engine.compile("\\begin{tikzpicture}\n\\draw (1,1) -- (2,2);\n\\end{scope}");
    CHECK(o.status == CompileStatus::FatalFailure);
    CHECK(o.fatal_line == 3);
    CHECK_FALSE(o.raster);
  }

  SUBCASE("unclosed environment is fatal") {
    const auto o = engine.compile("\\begin{tikzpicture}\n\\draw (1,1) -- (2,2);");
    CHECK(o.status == CompileStatus::FatalFailure);
    CHECK(o.fatal_line);
  }

  SUBCASE("no picture means no pages") {
    CHECK(engine.compile("hello").status == CompileStatus::FatalFailure);
  }

  SUBCASE("recoverable errors still render") {
    auto o = engine.compile("\\begin{tikzpicture}\n\\drwa (0,0) -- (1,1);\n\\draw (1,1) -- (5,5);\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::RecoverableErrors);
    CHECK(o.raster);
    o = engine.compile("\\begin{tikzpicture}\n\\draw (1,1) -- (5,5)\n\\end{tikzpicture}");
    CHECK(o.status == CompileStatus::RecoverableErrors);
  }

  SUBCASE("deterministic") {
    const std::string src = "\\begin{tikzpicture}\n\\draw (4,4) circle (2);\n\\node at (2,2) {ab};\n\\end{tikzpicture}";
    CHECK(engine.render(src) == engine.render(src));
    CHECK(engine.compile(src).log_text == engine.compile(src).log_text);
  }
}
