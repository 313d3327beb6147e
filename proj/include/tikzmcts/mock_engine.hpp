#pragma once

#include <string>

#include "tikzmcts/compile.hpp"

namespace tikzmcts {

struct MockEngineConfig {
  int canvas_px = 64;
  /// Side length of the visible square, in TikZ units, anchored at (0,0).
  double extent = 8.0;
};

/// In-process stand-in for a LaTeX engine. It interprets a small TikZ subset
/// and writes a pdfTeX-flavoured log which is then run through classify_log,
/// so offline searches exercise the same classification path as real runs.
///
/// Rules (line numbers refer to the wrapped document):
///   - `\end{X}` that does not close the innermost open environment is fatal;
///   - environments left open at end of input are fatal ("no legal \end found");
///   - a document without any tikzpicture or node produces no pages (fatal);
///   - an unknown control sequence is a recoverable "Undefined control sequence";
///   - a path command without a terminating ';' is a recoverable tikz error.
///
/// Drawable: `\draw`, `\fill`, `\filldraw`, `\path` with `--`, `rectangle`,
/// `circle (r)`, `cycle`, relative `++(dx,dy)`; `\node at (x,y) {text}`
/// renders as a filled box sized by the text length.
class MockEngineHarness final : public CompileHarness {
 public:
  explicit MockEngineHarness(MockEngineConfig config = {}) : config_(config) {}

  CompileOutcome compile(const std::string& source) override;
  std::string describe() const override { return "mock-engine"; }

  /// Renders a program directly, ignoring errors; handy for building targets.
  RasterImage render(const std::string& source) const;

 private:
  MockEngineConfig config_;
};

}  // namespace tikzmcts
