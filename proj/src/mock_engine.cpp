#include "tikzmcts/mock_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/program.hpp"

namespace tikzmcts {

namespace {

const std::set<std::string, std::less<>>& known_commands() {
  static const std::set<std::string, std::less<>> known = {
      "documentclass", "usepackage", "usetikzlibrary", "begin", "end", "draw", "fill",
      "filldraw", "path", "node", "coordinate", "tikzset", "definecolor", "clip", "shade",
      "foreach", "centering", "small", "footnotesize", "tiny", "large", "Large", "huge",
      "textbf", "textit", "emph", "texttt", "ldots", "cdots", "quad", "qquad", "frac", "sqrt",
      "alpha", "beta", "gamma", "delta", "theta", "lambda", "mu", "pi", "sigma", "phi",
      "omega", "hspace", "vspace", "newcommand", "pgfmathsetmacro", "scriptsize", "times",
      "cdot", "mathbf", "mathrm", "label", "caption", "tikz", "pgfplotsset", "addplot"};
  return known;
}

struct Point {
  double x = 0;
  double y = 0;
};

class Canvas {
 public:
  explicit Canvas(const MockEngineConfig& cfg)
      : px_(cfg.canvas_px), scale_(cfg.canvas_px / cfg.extent),
        image_(RasterImage::filled(cfg.canvas_px, cfg.canvas_px, 255)) {}

  void segment(Point a, Point b) {
    const Point pa = to_px(a), pb = to_px(b);
    const double len = std::hypot(pb.x - pa.x, pb.y - pa.y);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 4)));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      dot(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y));
    }
  }

  void rectangle(Point a, Point b, bool filled) {
    if (!filled) {
      segment(a, {b.x, a.y});
      segment({b.x, a.y}, b);
      segment(b, {a.x, b.y});
      segment({a.x, b.y}, a);
      return;
    }
    fill_if([&](Point p) {
      return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
             p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
    });
  }

  void circle(Point c, double r, bool filled) {
    if (filled) {
      fill_if([&](Point p) { return std::hypot(p.x - c.x, p.y - c.y) <= r; });
      return;
    }
    const int steps = std::max(16, static_cast<int>(r * scale_ * 8));
    for (int i = 0; i < steps; ++i) {
      const double a0 = 2 * M_PI * i / steps, a1 = 2 * M_PI * (i + 1) / steps;
      segment({c.x + r * std::cos(a0), c.y + r * std::sin(a0)},
              {c.x + r * std::cos(a1), c.y + r * std::sin(a1)});
    }
  }

  void polygon(const std::vector<Point>& poly) {
    fill_if([&](Point p) {
      bool inside = false;
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        if (((poly[i].y > p.y) != (poly[j].y > p.y)) &&
            (p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) +
                       poly[i].x)) {
          inside = !inside;
        }
      }
      return inside;
    });
  }

  RasterImage take() { return std::move(image_); }

 private:
  Point to_px(Point p) const { return {p.x * scale_, px_ - p.y * scale_}; }

  void dot(double fx, double fy) {
    const int x0 = static_cast<int>(std::floor(fx - 0.5));
    const int y0 = static_cast<int>(std::floor(fy - 0.5));
    for (int y = y0; y <= y0 + 1; ++y) {
      for (int x = x0; x <= x0 + 1; ++x) ink(x, y);
    }
  }

  void ink(int x, int y) {
    if (x < 0 || y < 0 || x >= px_ || y >= px_) return;
    std::uint8_t* p = image_.pixel(x, y);
    p[0] = p[1] = p[2] = 0;
  }

  template <typename Pred>
  void fill_if(Pred inside) {
    for (int y = 0; y < px_; ++y) {
      for (int x = 0; x < px_; ++x) {
        const Point user{(x + 0.5) / scale_, (px_ - (y + 0.5)) / scale_};
        if (inside(user)) ink(x, y);
      }
    }
  }

  int px_;
  double scale_;
  RasterImage image_;
};

/// Minimal scanner over one TikZ path.
class PathScanner {
 public:
  explicit PathScanner(std::string_view s) : s_(s) {}

  bool done() {
    skip_space();
    return pos_ >= s_.size();
  }

  bool consume(std::string_view word) {
    skip_space();
    if (s_.substr(pos_, word.size()) == word) {
      pos_ += word.size();
      return true;
    }
    return false;
  }

  void skip_options() {
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == '[') {
      const auto end = s_.find(']', pos_);
      pos_ = end == std::string_view::npos ? s_.size() : end + 1;
    }
  }

  std::optional<std::string> braced() {
    skip_space();
    if (pos_ >= s_.size() || s_[pos_] != '{') return std::nullopt;
    int depth = 0;
    const std::size_t start = pos_;
    for (; pos_ < s_.size(); ++pos_) {
      if (s_[pos_] == '{') ++depth;
      if (s_[pos_] == '}' && --depth == 0) {
        ++pos_;
        return std::string(s_.substr(start + 1, pos_ - start - 2));
      }
    }
    return std::nullopt;
  }

  /// Parses "(x,y)"; returns nullopt (without consuming) for named coordinates.
  std::optional<Point> coordinate() {
    skip_space();
    const std::size_t save = pos_;
    if (pos_ >= s_.size() || s_[pos_] != '(') return std::nullopt;
    ++pos_;
    auto x = number();
    if (!x || !consume(",")) {
      pos_ = save;
      return std::nullopt;
    }
    auto y = number();
    if (!y || !consume(")")) {
      pos_ = save;
      return std::nullopt;
    }
    return Point{*x, *y};
  }

  /// Parses "(r)" or "[radius=r]".
  std::optional<double> radius() {
    skip_space();
    const std::size_t save = pos_;
    if (consume("(")) {
      auto r = number();
      if (r && consume(")")) return r;
    } else if (consume("[")) {
      if (consume("radius") && consume("=")) {
        auto r = number();
        if (r && consume("]")) return r;
      }
    }
    pos_ = save;
    return std::nullopt;
  }

  void skip_token() {
    skip_space();
    if (pos_ < s_.size()) ++pos_;
  }

 private:
  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::optional<double> number() {
    skip_space();
    std::size_t end = pos_;
    while (end < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[end])) ||
                               s_[end] == '.' || s_[end] == '-' || s_[end] == '+')) {
      ++end;
    }
    if (end == pos_) return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(std::string(s_.substr(pos_, end - pos_)), &used);
      pos_ += used;
      skip_unit();
      return v;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void skip_unit() {
    if (s_.substr(pos_, 2) == "cm") pos_ += 2;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

void draw_path(Canvas& canvas, std::string_view body, bool filled) {
  PathScanner scan(body);
  scan.skip_options();
  Point current{}, start{};
  bool have_current = false;
  std::vector<Point> poly;
  bool closed = false;

  while (!scan.done()) {
    if (scan.consume("--")) {
      const bool relative = scan.consume("++");
      if (auto p = scan.coordinate(); p && have_current) {
        Point next = relative ? Point{current.x + p->x, current.y + p->y} : *p;
        if (!filled) canvas.segment(current, next);
        current = next;
        poly.push_back(next);
      } else if (scan.consume("cycle") && have_current) {
        if (!filled) canvas.segment(current, start);
        current = start;
        closed = true;
      }
    } else if (scan.consume("rectangle")) {
      if (auto p = scan.coordinate(); p && have_current) {
        canvas.rectangle(current, *p, filled);
        current = *p;
      }
    } else if (scan.consume("circle")) {
      if (auto r = scan.radius(); r && have_current) canvas.circle(current, *r, filled);
    } else if (scan.consume("node")) {
      scan.skip_options();
      scan.braced();
    } else if (scan.consume("++")) {
      if (auto p = scan.coordinate(); p && have_current) {
        current = {current.x + p->x, current.y + p->y};
        start = current;
        poly = {current};
      }
    } else if (auto p = scan.coordinate()) {
      current = start = *p;
      have_current = true;
      if (filled && closed && poly.size() >= 3) canvas.polygon(poly);
      poly = {current};
      closed = false;
    } else {
      scan.skip_token();
    }
  }
  if (filled && closed && poly.size() >= 3) canvas.polygon(poly);
}

void draw_node(Canvas& canvas, std::string_view body) {
  PathScanner scan(body);
  std::optional<Point> at;
  std::string text;
  while (!scan.done()) {
    if (scan.consume("at")) {
      at = scan.coordinate();
    } else if (auto body = scan.braced()) {
      text = *body;
    } else {
      scan.skip_options();
      if (!scan.coordinate() && !scan.done()) scan.skip_token();
    }
  }
  if (!at) at = Point{0, 0};
  const double half_w = std::max<double>(0.1, 0.075 * static_cast<double>(text.size()));
  canvas.rectangle({at->x - half_w, at->y - 0.15}, {at->x + half_w, at->y + 0.15}, true);
}

struct CommandRef {
  std::string name;
  std::size_t pos;
};

std::vector<CommandRef> control_sequences(std::string_view line) {
  std::vector<CommandRef> out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '%' && (i == 0 || line[i - 1] != '\\')) break;
    if (line[i] != '\\') continue;
    std::size_t j = i + 1;
    while (j < line.size() && std::isalpha(static_cast<unsigned char>(line[j]))) ++j;
    if (j == i + 1) {
      ++i;  // control symbol such as \\ or \%
      continue;
    }
    out.push_back({std::string(line.substr(i + 1, j - i - 1)), i});
    i = j - 1;
  }
  return out;
}

std::optional<std::string> env_argument(std::string_view line, std::size_t after) {
  const auto open = line.find('{', after);
  const auto close = line.find('}', after);
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  return std::string(line.substr(open + 1, close - open - 1));
}

void error_block(std::ostringstream& log, std::string_view message, int line_no,
                 std::string_view context) {
  log << "! " << message << "\n";
  log << "l." << line_no << " " << context << "\n";
  log << std::string(context.size() + 3, ' ') << "\n\n";
}

}  // namespace

CompileOutcome MockEngineHarness::compile(const std::string& source) {
  if (source.empty()) throw ContractViolation("compile: empty source");
  const WrappedSource wrapped = wrap_program(source);
  const auto lines = split_lines(wrapped.text);

  std::ostringstream log;
  log << "This is pdfTeX, Version 3.141592653-2.6-1.40.25 (mock engine)\n"
      << "entering extended mode\n(./main.tex\nLaTeX2e <2022-11-01> patch level 1\n";

  Canvas canvas(config_);
  std::vector<std::pair<std::string, int>> envs;
  bool fatal = false;
  bool saw_document = false;
  bool has_documentclass = false;
  bool pages = false;

  for (std::size_t idx = 0; idx < lines.size() && !fatal; ++idx) {
    const int line_no = static_cast<int>(idx) + 1;
    const std::string_view line = lines[idx];
    const auto commands = control_sequences(line);

    for (const auto& cmd : commands) {
      if (cmd.name == "documentclass") has_documentclass = true;
      if (cmd.name == "begin") {
        if (auto env = env_argument(line, cmd.pos)) {
          envs.emplace_back(*env, line_no);
          if (*env == "document") saw_document = true;
          if (*env == "tikzpicture") pages = true;
        }
      } else if (cmd.name == "end") {
        auto env = env_argument(line, cmd.pos);
        if (!env) continue;
        if (envs.empty() || envs.back().first != *env) {
          std::ostringstream msg;
          if (envs.empty()) {
            msg << "LaTeX Error: \\begin{document} ended by \\end{" << *env << "}.";
          } else {
            msg << "LaTeX Error: \\begin{" << envs.back().first << "} on input line "
                << envs.back().second << " ended by \\end{" << *env << "}.";
          }
          error_block(log, msg.str(), line_no, line);
          log << "! Emergency stop.\nl." << line_no << " " << line << "\n\n";
          fatal = true;
          break;
        }
        envs.pop_back();
      } else if (!known_commands().contains(cmd.name)) {
        error_block(log, "Undefined control sequence.", line_no, line);
      }
    }
    if (fatal) break;

    if (has_documentclass && !saw_document && !commands.empty() &&
        std::any_of(commands.begin(), commands.end(), [](const CommandRef& c) {
          return c.name == "draw" || c.name == "fill" || c.name == "node";
        })) {
      error_block(log, "LaTeX Error: Missing \\begin{document}.", line_no, line);
    }

    for (const auto& cmd : commands) {
      const bool path_cmd = cmd.name == "draw" || cmd.name == "fill" || cmd.name == "filldraw" ||
                            cmd.name == "path" || cmd.name == "node";
      if (!path_cmd) continue;
      const std::size_t body_start = cmd.pos + cmd.name.size() + 1;
      const auto semi = line.find(';', body_start);
      if (semi == std::string_view::npos) {
        error_block(log, "Package tikz Error: Giving up on this path. Did you forget a semicolon?.",
                    line_no, line);
        break;
      }
      const std::string_view body = line.substr(body_start, semi - body_start);
      if (cmd.name == "node") {
        draw_node(canvas, body);
        pages = true;
      } else {
        draw_path(canvas, body, cmd.name == "fill" || cmd.name == "filldraw");
      }
      break;
    }
  }

  if (!fatal && !envs.empty()) {
    log << "! Emergency stop.\n<*> main.tex\n\n*** (job aborted, no legal \\end found)\n\n";
    fatal = true;
  }
  if (!fatal && !saw_document) {
    log << "\n! LaTeX Error: Missing \\begin{document}.\n\n";
    fatal = true;
  }

  CompileOutcome outcome;
  if (fatal) {
    log << "!  ==> Fatal error occurred, no output PDF file produced!\n";
  } else if (!pages) {
    log << "\nNo pages of output.\n";
  } else {
    log << ")\nOutput written on main.pdf (1 page, 1024 bytes).\n";
    outcome.artifact_produced = true;
  }
  log << "Transcript written on main.log.\n";
  outcome.log_text = log.str();

  const LogClassification cls =
      classify_log(outcome.log_text, outcome.artifact_produced, wrapped.mapping);
  outcome.status = cls.status;
  outcome.fatal_line = cls.fatal_line;
  if (outcome.artifact_produced && outcome.status != CompileStatus::FatalFailure) {
    outcome.raster = canvas.take();
  }
  return outcome;
}

RasterImage MockEngineHarness::render(const std::string& source) const {
  Canvas canvas(config_);
  for (const auto& line : split_lines(source)) {
    for (const auto& cmd : control_sequences(line)) {
      if (cmd.name != "draw" && cmd.name != "fill" && cmd.name != "filldraw" &&
          cmd.name != "path" && cmd.name != "node") {
        continue;
      }
      const std::size_t body_start = cmd.pos + cmd.name.size() + 1;
      const auto semi = line.find(';', body_start);
      if (semi == std::string::npos) break;
      const std::string_view body = std::string_view(line).substr(body_start, semi - body_start);
      if (cmd.name == "node") {
        draw_node(canvas, body);
      } else {
        draw_path(canvas, body, cmd.name == "fill" || cmd.name == "filldraw");
      }
      break;
    }
  }
  return canvas.take();
}

}  // namespace tikzmcts
