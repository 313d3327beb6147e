#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tikzmcts {

/// An ordered sequence of program lines; the state of a tree node at depth
/// `depth()`. Lines never contain a line separator.
class ProgramState {
 public:
  ProgramState() = default;
  /// Throws ContractViolation if any line contains '\n' or '\r'.
  explicit ProgramState(std::vector<std::string> lines);

  static ProgramState from_text(std::string_view text);

  const std::vector<std::string>& lines() const { return lines_; }
  std::size_t depth() const { return lines_.size(); }

  void push_back(std::string line);
  ProgramState prefix(std::size_t n) const;
  bool is_prefix_of(const ProgramState& other) const;
  bool is_prefix_of(const std::vector<std::string>& lines) const;

  /// Lines joined with '\n', no trailing newline.
  std::string text() const;

  /// Content hash used as the fault-memo key.
  std::string key() const;

  bool operator==(const ProgramState&) const = default;

 private:
  std::vector<std::string> lines_;
};

std::string join_lines(const std::vector<std::string>& lines);
/// Splits on "\n" (tolerating "\r\n"); a trailing newline does not produce an
/// empty final line.
std::vector<std::string> split_lines(std::string_view text);
std::string key_of_lines(const std::vector<std::string>& lines, std::size_t count);

}  // namespace tikzmcts
