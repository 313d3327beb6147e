#include "tikzmcts/program.hpp"

#include <algorithm>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/hashing.hpp"

namespace tikzmcts {

namespace {

void check_line(const std::string& line) {
  if (line.find_first_of("\r\n") != std::string::npos) {
    throw ContractViolation("program line contains a line separator");
  }
}

}  // namespace

ProgramState::ProgramState(std::vector<std::string> lines) : lines_(std::move(lines)) {
  std::for_each(lines_.begin(), lines_.end(), check_line);
}

ProgramState ProgramState::from_text(std::string_view text) {
  return ProgramState(split_lines(text));
}

void ProgramState::push_back(std::string line) {
  check_line(line);
  lines_.push_back(std::move(line));
}

ProgramState ProgramState::prefix(std::size_t n) const {
  n = std::min(n, lines_.size());
  return ProgramState(std::vector<std::string>(lines_.begin(), lines_.begin() + n));
}

bool ProgramState::is_prefix_of(const std::vector<std::string>& lines) const {
  return lines_.size() <= lines.size() && std::equal(lines_.begin(), lines_.end(), lines.begin());
}

bool ProgramState::is_prefix_of(const ProgramState& other) const {
  return is_prefix_of(other.lines_);
}

std::string ProgramState::text() const { return join_lines(lines_); }

std::string ProgramState::key() const { return key_of_lines(lines_, lines_.size()); }

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.emplace_back(line);
    start = end + 1;
  }
  return out;
}

std::string key_of_lines(const std::vector<std::string>& lines, std::size_t count) {
  count = std::min(count, lines.size());
  std::string joined;
  for (std::size_t i = 0; i < count; ++i) {
    joined += lines[i];
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

}  // namespace tikzmcts
