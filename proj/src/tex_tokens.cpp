#include "tikzmcts/tex_tokens.hpp"

#include <cctype>

namespace tikzmcts {

namespace {

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '@'; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '.'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> tokenize_tex(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    std::size_t j = i + 1;
    if (c == '\\') {
      if (j < s.size() && is_letter(s[j])) {
        while (j < s.size() && is_letter(s[j])) ++j;
      } else if (j < s.size()) {
        ++j;
      }
      out.emplace_back(s.substr(i, j - i));
    } else if (is_space(c)) {
      while (j < s.size() && is_space(s[j])) ++j;
      out.emplace_back(" ");
    } else if (is_word(c)) {
      while (j < s.size() && is_word(s[j])) ++j;
      out.emplace_back(s.substr(i, j - i));
    } else {
      out.emplace_back(1, c);
    }
    i = j;
  }
  return out;
}

}  // namespace tikzmcts
