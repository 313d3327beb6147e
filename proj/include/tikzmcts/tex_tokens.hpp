#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tikzmcts {

/// Splits TeX source into coarse tokens:
///   - a control sequence (`\name`, or `\` plus one non-letter) is one token;
///   - a whitespace run collapses to a single " " token;
///   - a run of letters/digits/'.' is one token (so "0.5" and "draw" are atomic);
///   - every other character (braces, brackets, delimiters, operators) stands alone.
std::vector<std::string> tokenize_tex(std::string_view source);

}  // namespace tikzmcts
