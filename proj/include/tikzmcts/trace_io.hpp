#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tikzmcts/search.hpp"

namespace tikzmcts {

/// One JSON object per line, fields in this order:
///   sim, t_offset_s, reward, status, tokens, unique, program_sha256,
///   artifact, reused, program_tokens
std::string trace_event_to_jsonl(const TraceEvent& ev);
TraceEvent trace_event_from_json(const std::string& line);

void write_trace_jsonl(std::ostream& out, const SearchTrace& trace);
void write_trace_jsonl(const std::filesystem::path& path, const SearchTrace& trace);

/// Blank lines are skipped; malformed lines raise ProtocolError naming the line.
SearchTrace read_trace_jsonl(std::istream& in);
SearchTrace read_trace_jsonl(const std::filesystem::path& path);

}  // namespace tikzmcts
