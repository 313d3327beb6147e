#include "tikzmcts/trace_io.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

using Json = nlohmann::ordered_json;

std::string trace_event_to_jsonl(const TraceEvent& ev) {
  Json j;
  j["sim"] = ev.sim;
  j["t_offset_s"] = ev.t_offset_s;
  j["reward"] = ev.reward;
  j["status"] = to_string(ev.status);
  j["tokens"] = ev.tokens;
  j["unique"] = ev.unique;
  j["program_sha256"] = ev.program_sha256;
  j["artifact"] = ev.artifact;
  j["reused"] = ev.reused;
  j["program_tokens"] = ev.program_tokens;
  return j.dump();
}

TraceEvent trace_event_from_json(const std::string& line) {
  try {
    const Json j = Json::parse(line);
    TraceEvent ev;
    ev.sim = j.at("sim").get<std::size_t>();
    ev.t_offset_s = j.at("t_offset_s").get<double>();
    ev.reward = j.at("reward").get<double>();
    ev.status = compile_status_from_string(j.at("status").get<std::string>());
    ev.tokens = j.at("tokens").get<int>();
    ev.unique = j.at("unique").get<bool>();
    ev.program_sha256 = j.at("program_sha256").get<std::string>();
    ev.artifact = j.value("artifact", ev.status != CompileStatus::FatalFailure);
    ev.reused = j.value("reused", false);
    ev.program_tokens = j.value("program_tokens", 0);
    return ev;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad trace record: ") + e.what());
  }
}

void write_trace_jsonl(std::ostream& out, const SearchTrace& trace) {
  for (const auto& ev : trace.events) out << trace_event_to_jsonl(ev) << '\n';
}

void write_trace_jsonl(const std::filesystem::path& path, const SearchTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EnvironmentError("cannot write " + path.string());
  write_trace_jsonl(out, trace);
}

SearchTrace read_trace_jsonl(std::istream& in) {
  SearchTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      trace.events.push_back(trace_event_from_json(line));
    } catch (const Error& e) {
      throw ProtocolError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trace;
}

SearchTrace read_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read " + path.string());
  return read_trace_jsonl(in);
}

}  // namespace tikzmcts
