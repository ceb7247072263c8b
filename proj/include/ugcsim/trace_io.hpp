#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>

#include "ugcsim/runtime.hpp"

namespace ugcsim {

inline constexpr int kTraceSchemaVersion = 1;

// Trace files are line-delimited JSON:
//   {"schema":"ugcsim.trace","version":1, post_id, n_agents, rounds, seed, mode, config_digest}
//   {"kind":"step", step, activated, actions, opinions, opinion_digest, m_num, m_text, warnings}
//   ... one line per completed step ...
//   {"kind":"end", complete, error, features}

std::string trace_header_line(const PropagationTrace& trace);
std::string trace_step_line(const StepRecord& step);
std::string trace_end_line(const PropagationTrace& trace);

/// The whole trace as file content.
std::string serialize_trace(const PropagationTrace& trace);

PropagationTrace parse_trace(std::istream& in);
PropagationTrace read_trace(const std::filesystem::path& path);

/// Streams a trace to disk: header on open, one flushed line per step.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const PropagationTrace& meta);
  void append(const StepRecord& step);
  void finish(const PropagationTrace& trace);

 private:
  std::ofstream out_;
};

std::string features_json(const PropagationFeatures& f);
PropagationFeatures features_from_json(const std::string& s);

}  // namespace ugcsim
