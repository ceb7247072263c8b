#include "ugcsim/trace_io.hpp"

#include <sstream>

#include <json.hpp>

#include "ugcsim/error.hpp"

namespace ugcsim {

using nlohmann::ordered_json;

namespace {

ordered_json action_to_json(const AgentAction& a) {
  ordered_json j = {{"agent", a.agent_id}, {"kind", to_string(a.kind)}};
  if (a.target) j["target"] = *a.target;
  if (a.content) j["content"] = *a.content;
  return j;
}

AgentAction action_from_json(const ordered_json& j) {
  AgentAction a;
  a.agent_id = j.at("agent").get<AgentId>();
  const auto kind = parse_action_kind(j.at("kind").get<std::string>());
  if (!kind) throw DataIntegrityError("unknown action kind in trace");
  a.kind = *kind;
  if (j.contains("target")) a.target = j["target"].get<std::string>();
  if (j.contains("content")) a.content = j["content"].get<std::string>();
  return a;
}

ordered_json features_to_ordered(const PropagationFeatures& f) {
  ordered_json hist = ordered_json::object();
  for (auto k : kAllActionKinds) {
    hist[std::string(to_string(k))] = f.action_histogram[static_cast<std::size_t>(k)];
  }
  return {{"m_num_series", f.m_num_series},
          {"final_summary", f.final_summary},
          {"action_histogram", hist},
          {"share_above_7_5", f.share_above_7_5}};
}

PropagationFeatures features_from_ordered(const ordered_json& j) {
  PropagationFeatures f;
  f.m_num_series = j.at("m_num_series").get<std::vector<double>>();
  f.final_summary = j.at("final_summary").get<std::string>();
  for (auto k : kAllActionKinds) {
    f.action_histogram[static_cast<std::size_t>(k)] =
        j.at("action_histogram").value(std::string(to_string(k)), std::size_t{0});
  }
  f.share_above_7_5 = j.at("share_above_7_5").get<double>();
  return f;
}

}  // namespace

std::string features_json(const PropagationFeatures& f) { return features_to_ordered(f).dump(); }

PropagationFeatures features_from_json(const std::string& s) {
  try {
    return features_from_ordered(ordered_json::parse(s));
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed features record: ") + e.what());
  }
}

std::string trace_header_line(const PropagationTrace& t) {
  ordered_json j = {{"schema", "ugcsim.trace"},
                    {"version", kTraceSchemaVersion},
                    {"post_id", t.post_id},
                    {"n_agents", t.n_agents},
                    {"rounds", t.rounds},
                    {"seed", t.seed},
                    {"mode", to_string(t.mode)},
                    {"config_digest", t.config_digest}};
  return j.dump();
}

std::string trace_step_line(const StepRecord& s) {
  ordered_json actions = ordered_json::array();
  for (const auto& a : s.actions) actions.push_back(action_to_json(a));
  ordered_json j = {{"kind", "step"},
                    {"step", s.step},
                    {"activated", s.activated},
                    {"actions", actions},
                    {"opinions", s.opinions},
                    {"opinion_digest", s.opinion_digest},
                    {"m_num", s.m_num},
                    {"m_text", s.m_text},
                    {"warnings", s.warnings}};
  return j.dump();
}

std::string trace_end_line(const PropagationTrace& t) {
  ordered_json j = {{"kind", "end"}, {"complete", t.complete}};
  j["error"] = t.error.empty() ? ordered_json(nullptr) : ordered_json(t.error);
  j["features"] = t.complete ? features_to_ordered(extract_features(t)) : ordered_json(nullptr);
  return j.dump();
}

std::string serialize_trace(const PropagationTrace& trace) {
  std::string out = trace_header_line(trace) + '\n';
  for (const auto& s : trace.steps) out += trace_step_line(s) + '\n';
  out += trace_end_line(trace) + '\n';
  return out;
}

PropagationTrace parse_trace(std::istream& in) {
  PropagationTrace t;
  std::string line;
  if (!std::getline(in, line)) throw DataIntegrityError("trace file is empty");
  bool ended = false;
  try {
    const auto h = ordered_json::parse(line);
    if (h.value("schema", "") != "ugcsim.trace") throw DataIntegrityError("not a trace file");
    if (h.value("version", 0) != kTraceSchemaVersion) {
      throw DataIntegrityError("unsupported trace version");
    }
    t.post_id = h.at("post_id").get<std::string>();
    t.n_agents = h.at("n_agents").get<std::size_t>();
    t.rounds = h.at("rounds").get<std::size_t>();
    t.seed = h.at("seed").get<std::uint64_t>();
    t.mode = parse_sim_mode(h.at("mode").get<std::string>());
    t.config_digest = h.at("config_digest").get<std::string>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "step") {
        StepRecord s;
        s.step = j.at("step").get<int>();
        s.activated = j.at("activated").get<std::vector<AgentId>>();
        for (const auto& a : j.at("actions")) s.actions.push_back(action_from_json(a));
        s.opinions = j.at("opinions").get<std::vector<double>>();
        s.opinion_digest = j.at("opinion_digest").get<std::string>();
        s.m_num = j.at("m_num").get<double>();
        s.m_text = j.at("m_text").get<std::string>();
        s.warnings = j.at("warnings").get<std::vector<std::string>>();
        if (s.step != static_cast<int>(t.steps.size()) + 1) {
          throw DataIntegrityError("trace steps are not contiguous");
        }
        if (s.opinions.size() != t.n_agents) {
          throw DataIntegrityError("opinion vector length does not match n_agents");
        }
        t.steps.push_back(std::move(s));
      } else if (kind == "end") {
        t.complete = j.at("complete").get<bool>();
        if (!j.at("error").is_null()) t.error = j["error"].get<std::string>();
        ended = true;
      } else {
        throw DataIntegrityError("unknown trace record kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed trace record: ") + e.what());
  }
  // A trace without an end record was interrupted mid-run.
  if (!ended) t.complete = false;
  if (t.complete && t.steps.size() != t.rounds) {
    throw DataIntegrityError("complete trace has fewer steps than rounds");
  }
  return t;
}

PropagationTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataIntegrityError("cannot read trace " + path.string());
  return parse_trace(in);
}

TraceWriter::TraceWriter(const std::filesystem::path& path, const PropagationTrace& meta)
    : out_(path, std::ios::trunc) {
  if (!out_) throw DataIntegrityError("cannot write trace " + path.string());
  out_ << trace_header_line(meta) << '\n';
  out_.flush();
}

void TraceWriter::append(const StepRecord& step) {
  out_ << trace_step_line(step) << '\n';
  out_.flush();
}

void TraceWriter::finish(const PropagationTrace& trace) {
  out_ << trace_end_line(trace) << '\n';
  out_.flush();
}

}  // namespace ugcsim
