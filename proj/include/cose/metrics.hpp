#pragma once

/**
 * Metrics stream: one IterationReport per line as a JSON object with a
 * fixed key set and floats at 6 significant digits. The stream is
 * append-only so a crashed run remains analyzable, and the formatting is
 * fully deterministic: identical reports serialize to identical bytes.
 * Wall-clock timing deliberately stays out of the stream.
 */

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cose/errors.hpp"
#include "cose/orchestrator.hpp"

#include "json.hpp"

namespace cose {

inline const std::vector<std::string>& metrics_keys() {
  static const std::vector<std::string> keys = {
      "step",     "proposed",    "accepted",     "solved",
      "mean_v",   "mean_c_v",    "mean_c_j",     "mean_w_s",
      "mean_reward_proposer",    "mean_reward_solver",
      "buffer_size",             "probe_accuracy",
  };
  return keys;
}

namespace detail {

inline std::string six_digits(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace detail

inline std::string serialize_metrics_line(const IterationReport& r) {
  using detail::six_digits;
  std::string out = "{";
  out += "\"step\":" + std::to_string(r.step);
  out += ",\"proposed\":" + std::to_string(r.proposed);
  out += ",\"accepted\":" + std::to_string(r.accepted);
  out += ",\"solved\":" + std::to_string(r.solved);
  out += ",\"mean_v\":" + six_digits(r.mean_v);
  out += ",\"mean_c_v\":" + six_digits(r.mean_c_v);
  out += ",\"mean_c_j\":" + six_digits(r.mean_c_j);
  out += ",\"mean_w_s\":" + six_digits(r.mean_w_s);
  out += ",\"mean_reward_proposer\":" + six_digits(r.mean_reward_proposer);
  out += ",\"mean_reward_solver\":" + six_digits(r.mean_reward_solver);
  out += ",\"buffer_size\":" + std::to_string(r.buffer_size);
  out += ",\"probe_accuracy\":" + six_digits(r.probe_accuracy);
  out += "}";
  return out;
}

// Parses one metrics line, requiring exactly the fixed key set.
inline IterationReport parse_metrics_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("metrics line is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInputError("metrics line is not a JSON object");
  const auto& keys = metrics_keys();
  if (j.size() != keys.size()) {
    throw InvalidInputError("metrics line has " + std::to_string(j.size()) + " keys, expected " +
                            std::to_string(keys.size()));
  }
  for (const std::string& key : keys) {
    if (!j.contains(key)) throw InvalidInputError("metrics line missing key '" + key + "'");
  }
  IterationReport r;
  r.step = j.at("step").get<int>();
  r.proposed = j.at("proposed").get<int>();
  r.accepted = j.at("accepted").get<int>();
  r.solved = j.at("solved").get<int>();
  r.mean_v = j.at("mean_v").get<double>();
  r.mean_c_v = j.at("mean_c_v").get<double>();
  r.mean_c_j = j.at("mean_c_j").get<double>();
  r.mean_w_s = j.at("mean_w_s").get<double>();
  r.mean_reward_proposer = j.at("mean_reward_proposer").get<double>();
  r.mean_reward_solver = j.at("mean_reward_solver").get<double>();
  r.buffer_size = j.at("buffer_size").get<int>();
  r.probe_accuracy = j.at("probe_accuracy").get<double>();
  return r;
}

struct ParsedMetrics {
  std::vector<IterationReport> reports;
  size_t skipped_lines = 0;
};

// Reads a whole stream, skipping malformed records; fails only when no
// valid record remains. Step indices must be strictly increasing.
inline ParsedMetrics read_metrics(std::istream& in, std::ostream* warnings = nullptr) {
  ParsedMetrics out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.reports.push_back(parse_metrics_line(line));
    } catch (const InvalidInputError& e) {
      ++out.skipped_lines;
      if (warnings) *warnings << "metrics line " << line_no << " skipped: " << e.what() << "\n";
      continue;
    }
    if (out.reports.size() >= 2 &&
        out.reports[out.reports.size() - 2].step >= out.reports.back().step) {
      throw InvalidInputError("metrics stream steps are not strictly increasing at line " +
                              std::to_string(line_no));
    }
  }
  if (out.reports.empty()) {
    throw InvalidInputError("metrics stream contains no valid records");
  }
  return out;
}

}  // namespace cose
