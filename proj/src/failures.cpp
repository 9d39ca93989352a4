// SPDX-License-Identifier: Apache-2.0

#include "ckfree/failures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ckfree/errors.hpp"
#include "ckfree/rng.hpp"

namespace ckfree::failures {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void parse_fail(const std::string& context, std::size_t line, const std::string& msg) {
  throw ParseError(context + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

void FailureRateSpec::validate() const {
  if (p_hour < 0.0 || p_hour >= 1.0) throw ConfigError("p_hour must lie in [0, 1)");
  for (int s : eligible_stages)
    if (s < 1) throw ConfigError("stage ids are 1-based");
}

void FailureTrace::validate() const {
  spec.validate();
  if (iteration_seconds <= 0.0) throw ConfigError("iteration_seconds must be positive");
  std::set<int> eligible(spec.eligible_stages.begin(), spec.eligible_stages.end());
  long prev_iter = 0;
  std::set<std::pair<long, int>> seen;
  for (const auto& e : events) {
    if (e.iteration < 1) throw ConfigError("trace iterations are 1-based");
    if (e.iteration < prev_iter) throw ConfigError("trace events must be sorted by iteration");
    if (e.stage_id < 1) throw ConfigError("stage ids are 1-based");
    if (eligible.find(e.stage_id) == eligible.end())
      throw ConfigError("trace event targets stage " + std::to_string(e.stage_id) +
                        " outside the eligible set");
    if (!seen.insert({e.iteration, e.stage_id}).second)
      throw ConfigError("duplicate event for stage " + std::to_string(e.stage_id) + " at iteration " +
                        std::to_string(e.iteration));
    prev_iter = e.iteration;
  }
}

double hourly_to_per_iteration(double p_hour, double iteration_seconds) {
  if (p_hour < 0.0 || p_hour >= 1.0) throw ConfigError("p_hour must lie in [0, 1)");
  if (iteration_seconds <= 0.0) throw ConfigError("iteration_seconds must be positive");
  return 1.0 - std::pow(1.0 - p_hour, iteration_seconds / 3600.0);
}

FailureTrace generate_trace(const FailureRateSpec& spec, long num_iterations, double iteration_seconds) {
  spec.validate();
  if (num_iterations <= 0) throw ConfigError("num_iterations must be positive");
  const double p_iter = hourly_to_per_iteration(spec.p_hour, iteration_seconds);

  FailureTrace trace;
  trace.spec = spec;
  trace.iteration_seconds = iteration_seconds;

  std::vector<int> stages = spec.eligible_stages;
  std::sort(stages.begin(), stages.end());
  for (long iter = 1; iter <= num_iterations; ++iter) {
    for (int stage : stages) {
      const double u = rng::unit_at(spec.seed, static_cast<std::uint64_t>(iter),
                                    static_cast<std::uint64_t>(stage));
      if (u < p_iter) trace.events.push_back({iter, stage});
    }
  }
  return trace;
}

std::string serialize_trace(const FailureTrace& trace) {
  std::ostringstream out;
  out << "checkfree-trace v1 seed=" << trace.spec.seed << " p_hour=" << format_double(trace.spec.p_hour)
      << " iter_s=" << format_double(trace.iteration_seconds) << " stages=";
  for (std::size_t i = 0; i < trace.spec.eligible_stages.size(); ++i) {
    if (i) out << ',';
    out << trace.spec.eligible_stages[i];
  }
  out << '\n';
  for (const auto& e : trace.events) out << e.iteration << ',' << e.stage_id << '\n';
  return out.str();
}

FailureTrace parse_trace(const std::string& text, const std::string& context_name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) parse_fail(context_name, 1, "empty trace file");

  FailureTrace trace;
  {
    std::istringstream header(line);
    std::string magic, version;
    header >> magic >> version;
    if (magic != "checkfree-trace" || version != "v1")
      parse_fail(context_name, 1, "expected header 'checkfree-trace v1'");
    std::string kv;
    while (header >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) parse_fail(context_name, 1, "malformed header field '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "seed") {
          trace.spec.seed = std::stoull(val);
        } else if (key == "p_hour") {
          trace.spec.p_hour = std::stod(val);
        } else if (key == "iter_s") {
          trace.iteration_seconds = std::stod(val);
        } else if (key == "stages") {
          std::istringstream list(val);
          std::string tok;
          while (std::getline(list, tok, ','))
            if (!tok.empty()) trace.spec.eligible_stages.push_back(std::stoi(tok));
        } else {
          parse_fail(context_name, 1, "unknown header field '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        parse_fail(context_name, 1, "invalid value for '" + key + "'");
      } catch (const std::out_of_range&) {
        parse_fail(context_name, 1, "value out of range for '" + key + "'");
      }
    }
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    long iter = 0;
    int stage = 0;
    if (std::sscanf(line.c_str(), "%ld,%d", &iter, &stage) != 2)
      parse_fail(context_name, lineno, "expected 'iteration,stage'");
    trace.events.push_back({iter, stage});
  }

  try {
    trace.validate();
  } catch (const ConfigError& e) {
    throw ParseError(context_name + ": " + e.what());
  }
  return trace;
}

void save_trace(const FailureTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << serialize_trace(trace);
}

FailureTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trace file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), path);
}

std::vector<FailureEvent> consecutive_conflicts(const FailureTrace& trace) {
  std::vector<FailureEvent> conflicts;
  std::size_t i = 0;
  while (i < trace.events.size()) {
    std::size_t j = i;
    while (j < trace.events.size() && trace.events[j].iteration == trace.events[i].iteration) ++j;
    std::set<int> stages;
    for (std::size_t k = i; k < j; ++k) stages.insert(trace.events[k].stage_id);
    for (int s : stages)
      if (stages.count(s + 1)) conflicts.push_back({trace.events[i].iteration, s});
    i = j;
  }
  return conflicts;
}

std::vector<int> intermediate_stages(int num_stages) {
  std::vector<int> out;
  for (int s = 2; s < num_stages; ++s) out.push_back(s);
  return out;
}

std::vector<int> all_stages(int num_stages) {
  std::vector<int> out;
  for (int s = 1; s <= num_stages; ++s) out.push_back(s);
  return out;
}

}  // namespace ckfree::failures
