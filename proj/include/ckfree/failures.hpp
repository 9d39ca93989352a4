// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckfree::failures {

/// Per-hour whole-stage failure probability and the stages it may hit.
struct FailureRateSpec {
  double p_hour = 0.0;  // in [0, 1)
  std::vector<int> eligible_stages;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FailureEvent {
  long iteration = 0;  // 1-based
  int stage_id = 0;

  friend bool operator==(const FailureEvent&, const FailureEvent&) = default;
};

/// Seeded, serializable failure schedule shared identically across strategies.
struct FailureTrace {
  std::vector<FailureEvent> events;
  FailureRateSpec spec;
  double iteration_seconds = 3600.0;

  void validate() const;
  bool operator==(const FailureTrace&) const = default;
};

/// p_iter = 1 - (1 - p_hour)^(iteration_seconds/3600).
double hourly_to_per_iteration(double p_hour, double iteration_seconds);

/// Each (iteration, eligible stage) pair fails independently with
/// p_iter, drawn from a counter-based generator keyed by (seed, iteration,
/// stage). Iterations are 1-based. Pure function of its arguments.
FailureTrace generate_trace(const FailureRateSpec& spec, long num_iterations, double iteration_seconds);

std::string serialize_trace(const FailureTrace& trace);
FailureTrace parse_trace(const std::string& text, const std::string& context_name = "<string>");
void save_trace(const FailureTrace& trace, const std::string& path);
FailureTrace load_trace(const std::string& path);

/// Events where two adjacent stages are dead in the same iteration; such runs
/// are unrecoverable for neighbor-based strategies and redundant computation.
/// Returns the lower-stage event of each conflicting pair.
std::vector<FailureEvent> consecutive_conflicts(const FailureTrace& trace);

/// Stages [2, s-1]: the eligible set when first/last stages cannot be recovered.
std::vector<int> intermediate_stages(int num_stages);
std::vector<int> all_stages(int num_stages);

}  // namespace ckfree::failures
