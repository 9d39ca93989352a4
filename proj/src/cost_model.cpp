// SPDX-License-Identifier: Apache-2.0

#include "ckfree/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ckfree/errors.hpp"

namespace ckfree::cost {

using recovery::StrategyConfig;
using recovery::StrategyKind;

void NetworkProfile::validate() const {
  const std::size_t n = locations.size();
  if (n == 0) throw ConfigError("network profile needs at least one location");
  if (latency_s.rows != n || latency_s.cols != n || bandwidth_bps.rows != n || bandwidth_bps.cols != n)
    throw ConfigError("latency/bandwidth matrices must be square over the locations");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (latency_s.at(i, j) < 0.0) throw ConfigError("latencies must be nonnegative");
      if (i != j && bandwidth_bps.at(i, j) <= 0.0) throw ConfigError("bandwidths must be positive");
    }
  if (assignment.empty()) throw ConfigError("stage assignment must be total");
  for (int loc : assignment)
    if (loc < 0 || static_cast<std::size_t>(loc) >= n)
      throw ConfigError("stage assigned to unknown location");
}

double NetworkProfile::link_latency(int stage_a, int stage_b) const {
  return latency_s.at(static_cast<std::size_t>(assignment[static_cast<std::size_t>(stage_a - 1)]),
                      static_cast<std::size_t>(assignment[static_cast<std::size_t>(stage_b - 1)]));
}

double NetworkProfile::link_bandwidth(int stage_a, int stage_b) const {
  const int la = assignment[static_cast<std::size_t>(stage_a - 1)];
  const int lb = assignment[static_cast<std::size_t>(stage_b - 1)];
  if (la == lb) return bandwidth_bps.at(static_cast<std::size_t>(la), static_cast<std::size_t>(lb)) > 0.0
                           ? bandwidth_bps.at(static_cast<std::size_t>(la), static_cast<std::size_t>(lb))
                           : 1e12;  // co-located stages: treat as effectively unconstrained
  return bandwidth_bps.at(static_cast<std::size_t>(la), static_cast<std::size_t>(lb));
}

double NetworkProfile::storage_latency() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < locations.size(); ++i)
    for (std::size_t j = 0; j < locations.size(); ++j)
      if (i != j) worst = std::max(worst, latency_s.at(i, j));
  return worst;
}

double NetworkProfile::storage_bandwidth() const {
  double worst = 0.0;
  bool found = false;
  for (std::size_t i = 0; i < locations.size(); ++i)
    for (std::size_t j = 0; j < locations.size(); ++j)
      if (i != j) {
        const double bw = bandwidth_bps.at(i, j);
        worst = found ? std::min(worst, bw) : bw;
        found = true;
      }
  return found ? worst : 1e12;
}

NetworkProfile NetworkProfile::synthetic_default(int num_stages) {
  NetworkProfile p;
  p.locations = {"us-east", "eu-west", "asia-se", "us-west", "eu-north"};
  const std::size_t n = p.locations.size();
  p.latency_s = Matrix(n, n);
  p.bandwidth_bps = Matrix(n, n);
  // Latencies 50-150 ms, bandwidths 100-500 Mb/s, symmetric, deterministic.
  static const double lat_ms[5][5] = {{0, 80, 150, 60, 90},
                                      {80, 0, 120, 110, 50},
                                      {150, 120, 0, 130, 140},
                                      {60, 110, 130, 0, 100},
                                      {90, 50, 140, 100, 0}};
  static const double bw_mbit[5][5] = {{10000, 300, 100, 400, 250},
                                       {300, 10000, 150, 200, 500},
                                       {100, 150, 10000, 120, 140},
                                       {400, 200, 120, 10000, 220},
                                       {250, 500, 140, 220, 10000}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      p.latency_s.at(i, j) = lat_ms[i][j] / 1000.0;
      p.bandwidth_bps.at(i, j) = bw_mbit[i][j] * 1e6 / 8.0;
    }
  p.assignment.resize(static_cast<std::size_t>(num_stages));
  for (int s = 0; s < num_stages; ++s) p.assignment[static_cast<std::size_t>(s)] = s % static_cast<int>(n);
  p.validate();
  return p;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_profile(const NetworkProfile& profile) {
  std::ostringstream out;
  out << "ckfree-net v1\n";
  out << "sites";
  for (const auto& loc : profile.locations) out << ' ' << loc;
  out << "\nassignment";
  for (int loc : profile.assignment) out << ' ' << loc;
  out << "\nlatency\n";
  for (std::size_t i = 0; i < profile.latency_s.rows; ++i) {
    for (std::size_t j = 0; j < profile.latency_s.cols; ++j)
      out << (j ? " " : "") << fmt(profile.latency_s.at(i, j));
    out << '\n';
  }
  out << "bandwidth\n";
  for (std::size_t i = 0; i < profile.bandwidth_bps.rows; ++i) {
    for (std::size_t j = 0; j < profile.bandwidth_bps.cols; ++j)
      out << (j ? " " : "") << fmt(profile.bandwidth_bps.at(i, j));
    out << '\n';
  }
  return out.str();
}

NetworkProfile parse_profile(const std::string& text, const std::string& context_name) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(context_name + ": unexpected end of file, expected " + what);
    ++lineno;
  };

  next_line("header");
  if (line != "ckfree-net v1")
    throw ParseError(context_name + ":1: expected header 'ckfree-net v1'");

  NetworkProfile p;
  next_line("site list");
  {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok != "sites") throw ParseError(context_name + ":" + std::to_string(lineno) + ": expected 'sites'");
    while (ls >> tok) p.locations.push_back(tok);
  }
  next_line("assignment");
  {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok != "assignment")
      throw ParseError(context_name + ":" + std::to_string(lineno) + ": expected 'assignment'");
    int loc;
    while (ls >> loc) p.assignment.push_back(loc);
  }
  const std::size_t n = p.locations.size();
  auto read_matrix = [&](const char* name) {
    next_line(name);
    if (line != name) throw ParseError(context_name + ":" + std::to_string(lineno) + ": expected '" + name + "'");
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      next_line("matrix row");
      std::istringstream ls(line);
      for (std::size_t j = 0; j < n; ++j)
        if (!(ls >> m.at(i, j)))
          throw ParseError(context_name + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(n) + " values");
    }
    return m;
  };
  p.latency_s = read_matrix("latency");
  p.bandwidth_bps = read_matrix("bandwidth");
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ParseError(context_name + ": " + e.what());
  }
  return p;
}

void save_profile(const NetworkProfile& profile, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << serialize_profile(profile);
}

NetworkProfile load_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open profile '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_profile(buf.str(), path);
}

void CostParams::validate() const {
  if (fwd_seconds <= 0.0 || bwd_seconds <= 0.0) throw ConfigError("compute seconds must be positive");
  if (bwd_seconds < fwd_seconds) throw ConfigError("backward must cost at least as much as forward");
  if (activation_bytes == 0 || stage_weight_bytes == 0 || edge_weight_bytes == 0 || full_model_bytes == 0)
    throw ConfigError("message sizes must be positive");
  if (num_microbatches < 1) throw ConfigError("microbatch count must be positive");
  if (edge_weight_bytes >= stage_weight_bytes)
    std::cerr << "warning: edge layers are not smaller than a stage (" << edge_weight_bytes
              << " >= " << stage_weight_bytes << " bytes); replica overhead will be significant\n";
}

CostParams CostParams::from_model(const ModelSpec& spec, std::size_t batch_size, int num_microbatches,
                                  double fwd_seconds, double bwd_seconds) {
  CostParams p;
  p.fwd_seconds = fwd_seconds;
  p.bwd_seconds = bwd_seconds;
  p.num_microbatches = num_microbatches;
  const std::size_t mb_rows = batch_size / static_cast<std::size_t>(num_microbatches);
  p.activation_bytes = mb_rows * spec.model_dim * sizeof(double);
  std::size_t max_stage = 0, total = 0;
  for (std::size_t i = 0; i < spec.num_stages; ++i) {
    const std::size_t blocks = spec.partition[i].count();
    const std::size_t params = blocks * (spec.model_dim * spec.hidden_dim * 2);
    max_stage = std::max(max_stage, params);
    total += params;
  }
  const std::size_t embed = spec.input_dim * spec.model_dim;
  const std::size_t deembed = spec.model_dim * spec.output_dim;
  p.stage_weight_bytes = max_stage * sizeof(double);
  p.edge_weight_bytes = std::max(embed, deembed) * sizeof(double);
  // Adam moments double the serialized model, matching the checkpoint payload.
  p.full_model_bytes = (total + embed + deembed) * 3 * sizeof(double);
  return p;
}

IterationCost iteration_cost(const StrategyConfig& strategy, const NetworkProfile& profile,
                             const CostParams& params) {
  profile.validate();
  params.validate();
  strategy.validate();
  const int s = profile.num_stages();
  const bool rc = strategy.kind == StrategyKind::RedundantComputation;

  // Redundant computation halves the microbatch size and doubles the count to
  // fit the extra stage in memory; each microbatch then carries one redundant
  // forward per stage.
  const int mb = rc ? 2 * params.num_microbatches : params.num_microbatches;
  const double fwd = rc ? params.fwd_seconds / 2.0 : params.fwd_seconds;
  const double bwd = rc ? params.bwd_seconds / 2.0 : params.bwd_seconds;
  const double act_bytes = rc ? static_cast<double>(params.activation_bytes) / 2.0
                              : static_cast<double>(params.activation_bytes);
  const double per_stage = rc ? 2.0 * fwd + bwd : fwd + bwd;

  IterationCost cost;
  cost.compute = static_cast<double>(mb) * static_cast<double>(s) * per_stage;

  for (int b = 1; b < s; ++b) {
    const double lat = profile.link_latency(b, b + 1);
    const double bw = profile.link_bandwidth(b, b + 1);
    cost.communication += static_cast<double>(mb) * (lat + act_bytes / bw);
  }

  if (strategy.kind == StrategyKind::CheckFreePlus && s >= 2) {
    // Edge replicas refresh every iteration: embedding to stage 2's node,
    // de-embedding to stage s-1's node.
    const double e = static_cast<double>(params.edge_weight_bytes);
    cost.communication += profile.link_latency(1, 2) + e / profile.link_bandwidth(1, 2);
    cost.communication += profile.link_latency(s, s - 1) + e / profile.link_bandwidth(s, s - 1);
  }

  if (rc) {
    // Post-step weight refresh so the redundant copies stay current: every
    // stage ships its weights to the node holding its redundancy (ring order).
    for (int i = 1; i <= s; ++i) {
      const int holder = i == 1 ? s : i - 1;
      cost.communication += profile.link_latency(i, holder) +
                            static_cast<double>(params.stage_weight_bytes) / profile.link_bandwidth(i, holder);
    }
  }

  if (strategy.kind == StrategyKind::Checkpointing) {
    const double upload = static_cast<double>(params.full_model_bytes) / profile.storage_bandwidth();
    const double interval = static_cast<double>(strategy.checkpoint_interval);
    cost.checkpoint_overhead =
        strategy.blocking_checkpoint_upload ? (profile.storage_latency() + upload) / interval
                                            : upload / interval;
  }
  return cost;
}

double iteration_time(const StrategyConfig& strategy, const NetworkProfile& profile,
                      const CostParams& params) {
  return iteration_cost(strategy, profile, params).total();
}

double recovery_time(const StrategyConfig& strategy, const NetworkProfile& profile,
                     const CostParams& params, int failed_stage) {
  const int s = profile.num_stages();
  if (failed_stage < 1 || failed_stage > s) throw ConfigError("failed stage out of range");
  const double stage_bytes = static_cast<double>(params.stage_weight_bytes);
  const bool edge = failed_stage == 1 || failed_stage == s;

  auto two_neighbor_transfer = [&]() {
    // Both neighbor stages stream concurrently to the replacement node; the
    // two accompanying gradient-norm scalars are free.
    const double a = profile.link_latency(failed_stage - 1, failed_stage) +
                     stage_bytes / profile.link_bandwidth(failed_stage - 1, failed_stage);
    const double b = profile.link_latency(failed_stage + 1, failed_stage) +
                     stage_bytes / profile.link_bandwidth(failed_stage + 1, failed_stage);
    return std::max(a, b);
  };

  switch (strategy.kind) {
    case StrategyKind::NoFailures:
      return 0.0;
    case StrategyKind::ReinitRandom:
      if (edge)
        throw UnsupportedRecoveryError("random reinitialization covers intermediate stages only");
      return 0.0;  // local initialization, nothing to transfer
    case StrategyKind::ReinitCopy: {
      if (edge) throw UnsupportedRecoveryError("copy reinitialization covers intermediate stages only");
      return profile.link_latency(failed_stage - 1, failed_stage) +
             stage_bytes / profile.link_bandwidth(failed_stage - 1, failed_stage);
    }
    case StrategyKind::ReinitUniformAvg:
    case StrategyKind::CheckFree:
      if (edge)
        throw UnsupportedRecoveryError("neighbor averaging cannot recover the first or last stage");
      return two_neighbor_transfer();
    case StrategyKind::CheckFreePlus: {
      if (!edge) return two_neighbor_transfer();
      const int neighbor = failed_stage == 1 ? 2 : s - 1;
      const double bw = profile.link_bandwidth(neighbor, failed_stage);
      return profile.link_latency(neighbor, failed_stage) +
             (stage_bytes + static_cast<double>(params.edge_weight_bytes)) / bw;
    }
    case StrategyKind::RedundantComputation: {
      const int holder = failed_stage == 1 ? s : failed_stage - 1;
      return profile.link_latency(holder, failed_stage) +
             stage_bytes / profile.link_bandwidth(holder, failed_stage);
    }
    case StrategyKind::Checkpointing:
      return profile.storage_latency() +
             static_cast<double>(params.full_model_bytes) / profile.storage_bandwidth();
  }
  return 0.0;
}

TrainTime train_time(long iterations_to_target, const IterationCost& per_iteration,
                     const std::vector<failures::FailureEvent>& events,
                     const StrategyConfig& strategy, const NetworkProfile& profile,
                     const CostParams& params) {
  if (iterations_to_target < 0) throw ConfigError("iterations_to_target must be nonnegative");
  TrainTime out;
  const double iters = static_cast<double>(iterations_to_target);
  out.breakdown.compute = iters * per_iteration.compute;
  out.breakdown.communication = iters * per_iteration.communication;
  out.breakdown.checkpoint_overhead = iters * per_iteration.checkpoint_overhead;

  for (const auto& e : events) out.breakdown.recovery += recovery_time(strategy, profile, params, e.stage_id);

  if (strategy.kind == StrategyKind::Checkpointing) {
    // Analytic replay mirroring the trainer: one slot per iteration, snapshot
    // every interval completed iterations, one rollback per failure iteration.
    const long interval = strategy.checkpoint_interval;
    long model_iter = 0;
    long prev_slot = 0;
    long lost = 0;
    std::size_t i = 0;
    while (i < events.size()) {
      const long slot = events[i].iteration;
      model_iter += slot - prev_slot;
      prev_slot = slot;
      const long snap = (model_iter / interval) * interval;
      lost += model_iter - snap;
      model_iter = snap;
      while (i < events.size() && events[i].iteration == slot) ++i;  // one rollback per iteration
    }
    out.breakdown.rollback_lost = static_cast<double>(lost) * per_iteration.total();
  }

  out.hours = out.breakdown.total() / 3600.0;
  return out;
}

}  // namespace ckfree::cost
