// SPDX-License-Identifier: Apache-2.0
//
// Poisson workloads and an SLO-attainment simulator for a placement.
//
// Each pipeline is one replica serving a single request at a time in FCFS
// order. On arrival a request is routed to the replica with the earliest
// predicted completion, max(now, replica drain time) + service time, ties to
// the lowest replica index. Service time is the pipeline's end-to-end cost
// for the request's task shape. A request meets its SLO when
// finish - arrival <= slo_scale * baseline_latency(task).

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "hexplan/assignment.h"
#include "hexplan/cluster.h"

namespace hexplan {

struct TaskTemplate {
  TaskSpec task;
  double weight = 1.0;
};

struct WorkloadSpec {
  double rate = 1.0;  // requests/s
  std::optional<int> horizon_requests;
  std::optional<double> horizon_seconds;
  std::vector<TaskTemplate> tasks;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Request {
  int id = 0;
  double arrival = 0.0;
  TaskSpec task;
};

struct SloConfig {
  double default_baseline = 0.0;  // seconds; used when no per-task entry matches
  std::vector<std::pair<TaskSpec, double>> per_task;
  double slo_scale = 1.0;
  double target = 0.99;

  double baseline_for(const TaskSpec& task) const;
  void validate() const;
};

struct RequestRecord {
  int id = 0;
  double arrival = 0.0;
  double start = 0.0;
  double finish = 0.0;
  int replica = 0;
  bool met = false;
  double baseline = 0.0;  // baseline latency of the request's task shape

  double latency() const { return finish - arrival; }
};

struct SloReport {
  double attainment = 0.0;
  std::vector<RequestRecord> per_request;
  std::optional<double> peak_rate_estimate;
};

std::vector<Request> generate_workload(const WorkloadSpec& spec);

/// Event-driven simulation. Throws std::invalid_argument for an assignment
/// with no pipelines.
SloReport simulate(const GlobalAssignment& assignment, const std::vector<Request>& requests, const SloConfig& slo,
                   const ModelSpec& model, const ClusterSpec& cluster);

/// Fraction of records whose latency is within `scale` times their baseline.
double attainment_at_scale(const std::vector<RequestRecord>& records, double scale);

struct SweepRow {
  double x = 0.0;  // rate or scale
  double attainment = 0.0;
};

struct RateSweep {
  std::vector<SweepRow> rows;
  std::optional<double> peak_rate;  // largest rate meeting slo.target
};

/// One simulation per rate. Every rate reuses the workload seed, so traces are
/// time-rescaled copies of one unit-rate realization.
RateSweep sweep_rate(const GlobalAssignment& assignment, const WorkloadSpec& workload, const SloConfig& slo,
                     const std::vector<double>& rates, const ModelSpec& model, const ClusterSpec& cluster);

/// One simulation; attainment re-thresholded per scale from the same trace.
std::vector<SweepRow> sweep_slo_scale(const GlobalAssignment& assignment, const std::vector<Request>& requests,
                                      const SloConfig& slo, const std::vector<double>& scales,
                                      const ModelSpec& model, const ClusterSpec& cluster);

/// Unloaded latency of a reference deployment, for use as a baseline.
double reference_latency(const Pipeline& reference, const ModelSpec& model, const TaskSpec& task,
                         const ClusterSpec& cluster);

WorkloadSpec workload_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WorkloadSpec& w);
SloConfig slo_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SloConfig& s);
nlohmann::json to_json(const SloReport& r);

}  // namespace hexplan
