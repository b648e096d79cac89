// SPDX-License-Identifier: Apache-2.0
//
// Closed-form generative-inference cost and memory model for one pipeline
// stage, and its composition into an end-to-end pipeline cost.
//
// Notation used in the comments below: a stage serves `l` layers on a device
// set `d` running tensor parallelism over |d| GPUs. Per device: memory limit
// M, memory bandwidth m, compute c. Links: latency alpha, bandwidth beta.
// Task: batch b, prompt s_in, generated tokens s_out. Model: hidden H,
// precision B bytes.
//
//   comp   = max_d(12 H^2 B s_out / (|d| m_d)) l + max_d(24 b (s_in+s_out) H^2 / (|d| c_d)) l
//   tp     = max_d sum_{d'!=d}(alpha + b s_in H B / (|d| beta)) 4 l
//          + max_d sum_{d'!=d}(alpha + b H B / (|d| beta)) 4 s_out l
//   pp     = min_{d,d'}(alpha + b s_in H B / beta) + min_{d,d'}(alpha + b H B / beta) s_out
//   mem    = (12 H^2 B / |d| + 2 b (s_in+s_out) H B / |d|) l + 4 b (s_in+s_out) H B
//
// All quantities are SI: seconds, bytes, bytes/s, FLOP/s.

#pragma once

#include <vector>

#include "hexplan/cluster.h"

namespace hexplan {

struct StageAssignment {
  std::vector<int> devices;  // device ids serving this stage with tensor parallelism
  int num_layers = 0;

  int tp_degree() const { return static_cast<int>(devices.size()); }
  bool operator==(const StageAssignment&) const = default;
};

using Pipeline = std::vector<StageAssignment>;

struct StageCostBreakdown {
  double comp = 0.0;
  double comm_tp = 0.0;
  double comm_pp_to_next = 0.0;  // 0 for the last stage
  double mem_per_device = 0.0;
  bool memory_ok = true;
};

/// Prefill/decode view of the same totals; prefill + decode == pipeline total.
struct PhaseCost {
  double prefill = 0.0;
  double decode = 0.0;
};

struct PipelineCost {
  double total = 0.0;
  std::vector<StageCostBreakdown> stages;
  bool memory_ok = true;
};

struct DeviceMargin {
  int device_id = 0;
  double footprint = 0.0;  // bytes
  double limit = 0.0;      // bytes
  double margin = 0.0;     // limit - footprint
};

struct MemoryVerdict {
  bool feasible = true;
  std::vector<DeviceMargin> margins;
};

double comp_cost(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task,
                 const ClusterSpec& cluster);
double tp_comm_cost(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task,
                    const ClusterSpec& cluster);
/// Activation hand-off from `stage` to `next_stage` over the fastest cross link.
double pp_comm_cost(const StageAssignment& stage, const StageAssignment& next_stage, const ModelSpec& model,
                    const TaskSpec& task, const ClusterSpec& cluster);
/// Per-device bytes; identical for every device of the stage.
double mem_footprint(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task);

/// Cost a pipeline incurs for stage `stage`: its comp and TP terms plus the PP
/// edge from `prev` (if any). Summing this over stages in order is the
/// accumulation the layout search uses.
double stage_step_cost(const StageAssignment* prev, const StageAssignment& stage, const ModelSpec& model,
                       const TaskSpec& task, const ClusterSpec& cluster);

/// End-to-end cost. Throws std::invalid_argument when layer counts do not sum
/// to L, a stage is empty, or stages share a device. Memory violations are
/// reported through `memory_ok`, not thrown.
PipelineCost pipeline_cost(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                           const ClusterSpec& cluster);

PhaseCost phase_cost(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                     const ClusterSpec& cluster);

MemoryVerdict check_memory(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                           const ClusterSpec& cluster);

}  // namespace hexplan
