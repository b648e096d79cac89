// SPDX-License-Identifier: Apache-2.0

#include "hexplan/cost_model.h"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

namespace hexplan {
namespace {

void require_devices(const StageAssignment& stage) {
  if (stage.devices.empty()) throw std::invalid_argument("stage has an empty device set");
}

struct Shape {
  double h, bytes, batch, s_in, s_out;
};

Shape shape_of(const ModelSpec& model, const TaskSpec& task) {
  return {static_cast<double>(model.hidden_dim), static_cast<double>(model.bytes_per_param),
          static_cast<double>(task.batch_size), static_cast<double>(task.input_len),
          static_cast<double>(task.output_len)};
}

// max_d sum_{d' != d} (alpha + payload / (|d| beta))
double allreduce_superstep(const StageAssignment& stage, double payload, const ClusterSpec& cluster) {
  const double n = stage.tp_degree();
  double worst = 0.0;
  for (int d : stage.devices) {
    double sum = 0.0;
    for (int peer : stage.devices) {
      if (peer == d) continue;
      sum += cluster.alpha(d, peer) + payload / (n * cluster.beta(d, peer));
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

// min over cross pairs of (alpha + payload / beta)
double fastest_link(const StageAssignment& from, const StageAssignment& to, double payload,
                    const ClusterSpec& cluster) {
  double best = std::numeric_limits<double>::infinity();
  for (int d : from.devices)
    for (int peer : to.devices) best = std::min(best, cluster.alpha(d, peer) + payload / cluster.beta(d, peer));
  return best;
}

struct CompTerms {
  double scan;       // parameter scan, all generated tokens
  double flop_in;    // matmul FLOPs for the prompt
  double flop_out;   // matmul FLOPs for generated tokens
};

CompTerms comp_terms(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task,
                     const ClusterSpec& cluster) {
  const Shape s = shape_of(model, task);
  const double n = stage.tp_degree();
  const double l = stage.num_layers;
  double min_bw = std::numeric_limits<double>::infinity();
  double min_flops = std::numeric_limits<double>::infinity();
  for (int d : stage.devices) {
    min_bw = std::min(min_bw, cluster.gpu(d).mem_bandwidth);
    min_flops = std::min(min_flops, cluster.gpu(d).compute);
  }
  const double h2 = s.h * s.h;
  return {12.0 * h2 * s.bytes * s.s_out / (n * min_bw) * l, 24.0 * s.batch * s.s_in * h2 / (n * min_flops) * l,
          24.0 * s.batch * s.s_out * h2 / (n * min_flops) * l};
}

}  // namespace

double comp_cost(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task,
                 const ClusterSpec& cluster) {
  require_devices(stage);
  const Shape s = shape_of(model, task);
  const double n = stage.tp_degree();
  const double l = stage.num_layers;
  const double h2 = s.h * s.h;
  double scan = 0.0;
  double flop = 0.0;
  for (int d : stage.devices) {
    const GpuType& g = cluster.gpu(d);
    scan = std::max(scan, 12.0 * h2 * s.bytes * s.s_out / (n * g.mem_bandwidth));
    flop = std::max(flop, 24.0 * s.batch * (s.s_in + s.s_out) * h2 / (n * g.compute));
  }
  return scan * l + flop * l;
}

double tp_comm_cost(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task,
                    const ClusterSpec& cluster) {
  require_devices(stage);
  if (stage.tp_degree() == 1) return 0.0;
  const Shape s = shape_of(model, task);
  const double l = stage.num_layers;
  const double prefill = allreduce_superstep(stage, s.batch * s.s_in * s.h * s.bytes, cluster);
  const double decode = allreduce_superstep(stage, s.batch * s.h * s.bytes, cluster);
  return prefill * 4.0 * l + decode * 4.0 * s.s_out * l;
}

double pp_comm_cost(const StageAssignment& stage, const StageAssignment& next_stage, const ModelSpec& model,
                    const TaskSpec& task, const ClusterSpec& cluster) {
  require_devices(stage);
  require_devices(next_stage);
  const Shape s = shape_of(model, task);
  const double prefill = fastest_link(stage, next_stage, s.batch * s.s_in * s.h * s.bytes, cluster);
  const double decode = fastest_link(stage, next_stage, s.batch * s.h * s.bytes, cluster);
  return prefill + decode * s.s_out;
}

double mem_footprint(const StageAssignment& stage, const ModelSpec& model, const TaskSpec& task) {
  require_devices(stage);
  const Shape s = shape_of(model, task);
  const double n = stage.tp_degree();
  const double tokens = s.s_in + s.s_out;
  const double per_layer = 12.0 * s.h * s.h * s.bytes / n + 2.0 * s.batch * tokens * s.h * s.bytes / n;
  return per_layer * stage.num_layers + 4.0 * s.batch * tokens * s.h * s.bytes;
}

double stage_step_cost(const StageAssignment* prev, const StageAssignment& stage, const ModelSpec& model,
                       const TaskSpec& task, const ClusterSpec& cluster) {
  double cost = comp_cost(stage, model, task, cluster) + tp_comm_cost(stage, model, task, cluster);
  if (prev) cost += pp_comm_cost(*prev, stage, model, task, cluster);
  return cost;
}

namespace {

void validate_pipeline(const Pipeline& pipeline, const ModelSpec& model) {
  if (pipeline.empty()) throw std::invalid_argument("pipeline has no stages");
  int layers = 0;
  std::set<int> seen;
  for (const StageAssignment& st : pipeline) {
    require_devices(st);
    if (st.num_layers < 0) throw std::invalid_argument("stage has negative layer count");
    layers += st.num_layers;
    for (int d : st.devices)
      if (!seen.insert(d).second) throw std::invalid_argument("device " + std::to_string(d) + " used twice");
  }
  if (layers != model.num_layers) {
    throw std::invalid_argument("stage layers sum to " + std::to_string(layers) + ", model has " +
                                std::to_string(model.num_layers));
  }
}

}  // namespace

PipelineCost pipeline_cost(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                           const ClusterSpec& cluster) {
  validate_pipeline(pipeline, model);
  PipelineCost out;
  out.stages.resize(pipeline.size());
  double comp = 0.0, tp = 0.0, pp = 0.0;
  for (std::size_t j = 0; j < pipeline.size(); ++j) {
    StageCostBreakdown& b = out.stages[j];
    b.comp = comp_cost(pipeline[j], model, task, cluster);
    b.comm_tp = tp_comm_cost(pipeline[j], model, task, cluster);
    if (j + 1 < pipeline.size()) b.comm_pp_to_next = pp_comm_cost(pipeline[j], pipeline[j + 1], model, task, cluster);
    b.mem_per_device = mem_footprint(pipeline[j], model, task);
    for (int d : pipeline[j].devices) b.memory_ok = b.memory_ok && b.mem_per_device <= cluster.gpu(d).mem_limit;
    out.memory_ok = out.memory_ok && b.memory_ok;
    comp += b.comp;
    tp += b.comm_tp;
    pp += b.comm_pp_to_next;
  }
  out.total = comp + tp + pp;
  return out;
}

PhaseCost phase_cost(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                     const ClusterSpec& cluster) {
  validate_pipeline(pipeline, model);
  const Shape s = shape_of(model, task);
  PhaseCost out;
  for (std::size_t j = 0; j < pipeline.size(); ++j) {
    const StageAssignment& st = pipeline[j];
    const CompTerms c = comp_terms(st, model, task, cluster);
    out.prefill += c.flop_in;
    out.decode += c.scan + c.flop_out;
    if (st.tp_degree() > 1) {
      const double l = st.num_layers;
      out.prefill += allreduce_superstep(st, s.batch * s.s_in * s.h * s.bytes, cluster) * 4.0 * l;
      out.decode += allreduce_superstep(st, s.batch * s.h * s.bytes, cluster) * 4.0 * s.s_out * l;
    }
    if (j + 1 < pipeline.size()) {
      out.prefill += fastest_link(st, pipeline[j + 1], s.batch * s.s_in * s.h * s.bytes, cluster);
      out.decode += fastest_link(st, pipeline[j + 1], s.batch * s.h * s.bytes, cluster) * s.s_out;
    }
  }
  return out;
}

MemoryVerdict check_memory(const Pipeline& pipeline, const ModelSpec& model, const TaskSpec& task,
                           const ClusterSpec& cluster) {
  MemoryVerdict verdict;
  for (const StageAssignment& st : pipeline) {
    const double footprint = mem_footprint(st, model, task);
    for (int d : st.devices) {
      const double limit = cluster.gpu(d).mem_limit;
      verdict.margins.push_back({d, footprint, limit, limit - footprint});
      if (footprint > limit) verdict.feasible = false;
    }
  }
  return verdict;
}

}  // namespace hexplan
