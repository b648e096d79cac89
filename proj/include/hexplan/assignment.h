// SPDX-License-Identifier: Apache-2.0
//
// A global placement: independent pipelines, each an ordered list of
// tensor-parallel stages over disjoint devices.

#pragma once

#include <string>
#include <vector>

#include "hexplan/cluster.h"
#include "hexplan/cost_model.h"

namespace hexplan {

struct GlobalAssignment {
  std::vector<Pipeline> pipelines;

  bool empty() const { return pipelines.empty(); }
  bool operator==(const GlobalAssignment&) const = default;
};

/// TP degree per stage, e.g. "[4,2,2]".
std::string compact_notation(const Pipeline& pipeline);

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Checks the placement against the cluster without trusting how it was
/// built: every stage nonempty with >= 1 layer and devices from a single
/// (machine, type) bucket, no device used twice anywhere, each pipeline's
/// layers sum to L, and every device's footprint fits its memory limit for
/// every task shape in `tasks`.
ValidationReport validate_assignment(const GlobalAssignment& assignment, const ModelSpec& model,
                                     const std::vector<TaskSpec>& tasks, const ClusterSpec& cluster);

}  // namespace hexplan
