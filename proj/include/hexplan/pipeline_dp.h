// SPDX-License-Identifier: Apache-2.0
//
// Optimal stage layout for one pipeline group.
//
// Given a group of GPUs (counts per (machine, type) bucket) and a layer
// partition l_1..l_S, choose for every stage j a bucket k and a TP degree s
// so that the stages use disjoint devices and the summed step cost
// (comp + TP + PP edge from the previous stage) is minimal, subject to the
// per-device memory limit.
//
// The table is indexed by (stage j, devices assigned so far tau, last move).
// The last move is part of the key because the PP edge into stage j+1 depends
// on which devices served stage j; together with tau it identifies them
// exactly (bucket k, positions tau_k - s .. tau_k - 1 of the bucket's list).
// Stages drawn from bucket k consume that bucket's devices in list order.

#pragma once

#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "hexplan/cluster.h"
#include "hexplan/cost_model.h"

namespace hexplan {

struct LayerPartition {
  std::vector<int> layers;

  int num_stages() const { return static_cast<int>(layers.size()); }
  int total() const;
  /// Throws std::invalid_argument unless layers sum to `num_layers` and each is >= 1.
  void validate(int num_layers) const;
  /// l_j = L / S with the remainder spread over the first stages.
  static LayerPartition even(int num_layers, int num_stages);
  bool operator==(const LayerPartition&) const = default;
};

/// One stage choice: `size` devices taken from bucket `bucket`.
struct StageMove {
  int bucket = -1;
  int size = 0;

  bool none() const { return size == 0; }
  auto operator<=>(const StageMove&) const = default;
};

/// Prefers the smaller stage size, then the lower bucket index.
bool preferred_move(const StageMove& a, const StageMove& b);

struct DpKey {
  int stage = 0;
  TypeVector assigned;
  StageMove last;

  auto operator<=>(const DpKey&) const = default;
};

class DpTable {
 public:
  struct Entry {
    double cost = std::numeric_limits<double>::infinity();
    StageMove prev;  // last move of the predecessor key
  };

  explicit DpTable(TypeVector capacity);

  const TypeVector& capacity() const { return capacity_; }
  /// DP[0; *] = 0; unreached keys are +inf.
  double cost(const DpKey& key) const;
  const Entry* find(const DpKey& key) const;
  /// Keys stored for stage j, in key order.
  std::vector<DpKey> keys_at(int stage) const;
  std::size_t size() const { return entries_.size(); }

  void set(const DpKey& key, Entry entry) { entries_[key] = entry; }

 private:
  TypeVector capacity_;
  std::map<DpKey, Entry> entries_;
};

/// Relaxes DP[from.stage+1; from.assigned + move] with DP[from] + stage_cost.
/// Returns the target key. A +inf stage_cost (memory violation) leaves the
/// table unchanged. Equal-cost candidates replace the stored one only when the
/// predecessor's move is preferred, so results do not depend on visit order.
/// Throws std::invalid_argument when the move exceeds remaining capacity.
DpKey dp_transition(DpTable& table, const DpKey& from, const StageMove& move, double stage_cost);

struct DpSolution {
  bool feasible = false;
  double cost = std::numeric_limits<double>::infinity();
  Pipeline stages;
  std::vector<StageMove> moves;
  std::size_t expanded_states = 0;  // distinct (j, tau), j >= 1, reached with finite cost
};

/// Concrete devices available to a group, one list per cluster bucket.
using GroupDevices = std::vector<std::vector<int>>;

/// First tau_k devices of every bucket.
GroupDevices canonical_devices(const TypeVector& group, const ClusterSpec& cluster);

std::vector<int> default_tp_candidates();

DpSolution solve_pipeline(const GroupDevices& group, const LayerPartition& partition, const ModelSpec& model,
                          const TaskSpec& task, const ClusterSpec& cluster, const std::vector<int>& tp_candidates);

DpSolution solve_pipeline(const TypeVector& group, const LayerPartition& partition, const ModelSpec& model,
                          const TaskSpec& task, const ClusterSpec& cluster, const std::vector<int>& tp_candidates);

/// Number of distinct (j, tau) states with 1 <= j <= S reachable by moves whose
/// sizes are in `tp_candidates`, ignoring costs and memory.
std::size_t visited_state_count(const TypeVector& group, const LayerPartition& partition,
                                const std::vector<int>& tp_candidates);

}  // namespace hexplan
