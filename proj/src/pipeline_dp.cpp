// SPDX-License-Identifier: Apache-2.0

#include "hexplan/pipeline_dp.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace hexplan {

int LayerPartition::total() const {
  int sum = 0;
  for (int l : layers) sum += l;
  return sum;
}

void LayerPartition::validate(int num_layers) const {
  if (layers.empty()) throw std::invalid_argument("layer partition has no stages");
  for (int l : layers)
    if (l < 1) throw std::invalid_argument("layer partition has a stage with fewer than one layer");
  if (total() != num_layers) {
    throw std::invalid_argument("layer partition sums to " + std::to_string(total()) + ", model has " +
                                std::to_string(num_layers));
  }
}

LayerPartition LayerPartition::even(int num_layers, int num_stages) {
  if (num_stages < 1 || num_stages > num_layers) throw std::invalid_argument("cannot split layers evenly");
  LayerPartition p;
  p.layers.assign(static_cast<std::size_t>(num_stages), num_layers / num_stages);
  for (int j = 0; j < num_layers % num_stages; ++j) ++p.layers[static_cast<std::size_t>(j)];
  return p;
}

bool preferred_move(const StageMove& a, const StageMove& b) {
  if (a.size != b.size) return a.size < b.size;
  return a.bucket < b.bucket;
}

DpTable::DpTable(TypeVector capacity) : capacity_(std::move(capacity)) {}

double DpTable::cost(const DpKey& key) const {
  if (key.stage == 0) return 0.0;
  const Entry* e = find(key);
  return e ? e->cost : std::numeric_limits<double>::infinity();
}

const DpTable::Entry* DpTable::find(const DpKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<DpKey> DpTable::keys_at(int stage) const {
  std::vector<DpKey> keys;
  for (auto it = entries_.lower_bound(DpKey{stage, TypeVector{}, StageMove{-1, 0}});
       it != entries_.end() && it->first.stage == stage; ++it)
    keys.push_back(it->first);
  return keys;
}

DpKey dp_transition(DpTable& table, const DpKey& from, const StageMove& move, double stage_cost) {
  const TypeVector& cap = table.capacity();
  if (move.size < 1 || move.bucket < 0 || static_cast<std::size_t>(move.bucket) >= cap.size())
    throw std::invalid_argument("dp_transition: malformed move");
  const auto k = static_cast<std::size_t>(move.bucket);
  if (from.assigned.size() != cap.size() || from.assigned[k] + move.size > cap[k])
    throw std::invalid_argument("dp_transition: move exceeds remaining capacity");

  DpKey to{from.stage + 1, from.assigned, move};
  to.assigned[k] += move.size;
  if (std::isinf(stage_cost)) return to;

  const double candidate = table.cost(from) + stage_cost;
  const DpTable::Entry* old = table.find(to);
  const bool improves = !old || candidate < old->cost ||
                        (candidate == old->cost && preferred_move(from.last, old->prev));
  if (improves) table.set(to, {candidate, from.last});
  return to;
}

GroupDevices canonical_devices(const TypeVector& group, const ClusterSpec& cluster) {
  if (group.size() != static_cast<std::size_t>(cluster.num_buckets()))
    throw std::invalid_argument("group size does not match cluster bucket count");
  GroupDevices out(group.size());
  for (std::size_t k = 0; k < group.size(); ++k) {
    const auto& all = cluster.bucket(static_cast<int>(k)).devices;
    if (group[k] < 0 || group[k] > static_cast<int>(all.size()))
      throw std::invalid_argument("group exceeds bucket capacity");
    out[k].assign(all.begin(), all.begin() + group[k]);
  }
  return out;
}

std::vector<int> default_tp_candidates() { return {1, 2, 4, 8}; }

namespace {

std::vector<int> normalized_candidates(const std::vector<int>& tp_candidates) {
  std::set<int> s;
  for (int c : tp_candidates)
    if (c >= 1) s.insert(c);
  return {s.begin(), s.end()};
}

StageAssignment materialize(const GroupDevices& group, const TypeVector& assigned_before, const StageMove& move,
                            int layers) {
  const auto k = static_cast<std::size_t>(move.bucket);
  const auto& list = group[k];
  const auto first = list.begin() + assigned_before[k];
  return StageAssignment{std::vector<int>(first, first + move.size), layers};
}

}  // namespace

DpSolution solve_pipeline(const GroupDevices& group, const LayerPartition& partition, const ModelSpec& model,
                          const TaskSpec& task, const ClusterSpec& cluster, const std::vector<int>& tp_candidates) {
  partition.validate(model.num_layers);
  if (group.size() != static_cast<std::size_t>(cluster.num_buckets()))
    throw std::invalid_argument("group size does not match cluster bucket count");

  TypeVector capacity(group.size());
  for (std::size_t k = 0; k < group.size(); ++k) capacity[k] = static_cast<int>(group[k].size());
  const std::vector<int> sizes = normalized_candidates(tp_candidates);
  const int num_stages = partition.num_stages();

  DpSolution result;
  if (capacity.total() == 0 || sizes.empty()) return result;

  DpTable table(capacity);
  const DpKey root{0, TypeVector(group.size()), StageMove{}};
  table.set(root, {0.0, StageMove{}});

  for (int j = 0; j < num_stages; ++j) {
    const int layers = partition.layers[static_cast<std::size_t>(j)];
    const std::vector<DpKey> frontier = j == 0 ? std::vector<DpKey>{root} : table.keys_at(j);
    for (const DpKey& from : frontier) {
      std::optional<StageAssignment> prev;
      if (!from.last.none()) {
        TypeVector before = from.assigned;
        before[static_cast<std::size_t>(from.last.bucket)] -= from.last.size;
        prev = materialize(group, before, from.last, 0);
      }
      for (int s : sizes) {
        for (std::size_t k = 0; k < group.size(); ++k) {
          if (from.assigned[k] + s > capacity[k]) continue;
          const StageMove move{static_cast<int>(k), s};
          const StageAssignment stage = materialize(group, from.assigned, move, layers);
          const double footprint = mem_footprint(stage, model, task);
          double step = std::numeric_limits<double>::infinity();
          if (footprint <= cluster.bucket_mem_limit(cluster.bucket_of(stage.devices.front())))
            step = stage_step_cost(prev ? &*prev : nullptr, stage, model, task, cluster);
          dp_transition(table, from, move, step);
        }
      }
    }
  }

  std::set<std::pair<int, TypeVector>> reached;
  for (int j = 1; j <= num_stages; ++j)
    for (const DpKey& key : table.keys_at(j)) reached.emplace(j, key.assigned);
  result.expanded_states = reached.size();

  const DpKey* best = nullptr;
  const std::vector<DpKey> finals = table.keys_at(num_stages);
  double best_cost = std::numeric_limits<double>::infinity();
  for (const DpKey& key : finals) {
    const double c = table.cost(key);
    if (c < best_cost || (c == best_cost && best && preferred_move(key.last, best->last))) {
      best_cost = c;
      best = &key;
    }
  }
  if (!best) return result;

  result.feasible = true;
  result.cost = best_cost;
  std::vector<StageMove> moves;
  DpKey cursor = *best;
  while (cursor.stage > 0) {
    moves.push_back(cursor.last);
    const DpTable::Entry* e = table.find(cursor);
    if (!e) throw std::logic_error("dp backtrack hit a missing key");
    TypeVector before = cursor.assigned;
    before[static_cast<std::size_t>(cursor.last.bucket)] -= cursor.last.size;
    cursor = DpKey{cursor.stage - 1, before, e->prev};
  }
  std::reverse(moves.begin(), moves.end());

  TypeVector assigned(group.size());
  for (int j = 0; j < num_stages; ++j) {
    const StageMove& m = moves[static_cast<std::size_t>(j)];
    result.stages.push_back(materialize(group, assigned, m, partition.layers[static_cast<std::size_t>(j)]));
    assigned[static_cast<std::size_t>(m.bucket)] += m.size;
  }
  result.moves = std::move(moves);
  return result;
}

DpSolution solve_pipeline(const TypeVector& group, const LayerPartition& partition, const ModelSpec& model,
                          const TaskSpec& task, const ClusterSpec& cluster, const std::vector<int>& tp_candidates) {
  return solve_pipeline(canonical_devices(group, cluster), partition, model, task, cluster, tp_candidates);
}

std::size_t visited_state_count(const TypeVector& group, const LayerPartition& partition,
                                const std::vector<int>& tp_candidates) {
  if (group.total() == 0) return 0;
  const std::vector<int> sizes = normalized_candidates(tp_candidates);
  std::set<TypeVector> frontier{TypeVector(group.size())};
  std::size_t count = 0;
  for (int j = 1; j <= partition.num_stages(); ++j) {
    std::set<TypeVector> next;
    for (const TypeVector& tau : frontier) {
      for (std::size_t k = 0; k < group.size(); ++k) {
        for (int s : sizes) {
          if (tau[k] + s > group[k]) continue;
          TypeVector t = tau;
          t[k] += s;
          next.insert(std::move(t));
        }
      }
    }
    count += next.size();
    frontier = std::move(next);
  }
  return count;
}

}  // namespace hexplan
