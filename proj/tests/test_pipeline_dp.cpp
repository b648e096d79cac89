// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "dp_instances.h"
#include "fixtures.h"
#include "hexplan/pipeline_dp.h"
#include "oracles.h"

using namespace hexplan;

namespace {

GroupDevices all_devices(const ClusterSpec& c) {
  GroupDevices g(static_cast<std::size_t>(c.num_buckets()));
  for (int k = 0; k < c.num_buckets(); ++k) g[static_cast<std::size_t>(k)] = c.bucket(k).devices;
  return g;
}

}  // namespace

TEST_CASE("layer partitions") {
  CHECK(LayerPartition::even(80, 3).layers == std::vector<int>{27, 27, 26});
  CHECK(LayerPartition::even(8, 8).layers == std::vector<int>(8, 1));
  CHECK_THROWS_AS((LayerPartition{{40, 39}}.validate(80)), std::invalid_argument);
  CHECK_THROWS_AS((LayerPartition{{80, 0}}.validate(80)), std::invalid_argument);
  CHECK_NOTHROW((LayerPartition{{48, 20, 12}}.validate(80)));
}

TEST_CASE("transition semantics") {
  DpTable t(TypeVector(std::vector<int>{2, 2}));
  const DpKey root{0, TypeVector(std::vector<int>{0, 0}), {}};
  CHECK(t.cost(root) == 0.0);

  const DpKey k = dp_transition(t, root, {0, 1}, 1.5);
  CHECK(t.cost(k) == 1.5);
  REQUIRE(t.find(k));
  CHECK(t.find(k)->prev.none());

  // Worse and memory-violating candidates leave the entry alone.
  const DpKey k2{1, TypeVector(std::vector<int>{1, 0}), {0, 1}};
  CHECK(k2 == k);
  dp_transition(t, root, {0, 1}, 2.0);
  CHECK(t.cost(k) == 1.5);
  const std::size_t before = t.size();
  dp_transition(t, root, {1, 2}, std::numeric_limits<double>::infinity());
  CHECK(t.size() == before);

  CHECK_THROWS_AS(dp_transition(t, root, {0, 3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(dp_transition(t, root, {0, 0}, 1.0), std::invalid_argument);
}

TEST_CASE("one stage on four identical GPUs picks TP 4 when compute bound") {
  const ClusterSpec c = fixtures::build_cluster({{"G", {"G", 1e12, 1e15, 1e12}}}, fixtures::machines({{"m", "r", "G", 4}}),
                                                {0.0, 1e15}, {0.0, 1e15}, {0.0, 1e15});
  const ModelSpec m{8, 1024, 2};
  const DpSolution s = solve_pipeline(all_devices(c), LayerPartition::even(8, 1), m, {8, 512, 16}, c, {1, 2, 4});
  REQUIRE(s.feasible);
  CHECK(s.stages.size() == 1);
  CHECK(s.stages[0].tp_degree() == 4);
  CHECK(visited_state_count(c.capacity(), LayerPartition::even(8, 1), {1, 2, 4}) <= 3);
}

TEST_CASE("memory forces the heavier stage onto the larger bucket") {
  const ModelSpec m{20, 1024, 2};
  const TaskSpec t{1, 64, 16};
  const double per_layer = 12.0 * 1024 * 1024 * 2;
  const ClusterSpec c = fixtures::build_cluster(
      {{"A", {"A", per_layer * 8 + 2e6, 1e12, 1e14}}, {"B", {"B", per_layer * 3 + 2e6, 2e12, 2e14}}},
      fixtures::machines({{"m0", "r", "A", 2}, {"m1", "r", "B", 2}}), {1e-5, 1e11}, {1e-4, 1e10}, {1e-2, 1e8});
  const LayerPartition p{{14, 6}};
  const DpSolution s = solve_pipeline(all_devices(c), p, m, t, c, {1, 2});
  const auto o = oracle::exhaustive_layout({0, 1, 2, 3}, p.layers, m, t, c, {1, 2});
  REQUIRE(s.feasible);
  CHECK(s.cost == o.cost);
  CHECK(c.bucket_of(s.stages[0].devices[0]) == 0);

  // With the 14-layer stage too large for everything, no layout exists.
  const DpSolution none = solve_pipeline(all_devices(c), LayerPartition{{19, 1}}, m, t, c, {1, 2});
  CHECK_FALSE(none.feasible);
  CHECK(std::isinf(oracle::exhaustive_layout({0, 1, 2, 3}, {19, 1}, m, t, c, {1, 2}).cost));
}

TEST_CASE("groups without enough memory for the parameters are infeasible") {
  const ClusterSpec c = fixtures::case_study_cluster();
  const DpSolution s = solve_pipeline(TypeVector(std::vector<int>{0, 2, 2}), LayerPartition{{40, 40}},
                                      fixtures::llama70b(), fixtures::case_study_task(), c, default_tp_candidates());
  CHECK_FALSE(s.feasible);
}

TEST_CASE("random instances match exhaustive enumeration") {
  std::mt19937_64 rng(20240601);
  int feasible = 0;
  for (int i = 0; i < 120; ++i) {
    const auto x = fixtures::random_dp_instance(rng);
    const DpSolution s = solve_pipeline(all_devices(x.cluster), x.partition, x.model, x.task, x.cluster, x.tp_candidates);
    const auto o = oracle::exhaustive_layout(x.devices, x.partition.layers, x.model, x.task, x.cluster, x.tp_candidates);
    CHECK(s.feasible == !std::isinf(o.cost));
    if (!s.feasible) continue;
    ++feasible;
    CHECK(s.cost == o.cost);
    const PipelineCost pc = pipeline_cost(s.stages, x.model, x.task, x.cluster);
    CHECK(pc.total == doctest::Approx(s.cost).epsilon(1e-9));
    CHECK(pc.memory_ok);
  }
  CHECK(feasible > 30);
}

TEST_CASE("adding a device never raises the optimum") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 60; ++i) {
    const auto x = fixtures::random_dp_instance(rng);
    GroupDevices full = all_devices(x.cluster);
    const DpSolution s_full = solve_pipeline(full, x.partition, x.model, x.task, x.cluster, x.tp_candidates);
    for (std::size_t k = 0; k < full.size(); ++k) {
      if (full[k].empty()) continue;
      GroupDevices less = full;
      less[k].pop_back();
      const DpSolution s_less = solve_pipeline(less, x.partition, x.model, x.task, x.cluster, x.tp_candidates);
      CHECK(s_full.cost <= s_less.cost);
    }
  }
}

TEST_CASE("determinism and state bounds") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto x = fixtures::random_dp_instance(rng);
    const DpSolution a = solve_pipeline(all_devices(x.cluster), x.partition, x.model, x.task, x.cluster, x.tp_candidates);
    const DpSolution b = solve_pipeline(all_devices(x.cluster), x.partition, x.model, x.task, x.cluster, x.tp_candidates);
    CHECK(a.stages == b.stages);
    CHECK(a.moves == b.moves);

    const TypeVector cap = x.cluster.capacity();
    std::size_t bound = static_cast<std::size_t>(x.partition.num_stages());
    for (std::size_t k = 0; k < cap.size(); ++k) bound *= static_cast<std::size_t>(cap[k] + 1);
    const std::size_t unrestricted = visited_state_count(cap, x.partition, {1, 2, 3, 4, 5, 6});
    CHECK(unrestricted <= bound);
    CHECK(visited_state_count(cap, x.partition, default_tp_candidates()) <= unrestricted);
    CHECK(a.expanded_states <= visited_state_count(cap, x.partition, x.tp_candidates));
  }
  CHECK(visited_state_count(TypeVector(std::vector<int>{0, 0}), LayerPartition{{4}}, {1, 2}) == 0);
}
