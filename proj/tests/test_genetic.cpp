// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "fixtures.h"
#include "hexplan/errors.h"
#include "hexplan/genetic.h"
#include "hexplan/kmeans.h"

using namespace hexplan;

namespace {

TypeVector tv(std::vector<int> v) { return TypeVector(std::move(v)); }

Genome genome(std::vector<std::vector<int>> groups) {
  Genome g;
  for (auto& v : groups) g.groups.push_back(tv(std::move(v)));
  g.canonicalize();
  return g;
}

SearchConfig quick(std::uint64_t seed = 1) {
  SearchConfig c;
  c.population_size = 12;
  c.generations = 10;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("merge") {
  const Genome g = genome({{2, 0}, {0, 2}});
  CHECK(mutate_merge(g, 0, 1) == genome({{2, 2}}));
  CHECK_THROWS_AS(mutate_merge(genome({{2, 2}}), 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mutate_merge(g, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mutate_merge(g, 0, 5), std::invalid_argument);
}

TEST_CASE("split") {
  CHECK(mutate_split(genome({{3, 2}}), 0) == genome({{1, 1}, {2, 1}}));
  CHECK(mutate_split(genome({{2, 2}}), 0) == genome({{1, 1}, {1, 1}}));
  CHECK_THROWS_AS(mutate_split(genome({{1, 0}}), 0), std::invalid_argument);

  const Genome even = genome({{2, 4, 0}});
  const Genome halves = mutate_split(even, 0);
  CHECK(mutate_merge(halves, 0, 1) == even);
}

TEST_CASE("split of a group barely holding a replica yields nothing") {
  const ClusterSpec c = fixtures::two_region_cluster();
  const ModelSpec m = fixtures::small_model();
  // Two L-class GPUs: 3.2e9 bytes for 2.4e9 of parameters.
  const Genome g = genome({{2, 0, 0, 0}});
  REQUIRE(genome_passes_prune(g, c, m));
  CHECK_FALSE(split_offspring(g, 0, c, m));
}

TEST_CASE("swap") {
  const Genome g = genome({{1, 0}, {1, 2}});
  const Genome s = mutate_swap(g, 0, 1, 1);
  CHECK(s == genome({{1, 1}, {1, 1}}));
  CHECK_THROWS_AS(mutate_swap(g, 1, 0, 1), std::invalid_argument);

  auto index_of = [](const Genome& x, const TypeVector& t) {
    const auto it = std::find(x.groups.begin(), x.groups.end(), t);
    REQUIRE(it != x.groups.end());
    return static_cast<std::size_t>(it - x.groups.begin());
  };
  const Genome a = genome({{2, 1}, {1, 3}});
  const Genome moved = mutate_swap(a, index_of(a, tv({2, 1})), index_of(a, tv({1, 3})), 1);
  CHECK(moved == genome({{2, 2}, {1, 2}}));
  CHECK(mutate_swap(moved, index_of(moved, tv({1, 2})), index_of(moved, tv({2, 2})), 1) == a);

  // Emptying the source removes it.
  const Genome lone = genome({{1, 0}, {0, 2}});
  CHECK(mutate_swap(lone, index_of(lone, tv({0, 2})), index_of(lone, tv({1, 0})), 0) == genome({{1, 2}}));
}

TEST_CASE("mutations conserve devices") {
  std::mt19937_64 rng(3);
  Genome g = genome({{1, 1, 0, 0}, {1, 1, 2, 1}, {2, 2, 2, 3}});
  const TypeVector total = g.total(4);
  for (int i = 0; i < 2000; ++i) {
    const int op = static_cast<int>(rng() % 3);
    const std::size_t n = g.groups.size();
    if (op == 0 && n >= 2) {
      const std::size_t a = rng() % n, b = (a + 1 + rng() % (n - 1)) % n;
      g = mutate_merge(g, a, b);
    } else if (op == 1) {
      const std::size_t a = rng() % n;
      if (g.groups[a].total() >= 2) g = mutate_split(g, a);
    } else if (n >= 2) {
      const std::size_t from = rng() % n, to = (from + 1 + rng() % (n - 1)) % n;
      std::vector<std::size_t> ks;
      for (std::size_t k = 0; k < 4; ++k)
        if (g.groups[from][k] > 0) ks.push_back(k);
      g = mutate_swap(g, to, from, ks[rng() % ks.size()]);
    }
    REQUIRE(g.total(4) == total);
  }
}

TEST_CASE("proportional split") {
  CHECK(proportional_split({2, 1, 1}, 80) == std::vector<int>{40, 20, 20});
  CHECK(proportional_split({192, 48, 32}, 80) == std::vector<int>{57, 14, 9});
  CHECK(proportional_split({1000, 1}, 10) == std::vector<int>{9, 1});
  CHECK(proportional_split({1, 1, 1}, 4) == std::vector<int>{2, 1, 1});
  CHECK_THROWS_AS(proportional_split({1, 1, 1}, 2), std::invalid_argument);
}

TEST_CASE("refinement keeps the best partition and stops at a fixed point") {
  const ClusterSpec c = fixtures::case_study_cluster();
  const ModelSpec m = fixtures::llama70b();
  const TaskSpec t = fixtures::case_study_task();
  const GroupDevices all = canonical_devices(c.capacity(), c);
  const LayerPartition start{{48, 20, 12}};
  const DpSolution sol = solve_pipeline(all, start, m, t, c, default_tp_candidates());
  REQUIRE(sol.feasible);
  const RefineResult r = refine_partition(all, start, sol, m, t, c, default_tp_candidates(), 5);
  CHECK(r.solution.feasible);
  CHECK(r.solution.cost <= sol.cost);
  r.partition.validate(80);

  const RefineResult again = refine_partition(all, r.partition, r.solution, m, t, c, default_tp_candidates(), 5);
  CHECK(again.solution.cost <= r.solution.cost);
  const RefineResult none = refine_partition(all, start, sol, m, t, c, default_tp_candidates(), 0);
  CHECK(none.partition == start);
}

TEST_CASE("k-means finds the two regions") {
  // Two regions with uniform links inside each and one slow link class across.
  const ClusterSpec c = fixtures::build_cluster({{"G", {"G", 1e10, 1e12, 1e14}}},
                                                fixtures::machines({{"e0", "east", "G", 2}, {"e1", "east", "G", 2},
                                                                    {"w0", "west", "G", 2}, {"w1", "west", "G", 2}}),
                                                {1e-4, 12.5e9}, {1e-4, 12.5e9}, {1e-4, 1.25e8});
  const Clustering k = cluster_devices(c, SearchConfig{});
  CHECK(k.chosen_k == 2);
  CHECK(k.labels == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});

  // Exhaustive check for k in 1..4: no labelling beats the reported inertia.
  const Points f = device_features(c);
  for (int kk = 1; kk <= 4; ++kk) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> labels(8, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
      if (i == labels.size()) {
        if (used == kk) best = std::min(best, partition_inertia(f, labels, kk));
        return;
      }
      for (int l = 0; l <= std::min(used, kk - 1); ++l) {
        labels[i] = l;
        rec(i + 1, std::max(used, l + 1));
      }
    };
    rec(0, 0);
    CHECK(k.inertia[static_cast<std::size_t>(kk - 1)] == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("identical links give one cluster") {
  const ClusterSpec c = fixtures::build_cluster({{"G", {"G", 1e10, 1e12, 1e14}}},
                                                fixtures::machines({{"m0", "r", "G", 3}, {"m1", "r", "G", 3}}),
                                                {1e-4, 1e10}, {1e-4, 1e10}, {1e-4, 1e10});
  CHECK(cluster_devices(c, SearchConfig{}).chosen_k == 1);
  CHECK(elbow_k({5.0, 1.0}) == 1);
  CHECK(elbow_k({10.0, 2.0, 1.5, 1.0}) == 2);
}

TEST_CASE("initial population passes the prune") {
  const PlanningProblem p = fixtures::ga_problem();
  const SearchConfig cfg = quick();
  const std::vector<Genome> pop = init_population(p.cluster, p.model, cfg);
  CHECK(pop.size() == static_cast<std::size_t>(cfg.population_size));
  for (const Genome& g : pop) CHECK(genome_passes_prune(g, p.cluster, p.model));
}

TEST_CASE("pools too small for one replica are rejected") {
  const ClusterSpec c = fixtures::build_cluster({{"G", {"G", 1e9, 1e12, 1e14}}}, fixtures::machines({{"m", "r", "G", 2}}),
                                                {0, 1e11}, {0, 1e11}, {0, 1e11});
  CHECK_THROWS_AS(init_population(c, fixtures::small_model(), quick()), InfeasiblePoolError);
}

TEST_CASE("evolve is monotone, valid and reproducible") {
  const PlanningProblem p = fixtures::ga_problem();
  const SearchResult a = evolve(p, quick(5));
  for (std::size_t i = 1; i < a.history.size(); ++i) CHECK(a.history[i].best_fitness >= a.history[i - 1].best_fitness);
  const ValidationReport v = validate_assignment(a.best.assignment, p.model, p.task_shapes(), p.cluster);
  CHECK(v.ok);
  for (const auto& [g, ev] : a.final_population)
    CHECK(validate_assignment(ev.assignment, p.model, p.task_shapes(), p.cluster).ok);

  const SearchResult b = evolve(p, quick(5));
  CHECK(a.best.assignment == b.best.assignment);
  CHECK(a.history.size() == b.history.size());

  SearchConfig threaded = quick(5);
  threaded.threads = 4;
  const SearchResult t = evolve(p, threaded);
  CHECK(t.best.assignment == a.best.assignment);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(t.history[i].mean_fitness == a.history[i].mean_fitness);
}

TEST_CASE("zero generations return the best initial genome") {
  const PlanningProblem p = fixtures::ga_problem();
  SearchConfig cfg = quick(2);
  cfg.generations = 0;
  const SearchResult r = evolve(p, cfg);
  CHECK(r.history.size() == 1);
  const SearchResult rr = random_mutation_baseline(p, cfg);
  CHECK(rr.history.size() == 1);
  CHECK(rr.history[0].best_fitness == r.history[0].best_fitness);
}

TEST_CASE("with mutation disabled both variants coincide") {
  const PlanningProblem p = fixtures::ga_problem();
  SearchConfig cfg = quick(4);
  cfg.merge_rate = cfg.split_rate = cfg.swap_rate = 0.0;
  const SearchResult a = evolve(p, cfg);
  const SearchResult b = random_mutation_baseline(p, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best_fitness == b.history[i].best_fitness);
    CHECK(a.history[i].mean_fitness == b.history[i].mean_fitness);
  }
}

TEST_CASE("small homogeneous pool matches exhaustive genome search") {
  // Four GPUs on one machine, light load: the best plan is found by trying
  // every grouping into bucket-level groups.
  const ClusterSpec c = fixtures::build_cluster({{"G", {"G", 1.6e9, 9e11, 1e14}}}, fixtures::machines({{"m", "r", "G", 4}}),
                                                {5e-6, 1e11}, {5e-6, 1e11}, {5e-6, 1e11});
  WorkloadSpec w = fixtures::ga_workload(3);
  w.rate = 4.0;
  w.horizon_requests = 100;
  PlanningProblem p{c, fixtures::small_model(), w, fixtures::ga_slo()};
  SearchConfig cfg = quick(1);
  cfg.generations = 15;
  const SearchResult r = evolve(p, cfg);

  const std::vector<Request> trace = generate_workload(w);
  Fitness best;
  best.attainment = -1;
  for (const auto& groups : std::vector<std::vector<std::vector<int>>>{{{4}}, {{2}, {2}}, {{1}, {3}}, {{1}, {1}, {2}}, {{1}, {1}, {1}, {1}}}) {
    const Genome g = genome(groups);
    if (!genome_passes_prune(g, c, p.model)) continue;
    const Evaluation ev = evaluate_genome(g, p, trace, cfg);
    if (ev.fitness.better_than(best)) best = ev.fitness;
  }
  CHECK(r.best.fitness.attainment == best.attainment);
  CHECK(r.best.fitness.mean_latency == best.mean_latency);
}

TEST_CASE("replan projects the previous plan and searches from it") {
  const PlanningProblem p = fixtures::ga_problem();
  const SearchResult first = evolve(p, quick(8));
  // Remove every device of the first pipeline; the others keep their groups.
  std::vector<int> departed;
  for (const StageAssignment& st : first.best.assignment.pipelines.front())
    departed.insert(departed.end(), st.devices.begin(), st.devices.end());
  const ReplanResult r = replan(first.best.assignment, departed, p, quick(8));
  CHECK(r.cluster.num_devices() == p.cluster.num_devices() - static_cast<int>(departed.size()));
  for (int d : departed) CHECK(r.old_to_new[static_cast<std::size_t>(d)] == -1);
  for (std::size_t i = 1; i < first.best.assignment.pipelines.size(); ++i) {
    std::vector<int> survivors;
    for (const StageAssignment& st : first.best.assignment.pipelines[i])
      for (int d : st.devices) survivors.push_back(r.old_to_new[static_cast<std::size_t>(d)]);
    const TypeVector group = r.cluster.type_vector_of(survivors);
    CHECK(std::find(r.warm_start.groups.begin(), r.warm_start.groups.end(), group) != r.warm_start.groups.end());
  }
  CHECK(validate_assignment(r.search.best.assignment, p.model, p.task_shapes(), r.cluster).ok);

  std::vector<int> everyone(static_cast<std::size_t>(p.cluster.num_devices()));
  std::iota(everyone.begin(), everyone.end(), 0);
  CHECK_THROWS_AS(replan(first.best.assignment, everyone, p, quick(8)), InfeasiblePoolError);
}

TEST_CASE("history helpers") {
  const std::vector<HistoryRow> h{{0, 0.2, 0.1}, {1, 0.5, 0.3}, {2, 0.5, 0.4}, {3, 0.9, 0.5}, {4, 0.9, 0.6}};
  CHECK(generations_to_plateau(h) == 3);
  CHECK(generations_to_reach(h, 0.5) == 1);
  CHECK(generations_to_reach(h, 0.95) == -1);
}

TEST_CASE("config validation") {
  SearchConfig c;
  c.merge_rate = 0.6;
  c.swap_rate = 0.6;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  SearchConfig d;
  d.tp_candidates.clear();
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
