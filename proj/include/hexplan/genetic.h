// SPDX-License-Identifier: Apache-2.0
//
// Genetic search over partitions of the device pool into independent
// pipeline groups.
//
// A genome is a list of disjoint groups, each a TypeVector over the cluster's
// (machine, type) buckets. Evaluating a genome lays out every group with the
// pipeline DP (starting from an even layer split, then re-splitting layers in
// proportion to stage memory), materializes the resulting placement, and
// scores it by simulated SLO attainment on a fixed workload trace.
//
// Concrete devices are handed to groups in genome order: group i takes the
// next tau_k unused devices of bucket k. Genomes are kept canonical (groups
// sorted) so equal multisets of groups evaluate identically.

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "hexplan/assignment.h"
#include "hexplan/cluster.h"
#include "hexplan/pipeline_dp.h"
#include "hexplan/workload.h"

namespace hexplan {

struct SearchConfig {
  int population_size = 32;
  int generations = 100;
  double merge_rate = 0.2;
  double split_rate = 0.2;
  double swap_rate = 0.5;
  int elitism = 2;
  int tournament_size = 3;
  std::uint64_t seed = 0;
  int plateau_patience = 15;  // 0 disables early stopping
  std::vector<int> tp_candidates = default_tp_candidates();
  int refine_iterations = 5;
  int max_clusters = 8;
  int threads = 1;

  void validate() const;
};

struct Genome {
  std::vector<TypeVector> groups;
  std::vector<LayerPartition> partitions;  // filled in by evaluation

  /// Sorts groups (with their partitions) and drops empty ones.
  void canonicalize();
  TypeVector total(std::size_t num_buckets) const;
  bool operator==(const Genome& o) const { return groups == o.groups; }
};

/// Higher attainment wins; equal attainment prefers the lower mean latency.
struct Fitness {
  double attainment = 0.0;
  double mean_latency = std::numeric_limits<double>::infinity();

  bool better_than(const Fitness& o) const {
    if (attainment != o.attainment) return attainment > o.attainment;
    return mean_latency < o.mean_latency;
  }
};

struct PlanningProblem {
  ClusterSpec cluster;
  ModelSpec model;
  WorkloadSpec workload;
  SloConfig slo;

  /// Task shape the layout search plans for: the template with the largest
  /// memory footprint, b * (s_in + s_out).
  TaskSpec planning_task() const;
  std::vector<TaskSpec> task_shapes() const;
};

struct Evaluation {
  Fitness fitness;
  GlobalAssignment assignment;
  std::vector<LayerPartition> partitions;
};

struct HistoryRow {
  int generation = 0;
  double best_fitness = 0.0;  // best-so-far attainment
  double mean_fitness = 0.0;  // population mean attainment
};

struct SearchResult {
  Genome best_genome;
  Evaluation best;
  std::vector<HistoryRow> history;
  std::vector<std::pair<Genome, Evaluation>> final_population;
  std::size_t evaluations = 0;  // distinct genomes evaluated
};

// Memory prune ---------------------------------------------------------------

/// Group can hold one copy of the parameters in aggregate device memory.
bool group_can_host(const TypeVector& group, const ClusterSpec& cluster, const ModelSpec& model);
bool genome_passes_prune(const Genome& g, const ClusterSpec& cluster, const ModelSpec& model);

// Mutations (pure; targets given explicitly) ---------------------------------

/// Replaces groups i1 and i2 by their sum. Throws std::invalid_argument with
/// fewer than two groups or invalid / equal indices.
Genome mutate_merge(const Genome& g, std::size_t i1, std::size_t i2);
/// Replaces group i by floor / ceil halves per bucket. Throws for a group of
/// fewer than two devices.
Genome mutate_split(const Genome& g, std::size_t i);
/// Moves one device of bucket k from group `from` to group `to`; a group left
/// empty is removed. Throws when `from` has no device in bucket k.
Genome mutate_swap(const Genome& g, std::size_t to, std::size_t from, std::size_t k);

/// Split followed by the memory prune; nullopt when either half cannot host a replica.
std::optional<Genome> split_offspring(const Genome& g, std::size_t i, const ClusterSpec& cluster,
                                      const ModelSpec& model);

// Layer partitions -----------------------------------------------------------

/// Integer split of `total` proportional to `weights`, each part >= 1, by
/// largest remainder (ties to the lower index).
std::vector<int> proportional_split(const std::vector<double>& weights, int total);

struct RefineResult {
  LayerPartition partition;
  DpSolution solution;
};

/// Alternates {set l_j proportional to the memory of the devices serving
/// stage j; re-solve the DP} up to `iterations` times or until a fixed point,
/// returning the lowest-cost partition seen (including `current`).
RefineResult refine_partition(const GroupDevices& group, const LayerPartition& current, const DpSolution& solution,
                              const ModelSpec& model, const TaskSpec& task, const ClusterSpec& cluster,
                              const std::vector<int>& tp_candidates, int iterations);

// Evaluation -----------------------------------------------------------------

/// Per-group concrete devices for a canonical genome.
std::vector<GroupDevices> materialize_groups(const Genome& g, const ClusterSpec& cluster);

/// Lays out every group and simulates the resulting placement. Groups whose
/// layout is infeasible contribute no pipeline. Throws InvariantError if the
/// placement fails validate_assignment.
Evaluation evaluate_genome(const Genome& g, const PlanningProblem& problem, const std::vector<Request>& trace,
                           const SearchConfig& config);

// Search ---------------------------------------------------------------------

/// K-means over device link features for k = 1..min(N, max_clusters); the
/// Elbow k.
struct Clustering {
  std::vector<double> inertia;  // index k-1
  int chosen_k = 1;
  std::vector<int> labels;      // device -> group for chosen_k
  std::vector<std::vector<int>> labels_by_k;  // index k-1
};
Clustering cluster_devices(const ClusterSpec& cluster, const SearchConfig& config);

/// Converts device labels to a genome, merging any group that cannot host a
/// replica into the group nearest in link-feature space. Throws
/// InfeasiblePoolError when the whole pool cannot host one replica.
Genome genome_from_labels(const std::vector<int>& labels, const ClusterSpec& cluster, const ModelSpec& model);

/// The Elbow clustering, its neighbours in k, and jittered variants.
std::vector<Genome> init_population(const ClusterSpec& cluster, const ModelSpec& model, const SearchConfig& config);

SearchResult evolve(const PlanningProblem& problem, const SearchConfig& config);

/// Same loop, but every mutation draws a uniformly random regrouping of all
/// devices into a random number of groups.
SearchResult random_mutation_baseline(const PlanningProblem& problem, const SearchConfig& config);

/// Search from a caller-provided seed population (padded with mutations of
/// its members up to population_size).
SearchResult evolve_from(const PlanningProblem& problem, const SearchConfig& config, std::vector<Genome> seeds,
                         bool random_mutation = false);

struct ReplanResult {
  ClusterSpec cluster;           // surviving devices, renumbered
  std::vector<int> old_to_new;   // -1 for departed devices
  Genome warm_start;             // previous plan projected onto survivors
  SearchResult search;
};

/// Projects `previous` onto the surviving devices and searches for
/// max(1, generations / 2) generations from that warm start followed by a
/// fresh K-means population, truncated to the population size.
ReplanResult replan(const GlobalAssignment& previous, const std::vector<int>& departed,
                    const PlanningProblem& problem, const SearchConfig& config);

/// Generation at which the best-so-far first reached its final value.
int generations_to_plateau(const std::vector<HistoryRow>& history);
/// First generation whose best-so-far is >= `level`; -1 if never.
int generations_to_reach(const std::vector<HistoryRow>& history, double level);

}  // namespace hexplan
