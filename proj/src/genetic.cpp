// SPDX-License-Identifier: Apache-2.0

#include "hexplan/genetic.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "hexplan/errors.h"
#include "hexplan/kmeans.h"
#include "hexplan/rng.h"

namespace hexplan {

void SearchConfig::validate() const {
  if (population_size < 1) throw std::invalid_argument("population_size must be >= 1");
  if (generations < 0) throw std::invalid_argument("generations must be >= 0");
  if (elitism < 0 || (elitism >= population_size && population_size > 1))
    throw std::invalid_argument("elitism must be in [0, population_size)");
  if (tournament_size < 1) throw std::invalid_argument("tournament_size must be >= 1");
  for (double r : {merge_rate, split_rate, swap_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("mutation rates must be in [0, 1]");
  if (merge_rate + split_rate + swap_rate > 1.0 + 1e-12) throw std::invalid_argument("mutation rates sum above 1");
  if (tp_candidates.empty()) throw std::invalid_argument("tp_candidates is empty");
  if (refine_iterations < 0) throw std::invalid_argument("refine_iterations must be >= 0");
  if (max_clusters < 1) throw std::invalid_argument("max_clusters must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

void Genome::canonicalize() {
  std::vector<std::pair<TypeVector, LayerPartition>> items;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) continue;
    items.emplace_back(groups[i], i < partitions.size() ? partitions[i] : LayerPartition{});
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  groups.clear();
  partitions.clear();
  for (auto& [g, p] : items) {
    groups.push_back(std::move(g));
    partitions.push_back(std::move(p));
  }
}

TypeVector Genome::total(std::size_t num_buckets) const {
  TypeVector t(num_buckets);
  for (const TypeVector& g : groups) t += g;
  return t;
}

TaskSpec PlanningProblem::planning_task() const {
  const TaskSpec* best = nullptr;
  long best_tokens = -1;
  for (const TaskTemplate& t : workload.tasks) {
    const long tokens = static_cast<long>(t.task.batch_size) * (t.task.input_len + t.task.output_len);
    if (tokens > best_tokens) {
      best_tokens = tokens;
      best = &t.task;
    }
  }
  if (!best) throw std::invalid_argument("workload has no task templates");
  return *best;
}

std::vector<TaskSpec> PlanningProblem::task_shapes() const {
  std::vector<TaskSpec> out;
  for (const TaskTemplate& t : workload.tasks) out.push_back(t.task);
  return out;
}

// Memory prune ---------------------------------------------------------------

bool group_can_host(const TypeVector& group, const ClusterSpec& cluster, const ModelSpec& model) {
  return group.total() > 0 && cluster.total_memory(group) >= model.parameter_bytes();
}

bool genome_passes_prune(const Genome& g, const ClusterSpec& cluster, const ModelSpec& model) {
  if (g.groups.empty()) return false;
  for (const TypeVector& group : g.groups)
    if (!group_can_host(group, cluster, model)) return false;
  return g.total(static_cast<std::size_t>(cluster.num_buckets())).fits_within(cluster.capacity());
}

// Mutations ------------------------------------------------------------------

namespace {

Genome with_partitions_sized(Genome g) {
  g.partitions.resize(g.groups.size());
  return g;
}

}  // namespace

Genome mutate_merge(const Genome& g, std::size_t i1, std::size_t i2) {
  if (g.groups.size() < 2) throw std::invalid_argument("merge needs at least two groups");
  if (i1 == i2 || i1 >= g.groups.size() || i2 >= g.groups.size()) throw std::invalid_argument("merge: bad group indices");
  Genome src = with_partitions_sized(g);
  Genome out;
  for (std::size_t i = 0; i < src.groups.size(); ++i) {
    if (i == i1 || i == i2) continue;
    out.groups.push_back(src.groups[i]);
    out.partitions.push_back(src.partitions[i]);
  }
  out.groups.push_back(src.groups[i1] + src.groups[i2]);
  out.partitions.emplace_back();
  out.canonicalize();
  return out;
}

Genome mutate_split(const Genome& g, std::size_t i) {
  if (i >= g.groups.size()) throw std::invalid_argument("split: bad group index");
  const TypeVector& tau = g.groups[i];
  if (tau.total() < 2) throw std::invalid_argument("split: group has fewer than two devices");
  TypeVector lo(tau.size()), hi(tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) {
    lo[k] = tau[k] / 2;
    hi[k] = tau[k] - lo[k];
  }
  Genome out = with_partitions_sized(g);
  out.groups[i] = lo;
  out.partitions[i] = {};
  out.groups.push_back(hi);
  out.partitions.emplace_back();
  // A group like [1,0] splits into an empty half; canonicalize drops it.
  out.canonicalize();
  return out;
}

Genome mutate_swap(const Genome& g, std::size_t to, std::size_t from, std::size_t k) {
  if (to == from || to >= g.groups.size() || from >= g.groups.size()) throw std::invalid_argument("swap: bad group indices");
  if (k >= g.groups[from].size() || g.groups[from][k] < 1) throw std::invalid_argument("swap: source bucket is empty");
  Genome out = with_partitions_sized(g);
  ++out.groups[to][k];
  --out.groups[from][k];
  out.partitions[to] = {};
  out.partitions[from] = {};
  out.canonicalize();
  return out;
}

std::optional<Genome> split_offspring(const Genome& g, std::size_t i, const ClusterSpec& cluster,
                                      const ModelSpec& model) {
  Genome child = mutate_split(g, i);
  if (child.groups.size() != g.groups.size() + 1) return std::nullopt;
  if (!genome_passes_prune(child, cluster, model)) return std::nullopt;
  return child;
}

// Layer partitions -----------------------------------------------------------

std::vector<int> proportional_split(const std::vector<double>& weights, int total) {
  const auto n = static_cast<int>(weights.size());
  if (n == 0 || total < n) throw std::invalid_argument("proportional_split: need 1 <= parts <= total");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0)) throw std::invalid_argument("proportional_split: negative weight");
    sum += w;
  }
  std::vector<double> quota(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j)
    quota[j] = sum > 0 ? total * weights[j] / sum : static_cast<double>(total) / n;

  std::vector<int> parts(weights.size());
  int assigned = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    parts[j] = std::max(1, static_cast<int>(std::floor(quota[j])));
    assigned += parts[j];
  }
  while (assigned < total) {
    std::size_t pick = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const double rem = quota[j] - parts[j];
      if (rem > best) {
        best = rem;
        pick = j;
      }
    }
    ++parts[pick];
    ++assigned;
  }
  while (assigned > total) {
    std::size_t pick = parts.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (parts[j] <= 1) continue;
      const double rem = quota[j] - parts[j];
      if (rem < best) {
        best = rem;
        pick = j;
      }
    }
    --parts[pick];
    --assigned;
  }
  return parts;
}

RefineResult refine_partition(const GroupDevices& group, const LayerPartition& current, const DpSolution& solution,
                              const ModelSpec& model, const TaskSpec& task, const ClusterSpec& cluster,
                              const std::vector<int>& tp_candidates, int iterations) {
  RefineResult best{current, solution};
  LayerPartition partition = current;
  DpSolution sol = solution;
  for (int it = 0; it < iterations && sol.feasible; ++it) {
    std::vector<double> stage_memory;
    for (const StageAssignment& st : sol.stages) {
      double m = 0.0;
      for (int d : st.devices) m += cluster.gpu(d).mem_limit;
      stage_memory.push_back(m);
    }
    LayerPartition next{proportional_split(stage_memory, model.num_layers)};
    if (next == partition) break;
    sol = solve_pipeline(group, next, model, task, cluster, tp_candidates);
    partition = std::move(next);
    if (sol.feasible && (!best.solution.feasible || sol.cost < best.solution.cost)) best = {partition, sol};
  }
  return best;
}

// Evaluation -----------------------------------------------------------------

std::vector<GroupDevices> materialize_groups(const Genome& g, const ClusterSpec& cluster) {
  const auto nb = static_cast<std::size_t>(cluster.num_buckets());
  std::vector<int> offset(nb, 0);
  std::vector<GroupDevices> out;
  for (const TypeVector& tau : g.groups) {
    if (tau.size() != nb) throw std::invalid_argument("genome group does not match cluster buckets");
    GroupDevices devs(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto& all = cluster.bucket(static_cast<int>(k)).devices;
      if (tau[k] < 0 || offset[k] + tau[k] > static_cast<int>(all.size()))
        throw std::invalid_argument("genome exceeds bucket capacity");
      devs[k].assign(all.begin() + offset[k], all.begin() + offset[k] + tau[k]);
      offset[k] += tau[k];
    }
    out.push_back(std::move(devs));
  }
  return out;
}

namespace {

std::optional<RefineResult> layout_group(const TypeVector& tau, const GroupDevices& devs, const PlanningProblem& p,
                                         const TaskSpec& task, const SearchConfig& config) {
  const ModelSpec& model = p.model;
  const int stages = std::min({tau.nonzero_buckets(), model.num_layers, tau.total()});
  LayerPartition partition = LayerPartition::even(model.num_layers, stages);
  DpSolution sol = solve_pipeline(devs, partition, model, task, p.cluster, config.tp_candidates);
  if (!sol.feasible) {
    // Fall back to one stage per bucket, sized by bucket memory, largest first.
    std::vector<double> memory;
    for (std::size_t k = 0; k < tau.size(); ++k)
      if (tau[k] > 0) memory.push_back(tau[k] * p.cluster.bucket_mem_limit(static_cast<int>(k)));
    std::sort(memory.begin(), memory.end(), std::greater<>());
    memory.resize(static_cast<std::size_t>(stages));
    partition = LayerPartition{proportional_split(memory, model.num_layers)};
    sol = solve_pipeline(devs, partition, model, task, p.cluster, config.tp_candidates);
  }
  if (!sol.feasible) return std::nullopt;
  return refine_partition(devs, partition, sol, model, task, p.cluster, config.tp_candidates,
                          config.refine_iterations);
}

}  // namespace

Evaluation evaluate_genome(const Genome& g, const PlanningProblem& problem, const std::vector<Request>& trace,
                           const SearchConfig& config) {
  const TaskSpec task = problem.planning_task();
  const std::vector<GroupDevices> devices = materialize_groups(g, problem.cluster);
  Evaluation ev;
  ev.partitions.resize(g.groups.size());
  for (std::size_t i = 0; i < g.groups.size(); ++i) {
    if (!group_can_host(g.groups[i], problem.cluster, problem.model)) continue;
    auto laid = layout_group(g.groups[i], devices[i], problem, task, config);
    if (!laid) continue;
    ev.partitions[i] = laid->partition;
    ev.assignment.pipelines.push_back(std::move(laid->solution.stages));
  }
  const ValidationReport check = validate_assignment(ev.assignment, problem.model, problem.task_shapes(), problem.cluster);
  if (!check.ok) throw InvariantError("evaluated placement is invalid: " + check.problems.front());
  if (ev.assignment.empty()) return ev;

  const SloReport report = simulate(ev.assignment, trace, problem.slo, problem.model, problem.cluster);
  double latency = 0.0;
  for (const RequestRecord& r : report.per_request) latency += r.latency();
  ev.fitness.attainment = report.attainment;
  ev.fitness.mean_latency = report.per_request.empty() ? 0.0 : latency / static_cast<double>(report.per_request.size());
  return ev;
}

// Initialization -------------------------------------------------------------

Clustering cluster_devices(const ClusterSpec& cluster, const SearchConfig& config) {
  const Points features = device_features(cluster);
  const int k_max = std::min(cluster.num_devices(), config.max_clusters);
  Clustering c;
  for (int k = 1; k <= k_max; ++k) {
    KMeansResult r = kmeans(features, k, derive_seed(config.seed, {0x6b6d}));
    c.inertia.push_back(r.inertia);
    c.labels_by_k.push_back(std::move(r.labels));
  }
  c.chosen_k = elbow_k(c.inertia);
  c.labels = c.labels_by_k[static_cast<std::size_t>(c.chosen_k - 1)];
  return c;
}

Genome genome_from_labels(const std::vector<int>& labels, const ClusterSpec& cluster, const ModelSpec& model) {
  if (labels.size() != static_cast<std::size_t>(cluster.num_devices()))
    throw std::invalid_argument("one label per device required");
  if (cluster.total_memory(cluster.capacity()) < model.parameter_bytes())
    throw InfeasiblePoolError("device pool memory cannot hold one copy of the model parameters");

  const Points features = device_features(cluster);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1));
  for (std::size_t d = 0; d < labels.size(); ++d) members[static_cast<std::size_t>(labels[d])].push_back(static_cast<int>(d));
  std::erase_if(members, [](const std::vector<int>& m) { return m.empty(); });

  auto memory = [&](const std::vector<int>& m) { return cluster.total_memory(cluster.type_vector_of(m)); };
  auto centroid = [&](const std::vector<int>& m) {
    std::vector<double> c(features.front().size(), 0.0);
    for (int d : m)
      for (std::size_t x = 0; x < c.size(); ++x) c[x] += features[static_cast<std::size_t>(d)][x];
    for (double& v : c) v /= static_cast<double>(m.size());
    return c;
  };

  while (members.size() > 1) {
    std::size_t weakest = members.size();
    double weakest_mem = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < members.size(); ++i) {
      const double m = memory(members[i]);
      if (m < model.parameter_bytes() && m < weakest_mem) {
        weakest_mem = m;
        weakest = i;
      }
    }
    if (weakest == members.size()) break;
    const std::vector<double> from = centroid(members[weakest]);
    std::size_t nearest = members.size();
    double nearest_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i == weakest) continue;
      const std::vector<double> to = centroid(members[i]);
      double d = 0.0;
      for (std::size_t x = 0; x < to.size(); ++x) d += (to[x] - from[x]) * (to[x] - from[x]);
      if (d < nearest_d) {
        nearest_d = d;
        nearest = i;
      }
    }
    members[nearest].insert(members[nearest].end(), members[weakest].begin(), members[weakest].end());
    members.erase(members.begin() + static_cast<std::ptrdiff_t>(weakest));
  }

  Genome g;
  for (const auto& m : members) g.groups.push_back(cluster.type_vector_of(m));
  g.canonicalize();
  return g;
}

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

// One structured mutation drawn by the configured rates; nullopt when the
// offspring is pruned or the drawn operator has no valid target.
std::optional<Genome> structured_child(const Genome& parent, Rng& rng, const SearchConfig& cfg,
                                       const ClusterSpec& cluster, const ModelSpec& model, bool* reproduced) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const std::size_t n = parent.groups.size();
  *reproduced = false;
  if (u < cfg.merge_rate) {
    if (n < 2) return std::nullopt;
    const std::size_t i1 = uniform_index(rng, n);
    std::size_t i2 = uniform_index(rng, n - 1);
    if (i2 >= i1) ++i2;
    return mutate_merge(parent, i1, i2);
  }
  if (u < cfg.merge_rate + cfg.split_rate) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
      if (parent.groups[i].total() >= 2) candidates.push_back(i);
    if (candidates.empty()) return std::nullopt;
    return split_offspring(parent, candidates[uniform_index(rng, candidates.size())], cluster, model);
  }
  if (u < cfg.merge_rate + cfg.split_rate + cfg.swap_rate) {
    if (n < 2) return std::nullopt;
    const std::size_t from = uniform_index(rng, n);
    std::size_t to = uniform_index(rng, n - 1);
    if (to >= from) ++to;
    std::vector<std::size_t> buckets;
    for (std::size_t k = 0; k < parent.groups[from].size(); ++k)
      if (parent.groups[from][k] > 0) buckets.push_back(k);
    Genome child = mutate_swap(parent, to, from, buckets[uniform_index(rng, buckets.size())]);
    if (!genome_passes_prune(child, cluster, model)) return std::nullopt;
    return child;
  }
  *reproduced = true;
  return parent;
}

std::optional<Genome> random_child(const Genome& parent, Rng& rng, const SearchConfig& cfg, const ClusterSpec& cluster,
                                   const ModelSpec& model, bool* reproduced) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  *reproduced = false;
  if (u >= cfg.merge_rate + cfg.split_rate + cfg.swap_rate) {
    *reproduced = true;
    return parent;
  }
  const int n = cluster.num_devices();
  const int groups = std::uniform_int_distribution<int>(1, n)(rng);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(groups));
  for (int d = 0; d < n; ++d) members[uniform_index(rng, static_cast<std::size_t>(groups))].push_back(d);
  Genome child;
  for (const auto& m : members) child.groups.push_back(cluster.type_vector_of(m));
  child.canonicalize();
  if (!genome_passes_prune(child, cluster, model)) return std::nullopt;
  return child;
}

constexpr int kMutationAttempts = 5;

Genome make_child(const Genome& parent, Rng& rng, const SearchConfig& cfg, const ClusterSpec& cluster,
                  const ModelSpec& model, bool random_mutation) {
  for (int attempt = 0; attempt < kMutationAttempts; ++attempt) {
    bool reproduced = false;
    auto child = random_mutation ? random_child(parent, rng, cfg, cluster, model, &reproduced)
                                 : structured_child(parent, rng, cfg, cluster, model, &reproduced);
    if (child) return *child;
  }
  return parent;
}

std::vector<Genome> pad_population(std::vector<Genome> seeds, const SearchConfig& cfg, const ClusterSpec& cluster,
                                   const ModelSpec& model) {
  for (Genome& g : seeds) g.canonicalize();
  std::erase_if(seeds, [&](const Genome& g) { return !genome_passes_prune(g, cluster, model); });
  if (seeds.empty()) throw InfeasiblePoolError("no seed genome can host a model replica");
  const std::size_t base = seeds.size();
  Rng rng(derive_seed(cfg.seed, {0x7061}));
  // Jitter uses structured operators regardless of the search variant.
  SearchConfig jitter = cfg;
  if (jitter.merge_rate + jitter.split_rate + jitter.swap_rate <= 0) {
    jitter.merge_rate = 0.2;
    jitter.split_rate = 0.2;
    jitter.swap_rate = 0.5;
  }
  for (std::size_t i = 0; seeds.size() < static_cast<std::size_t>(cfg.population_size); ++i) {
    Genome g = seeds[i % base];
    const int steps = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int s = 0; s < steps; ++s) g = make_child(g, rng, jitter, cluster, model, false);
    seeds.push_back(std::move(g));
  }
  seeds.resize(std::min(seeds.size(), static_cast<std::size_t>(cfg.population_size)));
  return seeds;
}

}  // namespace

std::vector<Genome> init_population(const ClusterSpec& cluster, const ModelSpec& model, const SearchConfig& config) {
  config.validate();
  if (cluster.total_memory(cluster.capacity()) < model.parameter_bytes())
    throw InfeasiblePoolError("device pool memory cannot hold one copy of the model parameters");
  const Clustering c = cluster_devices(cluster, config);
  std::vector<Genome> seeds{genome_from_labels(c.labels, cluster, model)};
  for (int k : {c.chosen_k - 1, c.chosen_k + 1}) {
    if (k < 1 || k > static_cast<int>(c.labels_by_k.size())) continue;
    Genome g = genome_from_labels(c.labels_by_k[static_cast<std::size_t>(k - 1)], cluster, model);
    if (std::find(seeds.begin(), seeds.end(), g) == seeds.end()) seeds.push_back(std::move(g));
  }
  return pad_population(std::move(seeds), config, cluster, model);
}

// Search ---------------------------------------------------------------------

namespace {

using GenomeKey = std::vector<TypeVector>;

class EvaluationCache {
 public:
  EvaluationCache(const PlanningProblem& p, const SearchConfig& c, std::vector<Request> trace)
      : problem_(p), config_(c), trace_(std::move(trace)) {}

  void evaluate_all(const std::vector<Genome>& genomes) {
    std::vector<const Genome*> todo;
    std::set<GenomeKey> queued;
    for (const Genome& g : genomes) {
      if (cache_.contains(g.groups) || !queued.insert(g.groups).second) continue;
      todo.push_back(&g);
    }
    std::vector<Evaluation> results(todo.size());
    std::vector<std::exception_ptr> errors(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < todo.size(); i = next++) {
        try {
          results[i] = evaluate_genome(*todo[i], problem_, trace_, config_);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.threads), todo.size());
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      cache_.emplace(todo[i]->groups, std::move(results[i]));
    }
  }

  const Evaluation& at(const Genome& g) const { return cache_.at(g.groups); }
  std::size_t size() const { return cache_.size(); }

 private:
  const PlanningProblem& problem_;
  const SearchConfig& config_;
  std::vector<Request> trace_;
  std::map<GenomeKey, Evaluation> cache_;
};

struct Individual {
  Genome genome;
  Fitness fitness;
};

bool ranks_before(const Individual& a, const Individual& b) {
  if (a.fitness.better_than(b.fitness)) return true;
  if (b.fitness.better_than(a.fitness)) return false;
  return a.genome.groups < b.genome.groups;
}

double mean_attainment(const std::vector<Individual>& pop) {
  double s = 0.0;
  for (const Individual& i : pop) s += i.fitness.attainment;
  return pop.empty() ? 0.0 : s / static_cast<double>(pop.size());
}

SearchResult run_search(const PlanningProblem& problem, const SearchConfig& cfg, std::vector<Genome> seeds,
                        bool random_mutation) {
  cfg.validate();
  EvaluationCache cache(problem, cfg, generate_workload(problem.workload));
  std::vector<Genome> initial = pad_population(std::move(seeds), cfg, problem.cluster, problem.model);
  cache.evaluate_all(initial);

  std::vector<Individual> pop;
  for (Genome& g : initial) {
    const Evaluation& ev = cache.at(g);
    g.partitions = ev.partitions;
    pop.push_back({std::move(g), ev.fitness});
  }
  std::stable_sort(pop.begin(), pop.end(), ranks_before);

  Individual best = pop.front();
  SearchResult result;
  result.history.push_back({0, best.fitness.attainment, mean_attainment(pop)});
  int last_improvement = 0;

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    const std::size_t elites = std::min(pop.size(), static_cast<std::size_t>(cfg.elitism));
    const std::size_t n_children = static_cast<std::size_t>(cfg.population_size) - std::min<std::size_t>(elites, cfg.population_size);
    std::vector<Genome> children;
    for (std::size_t o = 0; o < n_children; ++o) {
      Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(gen), o}));
      std::size_t winner = uniform_index(rng, pop.size());
      for (int t = 1; t < cfg.tournament_size; ++t) winner = std::min(winner, uniform_index(rng, pop.size()));
      children.push_back(make_child(pop[winner].genome, rng, cfg, problem.cluster, problem.model, random_mutation));
    }
    cache.evaluate_all(children);

    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(elites));
    for (Genome& g : children) {
      const Evaluation& ev = cache.at(g);
      g.partitions = ev.partitions;
      next.push_back({std::move(g), ev.fitness});
    }
    std::stable_sort(next.begin(), next.end(), ranks_before);
    pop = std::move(next);

    if (ranks_before(pop.front(), best)) {
      if (pop.front().fitness.attainment > best.fitness.attainment) last_improvement = gen;
      best = pop.front();
    }
    result.history.push_back({gen, best.fitness.attainment, mean_attainment(pop)});
    if (cfg.plateau_patience > 0 && gen - last_improvement >= cfg.plateau_patience) break;
  }

  result.best_genome = best.genome;
  result.best = cache.at(best.genome);
  result.evaluations = cache.size();
  for (const Individual& i : pop) result.final_population.emplace_back(i.genome, cache.at(i.genome));
  if (result.best.assignment.empty()) throw InfeasiblePoolError("no genome yields a memory-feasible pipeline");
  const ValidationReport check =
      validate_assignment(result.best.assignment, problem.model, problem.task_shapes(), problem.cluster);
  if (!check.ok) throw InvariantError("best placement is invalid: " + check.problems.front());
  return result;
}

}  // namespace

SearchResult evolve_from(const PlanningProblem& problem, const SearchConfig& config, std::vector<Genome> seeds,
                         bool random_mutation) {
  return run_search(problem, config, std::move(seeds), random_mutation);
}

SearchResult evolve(const PlanningProblem& problem, const SearchConfig& config) {
  return run_search(problem, config, init_population(problem.cluster, problem.model, config), false);
}

SearchResult random_mutation_baseline(const PlanningProblem& problem, const SearchConfig& config) {
  return run_search(problem, config, init_population(problem.cluster, problem.model, config), true);
}

ReplanResult replan(const GlobalAssignment& previous, const std::vector<int>& departed,
                    const PlanningProblem& problem, const SearchConfig& config) {
  ReplanResult out;
  out.cluster = problem.cluster.without(departed, &out.old_to_new);
  PlanningProblem survivors{out.cluster, problem.model, problem.workload, problem.slo};

  // Label each surviving device by its previous pipeline; devices the old plan
  // left idle share one extra label.
  const int idle = static_cast<int>(previous.pipelines.size());
  std::vector<int> labels(static_cast<std::size_t>(out.cluster.num_devices()), idle);
  for (std::size_t i = 0; i < previous.pipelines.size(); ++i) {
    for (const StageAssignment& st : previous.pipelines[i]) {
      for (int d : st.devices) {
        if (d < 0 || static_cast<std::size_t>(d) >= out.old_to_new.size())
          throw std::invalid_argument("previous plan references an unknown device");
        const int now = out.old_to_new[static_cast<std::size_t>(d)];
        if (now >= 0) labels[static_cast<std::size_t>(now)] = static_cast<int>(i);
      }
    }
  }
  // Surviving replicas that can still host the model keep their group; the
  // rest of the survivors are pooled and kept only if the pool can host one.
  std::vector<std::vector<int>> members(previous.pipelines.size() + 1);
  for (std::size_t d = 0; d < labels.size(); ++d) members[static_cast<std::size_t>(labels[d])].push_back(static_cast<int>(d));
  std::vector<int> leftover = std::move(members.back());
  members.pop_back();
  for (const auto& m : members) {
    if (m.empty()) continue;
    const TypeVector group = out.cluster.type_vector_of(m);
    if (group_can_host(group, out.cluster, problem.model)) {
      out.warm_start.groups.push_back(group);
    } else {
      leftover.insert(leftover.end(), m.begin(), m.end());
    }
  }
  if (!leftover.empty()) {
    const TypeVector pooled = out.cluster.type_vector_of(leftover);
    if (group_can_host(pooled, out.cluster, problem.model)) out.warm_start.groups.push_back(pooled);
  }
  out.warm_start.canonicalize();
  if (out.warm_start.groups.empty()) out.warm_start = genome_from_labels(labels, out.cluster, problem.model);

  SearchConfig reduced = config;
  reduced.generations = std::max(1, config.generations / 2);
  std::vector<Genome> seeds{out.warm_start};
  std::vector<Genome> fresh = init_population(out.cluster, problem.model, config);
  for (Genome& g : fresh)
    if (std::find(seeds.begin(), seeds.end(), g) == seeds.end()) seeds.push_back(std::move(g));
  out.search = run_search(survivors, reduced, std::move(seeds), false);
  return out;
}

int generations_to_plateau(const std::vector<HistoryRow>& history) {
  if (history.empty()) return 0;
  const double final_best = history.back().best_fitness;
  for (const HistoryRow& row : history)
    if (row.best_fitness >= final_best) return row.generation;
  return history.back().generation;
}

int generations_to_reach(const std::vector<HistoryRow>& history, double level) {
  for (const HistoryRow& row : history)
    if (row.best_fitness >= level) return row.generation;
  return -1;
}

}  // namespace hexplan
