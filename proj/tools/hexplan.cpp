// SPDX-License-Identifier: Apache-2.0
//
// hexplan: placement planner for serving one model on a heterogeneous GPU pool.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hexplan/assignment.h"
#include "hexplan/cluster.h"
#include "hexplan/cost_model.h"
#include "hexplan/errors.h"
#include "hexplan/genetic.h"
#include "hexplan/pipeline_dp.h"
#include "hexplan/plan_io.h"
#include "hexplan/workload.h"

namespace fs = std::filesystem;
using namespace hexplan;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kParse = 2, kInfeasible = 3, kInvariant = 4 };

struct Options {
  std::string cluster, model, workload, slo, plan, group, out_dir = ".";
  std::uint64_t seed = 0;
  int pop = 32;
  int gens = 100;
  int threads = 1;
  int seeds = 10;
  std::vector<int> tp_candidates = default_tp_candidates();
  std::vector<int> remove;
  std::vector<double> scales{0.5, 1, 1.5, 2, 3, 4, 5, 6, 8, 10};
  std::vector<double> rates{0.125, 0.25, 0.5, 1, 2, 4, 6, 8, 10};
  int batch = 0, input_len = 0, output_len = 0;
};

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

void add_search_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--pop", o.pop, "Population size");
  cmd->add_option("--gens", o.gens, "Generations");
  cmd->add_option("--tp-candidates", o.tp_candidates, "Allowed TP degrees")->delimiter(',');
  cmd->add_option("--threads", o.threads, "Worker threads for offspring evaluation");
}

void add_problem_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--cluster", o.cluster, "Cluster file")->required();
  cmd->add_option("--model", o.model, "Model file")->required();
  cmd->add_option("--workload", o.workload, "Workload file")->required();
  cmd->add_option("--slo", o.slo, "SLO file")->required();
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
}

SearchConfig search_config(const Options& o) {
  SearchConfig c;
  c.population_size = o.pop;
  c.generations = o.gens;
  c.seed = o.seed;
  c.tp_candidates = o.tp_candidates;
  c.threads = o.threads;
  c.elitism = std::min(c.elitism, std::max(0, o.pop - 1));
  c.validate();
  return c;
}

PlanningProblem load_problem(const Options& o, RunManifest& manifest) {
  for (const std::string& p : {o.cluster, o.model, o.workload, o.slo}) {
    if (!fs::exists(p)) throw ParseError("missing input file: " + p);
    manifest.add_input(p);
  }
  return {load_cluster(o.cluster), load_model(o.model), workload_from_json(read_json_file(o.workload)),
          slo_from_json(read_json_file(o.slo))};
}

void write_history(const fs::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out = open_csv(path);
  out << "generation,best_fitness,mean_fitness\n";
  for (const HistoryRow& r : history) out << r.generation << ',' << r.best_fitness << ',' << r.mean_fitness << '\n';
}

void finish(RunManifest& manifest, std::chrono::steady_clock::time_point t0, const fs::path& dir) {
  manifest.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json_file(dir / "manifest.json", manifest.to_json());
}

void print_plan(const GlobalAssignment& plan) {
  for (const Pipeline& p : plan.pipelines) {
    std::cout << compact_notation(p) << " layers=[";
    for (std::size_t j = 0; j < p.size(); ++j) std::cout << (j ? "," : "") << p[j].num_layers;
    std::cout << "]\n";
  }
}

int cmd_plan(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "plan";
  const PlanningProblem problem = load_problem(o, manifest);
  const SearchConfig config = search_config(o);
  manifest.seed = config.seed;
  manifest.config = to_json(config);

  const SearchResult result = evolve(problem, config);
  fs::create_directories(o.out_dir);
  write_json_file(fs::path(o.out_dir) / "plan.json", plan_to_json(result.best.assignment));
  write_history(fs::path(o.out_dir) / "history.csv", result.history);
  finish(manifest, t0, o.out_dir);
  print_plan(result.best.assignment);
  std::cout << "attainment " << result.best.fitness.attainment << '\n';
  return kOk;
}

int cmd_replan(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "replan";
  const PlanningProblem problem = load_problem(o, manifest);
  manifest.add_input(o.plan);
  const GlobalAssignment previous = load_plan(o.plan);
  const SearchConfig config = search_config(o);
  manifest.seed = config.seed;
  manifest.config = to_json(config);
  manifest.config["remove"] = o.remove;

  const ReplanResult r = replan(previous, o.remove, problem, config);
  // Report devices by their ids in the original cluster file.
  std::vector<int> new_to_old(static_cast<std::size_t>(r.cluster.num_devices()));
  for (std::size_t old = 0; old < r.old_to_new.size(); ++old)
    if (r.old_to_new[old] >= 0) new_to_old[static_cast<std::size_t>(r.old_to_new[old])] = static_cast<int>(old);
  GlobalAssignment plan = r.search.best.assignment;
  for (Pipeline& p : plan.pipelines)
    for (StageAssignment& st : p)
      for (int& d : st.devices) d = new_to_old[static_cast<std::size_t>(d)];

  fs::create_directories(o.out_dir);
  write_json_file(fs::path(o.out_dir) / "plan.json", plan_to_json(plan));
  write_json_file(fs::path(o.out_dir) / "surviving_cluster.json", r.cluster.to_json());
  write_history(fs::path(o.out_dir) / "history.csv", r.search.history);
  finish(manifest, t0, o.out_dir);
  print_plan(plan);
  std::cout << "attainment " << r.search.best.fitness.attainment << '\n';
  return kOk;
}

int cmd_simulate(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "simulate";
  const PlanningProblem problem = load_problem(o, manifest);
  manifest.add_input(o.plan);
  const GlobalAssignment plan = load_plan(o.plan);
  const ValidationReport check = validate_assignment(plan, problem.model, problem.task_shapes(), problem.cluster);
  if (!check.ok) throw ParseError("plan is not valid for this cluster: " + check.problems.front());
  manifest.seed = problem.workload.seed;
  manifest.config = {{"scales", o.scales}, {"rates", o.rates}};

  const std::vector<Request> trace = generate_workload(problem.workload);
  SloReport report = simulate(plan, trace, problem.slo, problem.model, problem.cluster);
  const RateSweep by_rate = sweep_rate(plan, problem.workload, problem.slo, o.rates, problem.model, problem.cluster);
  report.peak_rate_estimate = by_rate.peak_rate;
  const std::vector<SweepRow> by_scale =
      sweep_slo_scale(plan, trace, problem.slo, o.scales, problem.model, problem.cluster);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  write_json_file(dir / "report.json", to_json(report));
  {
    std::ofstream out = open_csv(dir / "requests.csv");
    out << "id,arrival,start,finish,replica,met\n";
    for (const RequestRecord& r : report.per_request)
      out << r.id << ',' << r.arrival << ',' << r.start << ',' << r.finish << ',' << r.replica << ',' << (r.met ? 1 : 0)
          << '\n';
  }
  {
    std::ofstream out = open_csv(dir / "attainment_vs_scale.csv");
    out << "slo_scale,attainment\n";
    for (const SweepRow& r : by_scale) out << r.x << ',' << r.attainment << '\n';
  }
  {
    std::ofstream out = open_csv(dir / "attainment_vs_rate.csv");
    out << "rate,attainment\n";
    for (const SweepRow& r : by_rate.rows) out << r.x << ',' << r.attainment << '\n';
  }
  finish(manifest, t0, dir);
  std::cout << "attainment " << report.attainment << '\n';
  return kOk;
}

TaskSpec task_from_flags(const Options& o, const std::optional<json>& fallback) {
  TaskSpec t;
  if (fallback) t = task_from_json(*fallback);
  if (o.batch > 0) t.batch_size = o.batch;
  if (o.input_len > 0) t.input_len = o.input_len;
  if (o.output_len > 0) t.output_len = o.output_len;
  t.validate();
  return t;
}

// Group file: {schema_version, devices: [ids], layers: [l_1..l_S], task: {...}}
int cmd_dp(const Options& o) {
  const ClusterSpec cluster = load_cluster(o.cluster);
  const ModelSpec model = load_model(o.model);
  const json g = read_json_file(o.group);
  check_schema_version(g, "group");
  std::vector<int> devices;
  LayerPartition partition;
  std::optional<json> task_json;
  try {
    devices = g.at("devices").get<std::vector<int>>();
    partition.layers = g.at("layers").get<std::vector<int>>();
    if (g.contains("task")) task_json = g["task"];
  } catch (const json::exception& e) {
    throw ParseError(std::string("group: ") + e.what());
  }
  for (int d : devices)
    if (d < 0 || d >= cluster.num_devices()) throw ParseError("group: unknown device " + std::to_string(d));
  try {
    partition.validate(model.num_layers);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("group: ") + e.what());
  }
  const TaskSpec task = task_from_flags(o, task_json);

  GroupDevices group(static_cast<std::size_t>(cluster.num_buckets()));
  for (int d : devices) group[static_cast<std::size_t>(cluster.bucket_of(d))].push_back(d);
  for (auto& list : group) std::sort(list.begin(), list.end());
  const DpSolution sol = solve_pipeline(group, partition, model, task, cluster, o.tp_candidates);
  if (!sol.feasible) throw InfeasiblePoolError("no memory-feasible layout for this group and partition");

  GlobalAssignment as{{sol.stages}};
  json out{{"cost_s", sol.cost}, {"expanded_states", sol.expanded_states}, {"plan", plan_to_json(as)}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_costs(const Options& o) {
  const ClusterSpec cluster = load_cluster(o.cluster);
  const ModelSpec model = load_model(o.model);
  const GlobalAssignment plan = load_plan(o.plan);
  std::optional<json> task_json;
  if (!o.workload.empty()) {
    const WorkloadSpec w = workload_from_json(read_json_file(o.workload));
    task_json = to_json(w.tasks.front().task);
  }
  const TaskSpec task = task_from_flags(o, task_json);

  std::cout.precision(10);
  std::cout << "pipeline,stage,comp_s,tp_s,pp_s,mem_bytes_per_dev,feasible\n";
  for (std::size_t i = 0; i < plan.pipelines.size(); ++i) {
    const PipelineCost c = pipeline_cost(plan.pipelines[i], model, task, cluster);
    for (std::size_t j = 0; j < c.stages.size(); ++j) {
      const StageCostBreakdown& s = c.stages[j];
      std::cout << i << ',' << j << ',' << s.comp << ',' << s.comm_tp << ',' << s.comm_pp_to_next << ','
                << static_cast<long long>(s.mem_per_device) << ',' << (s.memory_ok ? 1 : 0) << '\n';
    }
  }
  return kOk;
}

int cmd_ablate(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "ablate";
  const PlanningProblem problem = load_problem(o, manifest);
  SearchConfig config = search_config(o);
  manifest.seed = config.seed;
  manifest.config = to_json(config);
  manifest.config["seeds"] = o.seeds;

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  std::ofstream hs = open_csv(dir / "history_structured.csv");
  std::ofstream hr = open_csv(dir / "history_random.csv");
  std::ofstream sum = open_csv(dir / "summary.csv");
  hs << "seed,generation,best_fitness,mean_fitness\n";
  hr << "seed,generation,best_fitness,mean_fitness\n";
  sum << "seed,structured_final,random_final,delta,structured_plateau_gen,random_plateau_gen,"
         "structured_gens_to_random_final\n";
  for (int s = 0; s < o.seeds; ++s) {
    config.seed = o.seed + static_cast<std::uint64_t>(s);
    const SearchResult a = evolve(problem, config);
    const SearchResult b = random_mutation_baseline(problem, config);
    for (const HistoryRow& r : a.history)
      hs << config.seed << ',' << r.generation << ',' << r.best_fitness << ',' << r.mean_fitness << '\n';
    for (const HistoryRow& r : b.history)
      hr << config.seed << ',' << r.generation << ',' << r.best_fitness << ',' << r.mean_fitness << '\n';
    const double fa = a.history.back().best_fitness;
    const double fb = b.history.back().best_fitness;
    sum << config.seed << ',' << fa << ',' << fb << ',' << fa - fb << ',' << generations_to_plateau(a.history) << ','
        << generations_to_plateau(b.history) << ',' << generations_to_reach(a.history, fb) << '\n';
    std::cout << "seed " << config.seed << ": structured " << fa << " random " << fb << '\n';
  }
  finish(manifest, t0, dir);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Placement planner for model serving on heterogeneous GPU pools"};
  app.require_subcommand(1);
  Options o;

  auto* plan = app.add_subcommand("plan", "Search for a placement");
  add_problem_flags(plan, o);
  add_search_flags(plan, o);

  auto* re = app.add_subcommand("replan", "Re-plan after devices leave, warm-started from a previous plan");
  add_problem_flags(re, o);
  add_search_flags(re, o);
  re->add_option("--plan", o.plan, "Previous plan file")->required();
  re->add_option("--remove", o.remove, "Departed device ids")->delimiter(',')->required();

  auto* sim = app.add_subcommand("simulate", "Simulate a plan and sweep SLO scale and arrival rate");
  add_problem_flags(sim, o);
  sim->add_option("--plan", o.plan, "Plan file")->required();
  sim->add_option("--scales", o.scales, "SLO scales to sweep")->delimiter(',');
  sim->add_option("--rates", o.rates, "Arrival rates to sweep (ascending)")->delimiter(',');

  auto* dp = app.add_subcommand("dp", "Optimal stage layout for one device group and layer partition");
  dp->add_option("--cluster", o.cluster, "Cluster file")->required();
  dp->add_option("--model", o.model, "Model file")->required();
  dp->add_option("--group", o.group, "Group file")->required();
  dp->add_option("--tp-candidates", o.tp_candidates, "Allowed TP degrees")->delimiter(',');

  auto* costs = app.add_subcommand("costs", "Per-stage cost breakdown of a plan as CSV");
  costs->add_option("--cluster", o.cluster, "Cluster file")->required();
  costs->add_option("--model", o.model, "Model file")->required();
  costs->add_option("--plan", o.plan, "Plan file")->required();
  costs->add_option("--workload", o.workload, "Workload file (first task shape is used)");

  for (CLI::App* cmd : {dp, costs}) {
    cmd->add_option("--batch", o.batch, "Batch size");
    cmd->add_option("--input-len", o.input_len, "Prompt tokens");
    cmd->add_option("--output-len", o.output_len, "Generated tokens");
  }

  auto* ablate = app.add_subcommand("ablate", "Structured vs random mutation convergence over paired seeds");
  add_problem_flags(ablate, o);
  add_search_flags(ablate, o);
  ablate->add_option("--seeds", o.seeds, "Number of paired seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (*plan) return cmd_plan(o);
    if (*re) return cmd_replan(o);
    if (*sim) return cmd_simulate(o);
    if (*dp) return cmd_dp(o);
    if (*costs) return cmd_costs(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const InfeasiblePoolError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
