// SPDX-License-Identifier: Apache-2.0
//
// Clusters, models and workloads shared by the unit and acceptance tests.
// Every hardware constant used by a test is declared here.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "hexplan/cluster.h"
#include "hexplan/genetic.h"
#include "hexplan/workload.h"

namespace fixtures {

using hexplan::ClusterSpec;
using hexplan::Device;
using hexplan::GpuType;
using hexplan::ModelSpec;
using hexplan::TaskSpec;

struct LinkClass {
  double alpha;
  double beta;
};

/// Links chosen by (same machine, same region) of the endpoints.
inline ClusterSpec build_cluster(const std::map<std::string, GpuType>& types, const std::vector<Device>& devices,
                                 LinkClass machine, LinkClass region, LinkClass wan) {
  const std::size_t n = devices.size();
  std::vector<std::vector<double>> alpha(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> beta(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const LinkClass& c = devices[i].machine_id == devices[j].machine_id ? machine
                           : devices[i].region_id == devices[j].region_id ? region
                                                                          : wan;
      alpha[i][j] = c.alpha;
      beta[i][j] = c.beta;
    }
  }
  return ClusterSpec(types, devices, alpha, beta);
}

inline std::vector<Device> machines(const std::vector<std::tuple<std::string, std::string, std::string, int>>& spec) {
  std::vector<Device> out;
  for (const auto& [machine, region, type, count] : spec)
    for (int i = 0; i < count; ++i) out.push_back({static_cast<int>(out.size()), machine, region, type});
  return out;
}

inline ModelSpec llama70b() { return {80, 8192, 2}; }

// Three machines: 4x 48 GB, 2x 24 GB, 2x 16 GB (decimal gigabytes).
inline ClusterSpec case_study_cluster() {
  std::map<std::string, GpuType> types{
      {"A6000", {"A6000", 48e9, 768e9, 1.5e14}},
      {"A5000", {"A5000", 24e9, 768e9, 1.1e14}},
      {"A4000", {"A4000", 16e9, 448e9, 7.7e13}},
  };
  auto devices = machines({{"m0", "r0", "A6000", 4}, {"m1", "r0", "A5000", 2}, {"m2", "r0", "A4000", 2}});
  return build_cluster(types, devices, {1e-5, 6e10}, {1e-4, 1.25e9}, {1e-2, 1.25e8});
}

inline TaskSpec case_study_task() { return {1, 128, 64}; }

// Two regions of two machines each; 100 Gbps inside a region, 1 Gbps between.
inline ClusterSpec two_region_cluster() {
  std::map<std::string, GpuType> types{
      {"L", {"L", 1.6e9, 9e11, 1e14}},
      {"M", {"M", 1.2e9, 6e11, 6e13}},
      {"S", {"S", 0.8e9, 4e11, 4e13}},
  };
  auto devices = machines({{"a0", "east", "L", 4}, {"a1", "east", "S", 4}, {"b0", "west", "L", 4}, {"b1", "west", "M", 4}});
  return build_cluster(types, devices, {5e-6, 1e11}, {1e-4, 12.5e9}, {5e-3, 1.25e8});
}

// 12 H^2 B L = 2.416e9 bytes: two L-class GPUs hold one copy.
inline ModelSpec small_model() { return {24, 2048, 2}; }

inline hexplan::WorkloadSpec ga_workload(std::uint64_t seed = 7) {
  hexplan::WorkloadSpec w;
  w.rate = 30.0;
  w.horizon_requests = 300;
  w.seed = seed;
  w.tasks = {{{1, 128, 64}, 3.0}, {{1, 256, 32}, 1.0}};
  return w;
}

inline hexplan::SloConfig ga_slo() {
  hexplan::SloConfig s;
  s.default_baseline = 0.12;
  s.slo_scale = 2.0;
  s.target = 0.99;
  return s;
}

inline hexplan::PlanningProblem ga_problem(std::uint64_t workload_seed = 7) {
  return {two_region_cluster(), small_model(), ga_workload(workload_seed), ga_slo()};
}

}  // namespace fixtures
