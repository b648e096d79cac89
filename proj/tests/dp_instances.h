// SPDX-License-Identifier: Apache-2.0
//
// Random small layout instances: <= 6 devices, <= 3 buckets, <= 3 stages.
// Links depend only on the (bucket, bucket) pair of their endpoints.

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "hexplan/cluster.h"
#include "hexplan/pipeline_dp.h"

namespace fixtures {

struct DpInstance {
  hexplan::ClusterSpec cluster;
  hexplan::ModelSpec model;
  hexplan::TaskSpec task;
  hexplan::LayerPartition partition;
  std::vector<int> devices;  // the group: every device of the cluster
  std::vector<int> tp_candidates;
};

inline DpInstance random_dp_instance(std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int num_buckets = pick(1, 3);
  std::vector<int> counts(static_cast<std::size_t>(num_buckets));
  int n = 0;
  for (int& c : counts) {
    c = pick(1, 3);
    n += c;
  }
  while (n > 6) {
    for (int& c : counts)
      if (c > 1 && n > 6) {
        --c;
        --n;
      }
  }

  DpInstance x;
  x.model = {pick(3, 12), 256 * pick(1, 4), 2};
  x.task = {pick(1, 4), 16 * pick(1, 8), 8 * pick(1, 8)};
  const double per_layer = 12.0 * x.model.hidden_dim * x.model.hidden_dim * x.model.bytes_per_param;

  std::map<std::string, hexplan::GpuType> types;
  std::vector<hexplan::Device> devices;
  for (int k = 0; k < num_buckets; ++k) {
    const std::string id = "t" + std::to_string(k);
    // Room for roughly 1..L layers on one device, so some layouts overflow.
    const double mem = per_layer * uni(1.0, x.model.num_layers * 0.8) + 1e7;
    types[id] = {id, mem, uni(1e11, 2e12), uni(1e13, 3e14)};
    for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i)
      devices.push_back({static_cast<int>(devices.size()), "m" + std::to_string(k), "r0", id});
  }

  std::vector<std::vector<double>> link_alpha(static_cast<std::size_t>(num_buckets), std::vector<double>(static_cast<std::size_t>(num_buckets)));
  auto link_beta = link_alpha;
  for (auto& row : link_alpha)
    for (double& v : row) v = uni(0.0, 1e-3);
  for (auto& row : link_beta)
    for (double& v : row) v = uni(1e8, 1e11);
  std::vector<std::vector<double>> alpha(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 1.0));
  std::vector<int> bucket_of;
  for (int k = 0; k < num_buckets; ++k)
    for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i) bucket_of.push_back(k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto a = static_cast<std::size_t>(bucket_of[static_cast<std::size_t>(i)]);
      const auto b = static_cast<std::size_t>(bucket_of[static_cast<std::size_t>(j)]);
      alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = link_alpha[a][b];
      beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = link_beta[a][b];
    }
  }
  x.cluster = hexplan::ClusterSpec(types, devices, alpha, beta);

  const int stages = pick(1, std::min(3, n));
  std::vector<int> layers(static_cast<std::size_t>(stages), 1);
  for (int extra = x.model.num_layers - stages; extra > 0; --extra) ++layers[static_cast<std::size_t>(pick(0, stages - 1))];
  x.partition.layers = layers;

  for (int d = 0; d < n; ++d) x.devices.push_back(d);
  static const std::vector<std::vector<int>> kCandidateSets{{1, 2, 3, 4, 5, 6}, {1, 2, 4, 8}, {1, 2}, {2, 3}, {1}};
  x.tp_candidates = kCandidateSets[static_cast<std::size_t>(pick(0, static_cast<int>(kCandidateSets.size()) - 1))];
  return x;
}

}  // namespace fixtures
