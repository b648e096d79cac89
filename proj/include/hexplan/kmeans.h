// SPDX-License-Identifier: Apache-2.0
//
// Lloyd's k-means with k-means++ seeding and an Elbow rule for picking k,
// used to group devices by how cheaply they can talk to each other.

#pragma once

#include <cstdint>
#include <vector>

#include "hexplan/cluster.h"

namespace hexplan {

using Points = std::vector<std::vector<double>>;

struct KMeansResult {
  std::vector<int> labels;
  Points centroids;
  double inertia = 0.0;  // sum of squared distances to assigned centroid
};

/// Best of `restarts` seeded runs. Labels are renumbered in order of first
/// appearance so equal partitions compare equal.
KMeansResult kmeans(const Points& points, int k, std::uint64_t seed, int restarts = 8, int max_iters = 100);

/// Sum of squared distances of each point to the mean of its label.
double partition_inertia(const Points& points, const std::vector<int>& labels, int k);

/// `inertia[i]` is the inertia for k = i + 1. Returns the k maximizing the
/// second difference I(k-1) - 2 I(k) + I(k+1); 1 when the curve is flat.
/// Ties go to the smaller k.
int elbow_k(const std::vector<double>& inertia);

/// Row d: min-max normalized latency plus gamma times min-max normalized
/// inverse bandwidth, over off-diagonal entries; the diagonal is 0.
Points device_features(const ClusterSpec& cluster, double gamma = 1.0);

}  // namespace hexplan
