// SPDX-License-Identifier: Apache-2.0

#include "hexplan/kmeans.h"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "hexplan/rng.h"

namespace hexplan {
namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::vector<int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l >= static_cast<int>(remap.size())) remap.resize(static_cast<std::size_t>(l) + 1, -1);
    if (remap[static_cast<std::size_t>(l)] < 0) {
      remap[static_cast<std::size_t>(l)] =
          static_cast<int>(std::count_if(remap.begin(), remap.end(), [](int v) { return v >= 0; }));
    }
    out[i] = remap[static_cast<std::size_t>(l)];
  }
  return out;
}

Points seed_plus_plus(const Points& pts, int k, Rng& rng) {
  const std::size_t n = pts.size();
  Points centers;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centers.push_back(pts[first(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d2[i] = std::min(d2[i], sq_dist(pts[i], c));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      pick = first(rng);
    }
    centers.push_back(pts[pick]);
  }
  return centers;
}

KMeansResult lloyd(const Points& pts, Points centers, int max_iters) {
  const std::size_t n = pts.size();
  const std::size_t k = centers.size();
  const std::size_t dim = pts.front().size();
  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(pts[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    // Empty clusters steal the point farthest from its centroid.
    std::vector<int> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(labels[i])] <= 1) continue;
        const double d = sq_dist(pts[i], centers[static_cast<std::size_t>(labels[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0) break;
      --sizes[static_cast<std::size_t>(labels[far])];
      labels[far] = static_cast<int>(c);
      sizes[c] = 1;
      changed = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> mean(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == static_cast<int>(c))
          for (std::size_t x = 0; x < dim; ++x) mean[x] += pts[i][x];
      for (double& v : mean) v /= std::max(sizes[c], 1);
      centers[c] = std::move(mean);
    }
    if (!changed) break;
  }
  KMeansResult r;
  r.labels = canonical_labels(labels);
  r.inertia = partition_inertia(pts, r.labels, static_cast<int>(k));
  r.centroids.assign(k, std::vector<double>(dim, 0.0));
  std::vector<int> sizes(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = static_cast<std::size_t>(r.labels[i]);
    ++sizes[l];
    for (std::size_t x = 0; x < dim; ++x) r.centroids[l][x] += pts[i][x];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : r.centroids[c]) v /= std::max(sizes[c], 1);
  return r;
}

}  // namespace

double partition_inertia(const Points& points, const std::vector<int>& labels, int k) {
  if (points.empty()) return 0.0;
  const std::size_t dim = points.front().size();
  Points means(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    ++sizes[l];
    for (std::size_t x = 0; x < dim; ++x) means[l][x] += points[i][x];
  }
  for (std::size_t c = 0; c < means.size(); ++c)
    for (double& v : means[c]) v /= std::max(sizes[c], 1);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += sq_dist(points[i], means[static_cast<std::size_t>(labels[i])]);
  return total;
}

KMeansResult kmeans(const Points& points, int k, std::uint64_t seed, int restarts, int max_iters) {
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (k < 1 || k > static_cast<int>(points.size())) throw std::invalid_argument("kmeans: k out of range");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r)}));
    KMeansResult run = lloyd(points, seed_plus_plus(points, k, rng), max_iters);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

int elbow_k(const std::vector<double>& inertia) {
  if (inertia.size() < 3) return 1;
  // Curvature below this fraction of I(1) counts as flat.
  const double flat = 1e-9 * std::max(inertia.front(), std::numeric_limits<double>::min());
  int best_k = 1;
  double best = flat;
  for (std::size_t i = 1; i + 1 < inertia.size(); ++i) {
    const double d2 = inertia[i - 1] - 2.0 * inertia[i] + inertia[i + 1];
    if (d2 > best) {
      best = d2;
      best_k = static_cast<int>(i) + 1;
    }
  }
  return best_k;
}

Points device_features(const ClusterSpec& cluster, double gamma) {
  const int n = cluster.num_devices();
  double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo;
  double s_lo = a_lo, s_hi = -a_lo;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      a_lo = std::min(a_lo, cluster.alpha(i, j));
      a_hi = std::max(a_hi, cluster.alpha(i, j));
      const double slow = 1.0 / cluster.beta(i, j);
      s_lo = std::min(s_lo, slow);
      s_hi = std::max(s_hi, slow);
    }
  }
  auto norm = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
  Points pts(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          norm(cluster.alpha(i, j), a_lo, a_hi) + gamma * norm(1.0 / cluster.beta(i, j), s_lo, s_hi);
    }
  }
  return pts;
}

}  // namespace hexplan
