// SPDX-License-Identifier: Apache-2.0
//
// Heterogeneous device pool, interconnect matrices, served model and request
// shapes. Devices are grouped into (machine, type) buckets; every planner
// component addresses GPU multisets through per-bucket counts (TypeVector).

#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace hexplan {

struct GpuType {
  std::string type_id;
  double mem_limit = 0.0;      // bytes
  double mem_bandwidth = 0.0;  // bytes/s
  double compute = 0.0;        // FLOP/s
};

struct Device {
  int device_id = 0;
  std::string machine_id;
  std::string region_id;
  std::string type_id;
};

/// Devices sharing one machine and one GPU type.
struct Bucket {
  std::string machine_id;
  std::string region_id;
  std::string type_id;
  std::vector<int> devices;  // ascending device ids

  int count() const { return static_cast<int>(devices.size()); }
};

/// Multiset of GPUs expressed as a count per bucket.
class TypeVector {
 public:
  TypeVector() = default;
  explicit TypeVector(std::size_t num_buckets) : counts_(num_buckets, 0) {}
  explicit TypeVector(std::vector<int> counts) : counts_(std::move(counts)) {}

  std::size_t size() const { return counts_.size(); }
  int operator[](std::size_t k) const { return counts_[k]; }
  int& operator[](std::size_t k) { return counts_[k]; }
  const std::vector<int>& counts() const { return counts_; }

  int total() const;
  int nonzero_buckets() const;
  bool empty() const { return total() == 0; }
  /// Componentwise <=.
  bool fits_within(const TypeVector& capacity) const;

  TypeVector& operator+=(const TypeVector& other);
  TypeVector& operator-=(const TypeVector& other);
  friend TypeVector operator+(TypeVector a, const TypeVector& b) { return a += b; }
  friend TypeVector operator-(TypeVector a, const TypeVector& b) { return a -= b; }

  auto operator<=>(const TypeVector&) const = default;

 private:
  std::vector<int> counts_;
};

std::string to_string(const TypeVector& tv);

struct ModelSpec {
  int num_layers = 0;       // L
  int hidden_dim = 0;       // H
  int bytes_per_param = 2;  // B_type

  /// 12 H^2 B_type per layer times L: bytes of one full parameter copy.
  double parameter_bytes() const;
  void validate() const;
};

struct TaskSpec {
  int batch_size = 1;
  int input_len = 1;
  int output_len = 1;

  void validate() const;
  auto operator<=>(const TaskSpec&) const = default;
};

class ClusterSpec {
 public:
  ClusterSpec() = default;
  /// Validates and derives buckets. Throws ParseError on any violated invariant.
  ClusterSpec(std::map<std::string, GpuType> types, std::vector<Device> devices,
              std::vector<std::vector<double>> alpha, std::vector<std::vector<double>> beta);

  int num_devices() const { return static_cast<int>(devices_.size()); }
  int num_buckets() const { return static_cast<int>(buckets_.size()); }

  const Device& device(int id) const;
  const GpuType& gpu(int id) const;
  const std::map<std::string, GpuType>& types() const { return types_; }
  const std::vector<Device>& devices() const { return devices_; }

  double alpha(int from, int to) const { return alpha_[index(from, to)]; }
  double beta(int from, int to) const { return beta_[index(from, to)]; }

  const Bucket& bucket(int k) const { return buckets_.at(static_cast<std::size_t>(k)); }
  const std::vector<Bucket>& buckets() const { return buckets_; }
  int bucket_of(int device_id) const;
  double bucket_mem_limit(int k) const;
  /// Bucket counts #_k as a TypeVector.
  TypeVector capacity() const;
  /// Per-bucket counts of an arbitrary device list.
  TypeVector type_vector_of(const std::vector<int>& device_ids) const;
  /// Sum of M_d over the devices a TypeVector denotes.
  double total_memory(const TypeVector& tv) const;

  /// Cluster with the given devices removed; surviving devices are renumbered
  /// densely in original order. `old_to_new[old] == -1` for removed devices.
  ClusterSpec without(const std::vector<int>& departed, std::vector<int>* old_to_new = nullptr) const;

  nlohmann::json to_json() const;
  static ClusterSpec from_json(const nlohmann::json& j);

  bool operator==(const ClusterSpec& other) const;

 private:
  std::size_t index(int from, int to) const {
    return static_cast<std::size_t>(from) * devices_.size() + static_cast<std::size_t>(to);
  }

  std::map<std::string, GpuType> types_;
  std::vector<Device> devices_;
  std::vector<double> alpha_;  // seconds, row-major N x N
  std::vector<double> beta_;   // bytes/s, row-major N x N
  std::vector<Bucket> buckets_;
  std::vector<int> bucket_of_;
};

ClusterSpec load_cluster(const std::filesystem::path& path);
ModelSpec load_model(const std::filesystem::path& path);

ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelSpec& m);
TaskSpec task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& t);

/// Parses a JSON file, mapping I/O and syntax failures to ParseError.
nlohmann::json read_json_file(const std::filesystem::path& path);

inline constexpr int kSchemaVersion = 1;
/// Throws ParseError unless `j.schema_version` is present and supported.
void check_schema_version(const nlohmann::json& j, const std::string& what);

}  // namespace hexplan
