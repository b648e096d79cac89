// SPDX-License-Identifier: Apache-2.0

#include "hexplan/cluster.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "hexplan/errors.h"

namespace hexplan {

using nlohmann::json;

int TypeVector::total() const {
  int sum = 0;
  for (int c : counts_) sum += c;
  return sum;
}

int TypeVector::nonzero_buckets() const {
  return static_cast<int>(std::count_if(counts_.begin(), counts_.end(), [](int c) { return c > 0; }));
}

bool TypeVector::fits_within(const TypeVector& capacity) const {
  if (capacity.size() != size()) return false;
  for (std::size_t k = 0; k < size(); ++k) {
    if (counts_[k] < 0 || counts_[k] > capacity[k]) return false;
  }
  return true;
}

TypeVector& TypeVector::operator+=(const TypeVector& other) {
  if (other.size() != size()) throw std::invalid_argument("TypeVector size mismatch");
  for (std::size_t k = 0; k < size(); ++k) counts_[k] += other[k];
  return *this;
}

TypeVector& TypeVector::operator-=(const TypeVector& other) {
  if (other.size() != size()) throw std::invalid_argument("TypeVector size mismatch");
  for (std::size_t k = 0; k < size(); ++k) counts_[k] -= other[k];
  return *this;
}

std::string to_string(const TypeVector& tv) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < tv.size(); ++k) {
    if (k) os << ',';
    os << tv[k];
  }
  os << ']';
  return os.str();
}

double ModelSpec::parameter_bytes() const {
  const double h = hidden_dim;
  return 12.0 * h * h * bytes_per_param * num_layers;
}

void ModelSpec::validate() const {
  if (num_layers < 1) throw ParseError("model: num_layers must be >= 1");
  if (hidden_dim < 1) throw ParseError("model: hidden_dim must be >= 1");
  if (bytes_per_param != 1 && bytes_per_param != 2 && bytes_per_param != 4)
    throw ParseError("model: bytes_per_param must be 1, 2 or 4");
}

void TaskSpec::validate() const {
  if (batch_size < 1 || input_len < 1 || output_len < 1)
    throw ParseError("task: batch_size, input_len and output_len must be >= 1");
}

namespace {

std::vector<double> flatten_matrix(const std::vector<std::vector<double>>& m, std::size_t n,
                                   const char* name) {
  if (m.size() != n) {
    throw ParseError(std::string(name) + ": expected " + std::to_string(n) + " rows, got " +
                     std::to_string(m.size()));
  }
  std::vector<double> flat;
  flat.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    if (m[r].size() != n) {
      throw ParseError(std::string(name) + ": row " + std::to_string(r) + " has " +
                       std::to_string(m[r].size()) + " columns, expected " + std::to_string(n));
    }
    flat.insert(flat.end(), m[r].begin(), m[r].end());
  }
  return flat;
}

}  // namespace

ClusterSpec::ClusterSpec(std::map<std::string, GpuType> types, std::vector<Device> devices,
                         std::vector<std::vector<double>> alpha,
                         std::vector<std::vector<double>> beta)
    : types_(std::move(types)), devices_(std::move(devices)) {
  const std::size_t n = devices_.size();
  if (n == 0) throw ParseError("cluster: no devices");

  for (auto& [id, t] : types_) {
    t.type_id = id;
    if (!(t.mem_limit > 0) || !(t.mem_bandwidth > 0) || !(t.compute > 0))
      throw ParseError("cluster: type '" + id + "' needs positive memory, bandwidth and compute");
  }

  // Devices may be listed in any order; ids must be exactly 0..N-1.
  std::sort(devices_.begin(), devices_.end(),
            [](const Device& a, const Device& b) { return a.device_id < b.device_id; });
  std::map<std::string, std::string> machine_region;
  for (std::size_t i = 0; i < n; ++i) {
    const Device& d = devices_[i];
    if (i > 0 && devices_[i - 1].device_id == d.device_id)
      throw ParseError("cluster: duplicate device id " + std::to_string(d.device_id));
    if (d.device_id != static_cast<int>(i))
      throw ParseError("cluster: device ids must be 0..N-1, missing " + std::to_string(i));
    if (!types_.contains(d.type_id))
      throw ParseError("cluster: device " + std::to_string(d.device_id) + " has unknown type '" +
                       d.type_id + "'");
    auto [it, inserted] = machine_region.emplace(d.machine_id, d.region_id);
    if (!inserted && it->second != d.region_id)
      throw ParseError("cluster: machine '" + d.machine_id + "' spans several regions");
  }

  alpha_ = flatten_matrix(alpha, n, "alpha_s");
  beta_ = flatten_matrix(beta, n, "beta_Bps");
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (r == c) continue;
      if (!(alpha_[r * n + c] >= 0))
        throw ParseError("cluster: negative latency at (" + std::to_string(r) + "," + std::to_string(c) + ")");
      if (!(beta_[r * n + c] > 0))
        throw ParseError("cluster: non-positive bandwidth at (" + std::to_string(r) + "," +
                         std::to_string(c) + ")");
    }
  }

  // Buckets in order of first appearance by device id.
  std::map<std::pair<std::string, std::string>, int> bucket_index;
  bucket_of_.assign(n, -1);
  for (const Device& d : devices_) {
    auto key = std::make_pair(d.machine_id, d.type_id);
    auto [it, inserted] = bucket_index.emplace(key, static_cast<int>(buckets_.size()));
    if (inserted) buckets_.push_back(Bucket{d.machine_id, d.region_id, d.type_id, {}});
    buckets_[static_cast<std::size_t>(it->second)].devices.push_back(d.device_id);
    bucket_of_[static_cast<std::size_t>(d.device_id)] = it->second;
  }
}

const Device& ClusterSpec::device(int id) const {
  if (id < 0 || id >= num_devices()) throw std::out_of_range("unknown device id " + std::to_string(id));
  return devices_[static_cast<std::size_t>(id)];
}

const GpuType& ClusterSpec::gpu(int id) const { return types_.at(device(id).type_id); }

int ClusterSpec::bucket_of(int device_id) const {
  if (device_id < 0 || device_id >= num_devices())
    throw std::out_of_range("unknown device id " + std::to_string(device_id));
  return bucket_of_[static_cast<std::size_t>(device_id)];
}

double ClusterSpec::bucket_mem_limit(int k) const { return types_.at(bucket(k).type_id).mem_limit; }

TypeVector ClusterSpec::capacity() const {
  TypeVector tv(buckets_.size());
  for (std::size_t k = 0; k < buckets_.size(); ++k) tv[k] = buckets_[k].count();
  return tv;
}

TypeVector ClusterSpec::type_vector_of(const std::vector<int>& device_ids) const {
  TypeVector tv(buckets_.size());
  for (int d : device_ids) ++tv[static_cast<std::size_t>(bucket_of(d))];
  return tv;
}

double ClusterSpec::total_memory(const TypeVector& tv) const {
  double sum = 0.0;
  for (std::size_t k = 0; k < tv.size(); ++k) sum += tv[k] * bucket_mem_limit(static_cast<int>(k));
  return sum;
}

ClusterSpec ClusterSpec::without(const std::vector<int>& departed, std::vector<int>* old_to_new) const {
  std::set<int> gone(departed.begin(), departed.end());
  for (int d : gone) (void)device(d);
  std::vector<int> map(devices_.size(), -1);
  std::vector<Device> kept;
  for (const Device& d : devices_) {
    if (gone.contains(d.device_id)) continue;
    map[static_cast<std::size_t>(d.device_id)] = static_cast<int>(kept.size());
    Device copy = d;
    copy.device_id = static_cast<int>(kept.size());
    kept.push_back(copy);
  }
  if (kept.empty()) throw InfeasiblePoolError("cluster: every device departed");
  const std::size_t m = kept.size();
  std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0)), b(m, std::vector<double>(m, 0.0));
  for (const Device& from : devices_) {
    const int nf = map[static_cast<std::size_t>(from.device_id)];
    if (nf < 0) continue;
    for (const Device& to : devices_) {
      const int nt = map[static_cast<std::size_t>(to.device_id)];
      if (nt < 0) continue;
      a[static_cast<std::size_t>(nf)][static_cast<std::size_t>(nt)] = alpha(from.device_id, to.device_id);
      b[static_cast<std::size_t>(nf)][static_cast<std::size_t>(nt)] = beta(from.device_id, to.device_id);
    }
  }
  if (old_to_new) *old_to_new = map;
  return ClusterSpec(types_, std::move(kept), std::move(a), std::move(b));
}

json ClusterSpec::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["devices"] = json::array();
  for (const Device& d : devices_) {
    j["devices"].push_back({{"id", d.device_id}, {"machine", d.machine_id}, {"region", d.region_id}, {"type", d.type_id}});
  }
  j["types"] = json::object();
  for (const auto& [id, t] : types_) {
    j["types"][id] = {{"mem_limit_bytes", t.mem_limit}, {"mem_bandwidth_Bps", t.mem_bandwidth}, {"compute_flops", t.compute}};
  }
  const std::size_t n = devices_.size();
  json a = json::array(), b = json::array();
  for (std::size_t r = 0; r < n; ++r) {
    a.push_back(std::vector<double>(alpha_.begin() + static_cast<std::ptrdiff_t>(r * n),
                                    alpha_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
    b.push_back(std::vector<double>(beta_.begin() + static_cast<std::ptrdiff_t>(r * n),
                                    beta_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
  }
  j["alpha_s"] = std::move(a);
  j["beta_Bps"] = std::move(b);
  return j;
}

ClusterSpec ClusterSpec::from_json(const json& j) {
  try {
    check_schema_version(j, "cluster");
    std::map<std::string, GpuType> types;
    for (const auto& [id, t] : j.at("types").items()) {
      types[id] = GpuType{id, t.at("mem_limit_bytes").get<double>(), t.at("mem_bandwidth_Bps").get<double>(),
                          t.at("compute_flops").get<double>()};
    }
    std::vector<Device> devices;
    for (const auto& d : j.at("devices")) {
      devices.push_back(Device{d.at("id").get<int>(), d.at("machine").get<std::string>(),
                               d.value("region", std::string{}), d.at("type").get<std::string>()});
    }
    return ClusterSpec(std::move(types), std::move(devices),
                       j.at("alpha_s").get<std::vector<std::vector<double>>>(),
                       j.at("beta_Bps").get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("cluster: ") + e.what());
  }
}

bool ClusterSpec::operator==(const ClusterSpec& other) const {
  auto same_type = [](const GpuType& a, const GpuType& b) {
    return a.type_id == b.type_id && a.mem_limit == b.mem_limit && a.mem_bandwidth == b.mem_bandwidth &&
           a.compute == b.compute;
  };
  if (types_.size() != other.types_.size()) return false;
  for (const auto& [id, t] : types_) {
    auto it = other.types_.find(id);
    if (it == other.types_.end() || !same_type(t, it->second)) return false;
  }
  if (devices_.size() != other.devices_.size()) return false;
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    const Device& a = devices_[i];
    const Device& b = other.devices_[i];
    if (a.device_id != b.device_id || a.machine_id != b.machine_id || a.region_id != b.region_id ||
        a.type_id != b.type_id)
      return false;
  }
  return alpha_ == other.alpha_ && beta_ == other.beta_ && bucket_of_ == other.bucket_of_;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void check_schema_version(const json& j, const std::string& what) {
  if (!j.is_object()) throw ParseError(what + ": expected a JSON object");
  if (!j.contains("schema_version")) throw ParseError(what + ": missing schema_version");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kSchemaVersion)
    throw ParseError(what + ": unsupported schema_version");
}

ClusterSpec load_cluster(const std::filesystem::path& path) { return ClusterSpec::from_json(read_json_file(path)); }

ModelSpec model_from_json(const json& j) {
  try {
    check_schema_version(j, "model");
    ModelSpec m{j.at("num_layers").get<int>(), j.at("hidden_dim").get<int>(), j.at("bytes_per_param").get<int>()};
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

json to_json(const ModelSpec& m) {
  return {{"schema_version", kSchemaVersion},
          {"num_layers", m.num_layers},
          {"hidden_dim", m.hidden_dim},
          {"bytes_per_param", m.bytes_per_param}};
}

ModelSpec load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

TaskSpec task_from_json(const json& j) {
  try {
    TaskSpec t{j.at("batch_size").get<int>(), j.at("input_len").get<int>(), j.at("output_len").get<int>()};
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("task: ") + e.what());
  }
}

json to_json(const TaskSpec& t) {
  return {{"batch_size", t.batch_size}, {"input_len", t.input_len}, {"output_len", t.output_len}};
}

}  // namespace hexplan
