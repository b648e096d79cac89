// SPDX-License-Identifier: Apache-2.0

#include "hexplan/assignment.h"

#include <set>
#include <sstream>

namespace hexplan {

std::string compact_notation(const Pipeline& pipeline) {
  std::ostringstream os;
  os << '[';
  for (std::size_t j = 0; j < pipeline.size(); ++j) {
    if (j) os << ',';
    os << pipeline[j].tp_degree();
  }
  os << ']';
  return os.str();
}

ValidationReport validate_assignment(const GlobalAssignment& assignment, const ModelSpec& model,
                                     const std::vector<TaskSpec>& tasks, const ClusterSpec& cluster) {
  ValidationReport report;
  auto fail = [&report](std::string msg) {
    report.ok = false;
    report.problems.push_back(std::move(msg));
  };

  std::set<int> used;
  for (std::size_t i = 0; i < assignment.pipelines.size(); ++i) {
    const Pipeline& p = assignment.pipelines[i];
    const std::string where = "pipeline " + std::to_string(i);
    if (p.empty()) {
      fail(where + ": no stages");
      continue;
    }
    long layers = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const StageAssignment& st = p[j];
      const std::string at = where + " stage " + std::to_string(j);
      if (st.devices.empty()) {
        fail(at + ": no devices");
        continue;
      }
      if (st.num_layers < 1) fail(at + ": fewer than one layer");
      layers += st.num_layers;
      bool in_range = true;
      for (int d : st.devices) {
        if (d < 0 || d >= cluster.num_devices()) {
          fail(at + ": unknown device " + std::to_string(d));
          in_range = false;
          continue;
        }
        if (!used.insert(d).second) fail(at + ": device " + std::to_string(d) + " already assigned");
      }
      if (!in_range) continue;
      const Device& first = cluster.device(st.devices.front());
      for (int d : st.devices) {
        const Device& dev = cluster.device(d);
        if (dev.machine_id != first.machine_id || dev.type_id != first.type_id)
          fail(at + ": mixes machines or GPU types");
      }
      // Footprint recomputed here rather than via the cost model.
      const double h = model.hidden_dim, b_type = model.bytes_per_param, n = st.tp_degree();
      for (const TaskSpec& t : tasks) {
        const double tokens = static_cast<double>(t.input_len) + t.output_len;
        const double bytes = (12.0 * h * h * b_type + 2.0 * t.batch_size * tokens * h * b_type) / n * st.num_layers +
                             4.0 * t.batch_size * tokens * h * b_type;
        for (int d : st.devices) {
          if (bytes > cluster.gpu(d).mem_limit * (1.0 + 1e-12))
            fail(at + ": device " + std::to_string(d) + " exceeds its memory limit");
        }
      }
    }
    if (layers != model.num_layers) fail(where + ": layers sum to " + std::to_string(layers));
  }
  return report;
}

}  // namespace hexplan
