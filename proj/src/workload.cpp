// SPDX-License-Identifier: Apache-2.0

#include "hexplan/workload.h"

#include <algorithm>
#include <deque>
#include <map>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "hexplan/errors.h"
#include "hexplan/rng.h"

namespace hexplan {

using nlohmann::json;

void WorkloadSpec::validate() const {
  if (!(rate > 0)) throw ParseError("workload: rate must be > 0");
  if (!horizon_requests && !horizon_seconds) throw ParseError("workload: needs horizon_requests or horizon_seconds");
  if (horizon_requests && *horizon_requests <= 0) throw ParseError("workload: horizon_requests must be > 0");
  if (horizon_seconds && !(*horizon_seconds > 0)) throw ParseError("workload: horizon_seconds must be > 0");
  if (tasks.empty()) throw ParseError("workload: no task templates");
  for (const TaskTemplate& t : tasks) {
    t.task.validate();
    if (!(t.weight > 0)) throw ParseError("workload: task weights must be > 0");
  }
}

double SloConfig::baseline_for(const TaskSpec& task) const {
  for (const auto& [t, latency] : per_task)
    if (t == task) return latency;
  if (!(default_baseline > 0)) throw std::invalid_argument("slo: no baseline latency for task shape");
  return default_baseline;
}

void SloConfig::validate() const {
  if (!(slo_scale > 0)) throw ParseError("slo: slo_scale must be > 0");
  if (!(target > 0) || target > 1) throw ParseError("slo: target must be in (0, 1]");
  if (per_task.empty() && !(default_baseline > 0)) throw ParseError("slo: baseline latency must be > 0");
  for (const auto& entry : per_task)
    if (!(entry.second > 0)) throw ParseError("slo: baseline latency must be > 0");
}

std::vector<Request> generate_workload(const WorkloadSpec& spec) {
  spec.validate();
  Rng arrivals(derive_seed(spec.seed, {1}));
  Rng shapes(derive_seed(spec.seed, {2}));
  std::exponential_distribution<double> unit_exp(1.0);
  std::vector<double> weights;
  for (const TaskTemplate& t : spec.tasks) weights.push_back(t.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());

  std::vector<Request> out;
  double now = 0.0;
  for (int id = 0;; ++id) {
    if (spec.horizon_requests && id >= *spec.horizon_requests) break;
    now += unit_exp(arrivals) / spec.rate;
    if (spec.horizon_seconds && now > *spec.horizon_seconds) break;
    const std::size_t which = spec.tasks.size() == 1 ? 0 : pick(shapes);
    out.push_back(Request{id, now, spec.tasks[which].task});
  }
  return out;
}

namespace {

class ServiceTimes {
 public:
  ServiceTimes(const GlobalAssignment& a, const ModelSpec& m, const ClusterSpec& c) : a_(a), m_(m), c_(c) {}

  double get(std::size_t replica, const TaskSpec& task) {
    auto key = std::make_pair(replica, task);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double t = pipeline_cost(a_.pipelines[replica], m_, task, c_).total;
    cache_.emplace(key, t);
    return t;
  }

 private:
  const GlobalAssignment& a_;
  const ModelSpec& m_;
  const ClusterSpec& c_;
  std::map<std::pair<std::size_t, TaskSpec>, double> cache_;
};

enum class EventKind { kDeparture = 0, kArrival = 1 };

struct Event {
  double time;
  EventKind kind;
  std::size_t index;  // request index for arrivals, replica for departures

  bool operator>(const Event& o) const {
    return std::tie(time, kind, index) > std::tie(o.time, o.kind, o.index);
  }
};

struct Replica {
  bool busy = false;
  double drain = 0.0;  // predicted completion of the last routed request
  std::deque<std::size_t> queue;
  std::size_t serving = 0;
};

}  // namespace

SloReport simulate(const GlobalAssignment& assignment, const std::vector<Request>& requests, const SloConfig& slo,
                   const ModelSpec& model, const ClusterSpec& cluster) {
  if (assignment.pipelines.empty()) throw std::invalid_argument("simulate: assignment has no pipelines");
  ServiceTimes service(assignment, model, cluster);
  std::vector<Replica> replicas(assignment.pipelines.size());
  std::vector<RequestRecord> records(requests.size());
  std::vector<double> service_of(requests.size(), 0.0);

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  for (std::size_t i = 0; i < requests.size(); ++i) events.push({requests[i].arrival, EventKind::kArrival, i});

  auto begin_service = [&](std::size_t r, std::size_t req, double now) {
    Replica& rep = replicas[r];
    rep.busy = true;
    rep.serving = req;
    records[req].start = now;
    events.push({now + service_of[req], EventKind::kDeparture, r});
  };

  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    if (ev.kind == EventKind::kArrival) {
      const Request& q = requests[ev.index];
      std::size_t best = 0;
      double best_finish = 0.0;
      double best_service = 0.0;
      for (std::size_t r = 0; r < replicas.size(); ++r) {
        const double s = service.get(r, q.task);
        const double finish = std::max(ev.time, replicas[r].drain) + s;
        if (r == 0 || finish < best_finish) {
          best = r;
          best_finish = finish;
          best_service = s;
        }
      }
      Replica& rep = replicas[best];
      rep.drain = best_finish;
      service_of[ev.index] = best_service;
      RequestRecord& rec = records[ev.index];
      rec.id = q.id;
      rec.arrival = q.arrival;
      rec.replica = static_cast<int>(best);
      rec.baseline = slo.baseline_for(q.task);
      if (rep.busy) {
        rep.queue.push_back(ev.index);
      } else {
        begin_service(best, ev.index, ev.time);
      }
    } else {
      Replica& rep = replicas[ev.index];
      records[rep.serving].finish = ev.time;
      rep.busy = false;
      if (!rep.queue.empty()) {
        const std::size_t next = rep.queue.front();
        rep.queue.pop_front();
        begin_service(ev.index, next, ev.time);
      }
    }
  }

  SloReport report;
  std::size_t met = 0;
  for (RequestRecord& rec : records) {
    rec.met = rec.latency() <= slo.slo_scale * rec.baseline;
    met += rec.met ? 1 : 0;
  }
  report.attainment = records.empty() ? 1.0 : static_cast<double>(met) / static_cast<double>(records.size());
  report.per_request = std::move(records);
  return report;
}

double attainment_at_scale(const std::vector<RequestRecord>& records, double scale) {
  if (records.empty()) return 1.0;
  std::size_t met = 0;
  for (const RequestRecord& r : records) met += r.latency() <= scale * r.baseline ? 1 : 0;
  return static_cast<double>(met) / static_cast<double>(records.size());
}

RateSweep sweep_rate(const GlobalAssignment& assignment, const WorkloadSpec& workload, const SloConfig& slo,
                     const std::vector<double>& rates, const ModelSpec& model, const ClusterSpec& cluster) {
  if (!std::is_sorted(rates.begin(), rates.end())) throw std::invalid_argument("sweep_rate: rates must be ascending");
  RateSweep sweep;
  for (double rate : rates) {
    WorkloadSpec w = workload;
    w.rate = rate;
    const SloReport r = simulate(assignment, generate_workload(w), slo, model, cluster);
    sweep.rows.push_back({rate, r.attainment});
    if (r.attainment >= slo.target) sweep.peak_rate = rate;
  }
  return sweep;
}

std::vector<SweepRow> sweep_slo_scale(const GlobalAssignment& assignment, const std::vector<Request>& requests,
                                      const SloConfig& slo, const std::vector<double>& scales,
                                      const ModelSpec& model, const ClusterSpec& cluster) {
  const SloReport r = simulate(assignment, requests, slo, model, cluster);
  std::vector<SweepRow> rows;
  for (double s : scales) {
    if (!(s > 0)) throw std::invalid_argument("sweep_slo_scale: scales must be positive");
    rows.push_back({s, attainment_at_scale(r.per_request, s)});
  }
  return rows;
}

double reference_latency(const Pipeline& reference, const ModelSpec& model, const TaskSpec& task,
                         const ClusterSpec& cluster) {
  return pipeline_cost(reference, model, task, cluster).total;
}

WorkloadSpec workload_from_json(const json& j) {
  try {
    check_schema_version(j, "workload");
    WorkloadSpec w;
    w.rate = j.at("rate").get<double>();
    if (j.contains("horizon_requests")) w.horizon_requests = j["horizon_requests"].get<int>();
    if (j.contains("horizon_seconds")) w.horizon_seconds = j["horizon_seconds"].get<double>();
    w.seed = j.value("seed", std::uint64_t{0});
    for (const auto& t : j.at("tasks")) w.tasks.push_back({task_from_json(t), t.value("weight", 1.0)});
    w.validate();
    return w;
  } catch (const json::exception& e) {
    throw ParseError(std::string("workload: ") + e.what());
  }
}

json to_json(const WorkloadSpec& w) {
  json j{{"schema_version", kSchemaVersion}, {"rate", w.rate}, {"seed", w.seed}, {"tasks", json::array()}};
  if (w.horizon_requests) j["horizon_requests"] = *w.horizon_requests;
  if (w.horizon_seconds) j["horizon_seconds"] = *w.horizon_seconds;
  for (const TaskTemplate& t : w.tasks) {
    json tj = to_json(t.task);
    tj["weight"] = t.weight;
    j["tasks"].push_back(tj);
  }
  return j;
}

SloConfig slo_from_json(const json& j) {
  try {
    check_schema_version(j, "slo");
    SloConfig s;
    s.default_baseline = j.value("baseline_latency_s", 0.0);
    s.slo_scale = j.value("slo_scale", 1.0);
    s.target = j.value("target", 0.99);
    if (j.contains("per_task")) {
      for (const auto& e : j["per_task"]) s.per_task.emplace_back(task_from_json(e), e.at("baseline_latency_s").get<double>());
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("slo: ") + e.what());
  }
}

json to_json(const SloConfig& s) {
  json j{{"schema_version", kSchemaVersion},
         {"baseline_latency_s", s.default_baseline},
         {"slo_scale", s.slo_scale},
         {"target", s.target},
         {"per_task", json::array()}};
  for (const auto& [t, latency] : s.per_task) {
    json e = to_json(t);
    e["baseline_latency_s"] = latency;
    j["per_task"].push_back(e);
  }
  return j;
}

json to_json(const SloReport& r) {
  json j{{"schema_version", kSchemaVersion}, {"attainment", r.attainment}, {"num_requests", r.per_request.size()}};
  if (r.peak_rate_estimate) j["peak_rate_estimate"] = *r.peak_rate_estimate;
  return j;
}

}  // namespace hexplan
