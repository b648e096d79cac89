// SPDX-License-Identifier: Apache-2.0

#include "hexplan/plan_io.h"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "hexplan/errors.h"

namespace hexplan {

using nlohmann::json;

json plan_to_json(const GlobalAssignment& plan) {
  json pipelines = json::array();
  for (const Pipeline& p : plan.pipelines) {
    json stages = json::array();
    for (const StageAssignment& st : p)
      stages.push_back({{"devices", st.devices}, {"tp_degree", st.tp_degree()}, {"layers", st.num_layers}});
    pipelines.push_back({{"stages", stages}, {"notation", compact_notation(p)}});
  }
  return {{"schema_version", kSchemaVersion}, {"pipelines", pipelines}};
}

GlobalAssignment plan_from_json(const json& j) {
  try {
    check_schema_version(j, "plan");
    GlobalAssignment plan;
    for (const json& pj : j.at("pipelines")) {
      Pipeline p;
      for (const json& sj : pj.at("stages")) {
        StageAssignment st;
        st.devices = sj.at("devices").get<std::vector<int>>();
        st.num_layers = sj.at("layers").get<int>();
        if (st.devices.empty()) throw ParseError("plan: stage with no devices");
        if (sj.contains("tp_degree") && sj["tp_degree"].get<int>() != st.tp_degree())
          throw ParseError("plan: tp_degree does not match the stage's device count");
        p.push_back(std::move(st));
      }
      if (p.empty()) throw ParseError("plan: pipeline with no stages");
      plan.pipelines.push_back(std::move(p));
    }
    return plan;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

GlobalAssignment load_plan(const std::filesystem::path& path) { return plan_from_json(read_json_file(path)); }

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

json to_json(const SearchConfig& c) {
  return {{"population_size", c.population_size},
          {"generations", c.generations},
          {"merge_rate", c.merge_rate},
          {"split_rate", c.split_rate},
          {"swap_rate", c.swap_rate},
          {"elitism", c.elitism},
          {"tournament_size", c.tournament_size},
          {"seed", c.seed},
          {"plateau_patience", c.plateau_patience},
          {"tp_candidates", c.tp_candidates},
          {"refine_iterations", c.refine_iterations},
          {"max_clusters", c.max_clusters},
          {"threads", c.threads}};
}

void RunManifest::add_input(const std::filesystem::path& path) {
  input_digests.emplace_back(path.string(), file_sha256(path));
}

json RunManifest::to_json() const {
  json inputs = json::array();
  for (const auto& [path, digest] : input_digests) inputs.push_back({{"path", path}, {"sha256", digest}});
  return {{"schema_version", kSchemaVersion},
          {"tool_version", tool_version},
          {"command", command},
          {"inputs", inputs},
          {"seed", seed},
          {"config", config},
          {"duration_s", duration_s}};
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace hexplan
