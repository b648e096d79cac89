// SPDX-License-Identifier: Apache-2.0
//
// Plan files and run manifests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hexplan/assignment.h"
#include "hexplan/genetic.h"

namespace hexplan {

inline constexpr const char* kToolVersion = "0.1.0";

/// {schema_version, pipelines: [{stages: [{devices, tp_degree, layers}], notation}]}
nlohmann::json plan_to_json(const GlobalAssignment& plan);
/// Throws ParseError on malformed input or when a stage's tp_degree does not
/// match its device count.
GlobalAssignment plan_from_json(const nlohmann::json& j);
GlobalAssignment load_plan(const std::filesystem::path& path);

/// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

nlohmann::json to_json(const SearchConfig& c);

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::vector<std::pair<std::string, std::string>> input_digests;  // (path, sha256)
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  double duration_s = 0.0;

  void add_input(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace hexplan
