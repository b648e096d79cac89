// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.h"
#include "hexplan/cluster.h"
#include "hexplan/errors.h"

using namespace hexplan;
using nlohmann::json;

namespace {

json eight_device_file() {
  json j = fixtures::build_cluster({{"A", {"A", 4e10, 1e12, 1e14}}, {"B", {"B", 2e10, 5e11, 5e13}}},
                                   fixtures::machines({{"m0", "r0", "A", 4}, {"m1", "r0", "B", 4}}), {1e-5, 1e11},
                                   {1e-4, 1e10}, {1e-2, 1e8})
               .to_json();
  return j;
}

}  // namespace

TEST_CASE("two machines of four GPUs give two buckets of four") {
  const ClusterSpec c = ClusterSpec::from_json(eight_device_file());
  REQUIRE(c.num_buckets() == 2);
  CHECK(c.bucket(0).count() == 4);
  CHECK(c.bucket(1).count() == 4);
  CHECK(c.capacity() == TypeVector(std::vector<int>{4, 4}));
}

TEST_CASE("case-study cluster buckets are [4,2,2]") {
  const ClusterSpec c = fixtures::case_study_cluster();
  CHECK(c.capacity() == TypeVector(std::vector<int>{4, 2, 2}));
  CHECK(c.bucket_of(0) == c.bucket_of(3));
  CHECK(c.bucket_of(4) != c.bucket_of(6));
}

TEST_CASE("same type on different machines maps to different buckets") {
  const ClusterSpec c =
      fixtures::build_cluster({{"A", {"A", 1e10, 1e12, 1e14}}, {"B", {"B", 1e10, 1e12, 1e14}}},
                              fixtures::machines({{"m0", "r0", "A", 2}, {"m0", "r0", "B", 1}, {"m1", "r0", "B", 1}}),
                              {0, 1e11}, {1e-4, 1e10}, {1e-3, 1e9});
  CHECK(c.bucket_of(0) == c.bucket_of(1));
  CHECK(c.bucket_of(1) != c.bucket_of(2));  // same machine, different type
  CHECK(c.bucket_of(2) != c.bucket_of(3));  // same type, different machine
  CHECK_THROWS_AS(c.bucket_of(4), std::out_of_range);
  int total = 0;
  for (const Bucket& b : c.buckets()) total += b.count();
  CHECK(total == c.num_devices());
}

TEST_CASE("malformed cluster files are rejected") {
  SUBCASE("alpha is 7x8") {
    json j = eight_device_file();
    j["alpha_s"].erase(7);
    CHECK_THROWS_AS(ClusterSpec::from_json(j), ParseError);
  }
  SUBCASE("non-positive bandwidth") {
    json j = eight_device_file();
    j["beta_Bps"][0][1] = 0.0;
    CHECK_THROWS_AS(ClusterSpec::from_json(j), ParseError);
  }
  SUBCASE("duplicate device id") {
    json j = eight_device_file();
    j["devices"][1]["id"] = 0;
    CHECK_THROWS_AS(ClusterSpec::from_json(j), ParseError);
  }
  SUBCASE("machine in two regions") {
    json j = eight_device_file();
    j["devices"][1]["region"] = "elsewhere";
    CHECK_THROWS_AS(ClusterSpec::from_json(j), ParseError);
  }
  SUBCASE("missing schema version") {
    json j = eight_device_file();
    j.erase("schema_version");
    CHECK_THROWS_AS(ClusterSpec::from_json(j), ParseError);
  }
  SUBCASE("self links are ignored") {
    json j = eight_device_file();
    j["beta_Bps"][2][2] = 0.0;
    CHECK_NOTHROW(ClusterSpec::from_json(j));
  }
}

TEST_CASE("cluster JSON round trip is stable") {
  const ClusterSpec c = fixtures::two_region_cluster();
  const ClusterSpec back = ClusterSpec::from_json(c.to_json());
  CHECK(back == c);
  CHECK(back.to_json() == c.to_json());

  const auto path = std::filesystem::temp_directory_path() / "hexplan_cluster_rt.json";
  std::ofstream(path) << c.to_json().dump();
  CHECK(load_cluster(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("model and task validation") {
  CHECK_THROWS_AS(ModelSpec({0, 8, 2}).validate(), ParseError);
  CHECK_THROWS_AS(ModelSpec({8, 8, 3}).validate(), ParseError);
  CHECK_THROWS_AS(TaskSpec({1, 0, 1}).validate(), ParseError);
  CHECK(fixtures::llama70b().parameter_bytes() == doctest::Approx(12.0 * 8192 * 8192 * 2 * 80));
  const json m = to_json(fixtures::llama70b());
  CHECK(model_from_json(m).hidden_dim == 8192);
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), ParseError);
}

TEST_CASE("type vector arithmetic") {
  TypeVector a(std::vector<int>{1, 2, 0});
  TypeVector b(std::vector<int>{0, 1, 3});
  CHECK((a + b) == TypeVector(std::vector<int>{1, 3, 3}));
  CHECK((a + b - b) == a);
  CHECK(a.total() == 3);
  CHECK(a.nonzero_buckets() == 2);
  CHECK(a.fits_within(TypeVector(std::vector<int>{1, 2, 0})));
  CHECK_FALSE(b.fits_within(a));
}

TEST_CASE("removing devices renumbers survivors") {
  const ClusterSpec c = fixtures::case_study_cluster();
  std::vector<int> old_to_new;
  const ClusterSpec s = c.without({1, 6}, &old_to_new);
  CHECK(s.num_devices() == 6);
  CHECK(old_to_new[1] == -1);
  CHECK(old_to_new[2] == 1);
  CHECK(s.capacity() == TypeVector(std::vector<int>{3, 2, 1}));
  CHECK(s.alpha(old_to_new[0], old_to_new[7]) == c.alpha(0, 7));
  CHECK_THROWS_AS(c.without({0, 1, 2, 3, 4, 5, 6, 7}), InfeasiblePoolError);
}
