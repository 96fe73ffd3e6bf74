#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "miql/config.hpp"

using namespace miql;
using json = nlohmann::json;

namespace {
json minimal() {
  return json::parse(R"({"schema_version": 1, "missingness": {"type": "mcar", "theta": 0.4}, "agent": {"method": "mi"}})");
}

std::string error_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }
}  // namespace

TEST(ParseRunConfig, Defaults) {
  const auto c = parse_run_config(minimal());
  EXPECT_EQ(c.agent.method, Method::MultipleImputation);
  EXPECT_EQ(c.agent.params.K, 10);
  EXPECT_EQ(c.horizon, 50000);
  EXPECT_EQ(c.trials, 5);
  EXPECT_EQ(c.sample_every, 100);
  EXPECT_FALSE(c.custom_layout);
  EXPECT_EQ(c.trial_seeds(), (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  ASSERT_TRUE(std::holds_alternative<Mcar>(c.missingness));
  EXPECT_EQ(std::get<Mcar>(c.missingness).theta[1], 0.4);
}

TEST(ParseRunConfig, ExplicitSeedsSetTrials) {
  auto j = minimal();
  j["seeds"] = {7, 9};
  const auto c = parse_run_config(j);
  EXPECT_EQ(c.trials, 2);
  EXPECT_EQ(c.trial_seeds(), (std::vector<std::uint64_t>{7, 9}));
}

TEST(ParseRunConfig, ErrorsNameTheField) {
  auto j = minimal();
  j["agent"]["alpha"] = 2.0;
  EXPECT_TRUE(starts_with(error_of(j), "agent.alpha")) << error_of(j);

  j = minimal();
  j["agent"]["colour"] = 1;
  EXPECT_EQ(error_of(j), "agent.colour: unknown key");

  j = minimal();
  j["env"] = {{"wind_prob", "high"}};
  EXPECT_TRUE(starts_with(error_of(j), "env.wind_prob")) << error_of(j);

  j = minimal();
  j.erase("missingness");
  EXPECT_TRUE(starts_with(error_of(j), "missingness")) << error_of(j);

  j = minimal();
  j["missingness"]["theta"] = {0.1, 0.2};
  EXPECT_TRUE(starts_with(error_of(j), "missingness.theta")) << error_of(j);

  j = minimal();
  j["schema_version"] = 2;
  EXPECT_TRUE(starts_with(error_of(j), "schema_version")) << error_of(j);

  j = minimal();
  j["agent"] = {{"method", "random_action"}, {"K", 3}};
  EXPECT_TRUE(starts_with(error_of(j), "agent.K")) << error_of(j);

  j = minimal();
  j["agent"]["method"] = "sarsa";
  EXPECT_TRUE(starts_with(error_of(j), "agent.method")) << error_of(j);

  j = minimal();
  j["env"] = {{"width", 5}};
  EXPECT_TRUE(starts_with(error_of(j), "env.height")) << error_of(j);

  j = minimal();
  j["horizon"] = 0;
  EXPECT_TRUE(starts_with(error_of(j), "horizon")) << error_of(j);
}

TEST(ParseRunConfig, CustomLayoutRoundTrip) {
  auto j = minimal();
  j["env"] = json::parse(R"({"width": 4, "height": 2, "start": [0, 0], "terminal": [3, 0],
                            "base_water": [[1, 0]], "fog_region": [[2, 1]]})");
  const auto c = parse_run_config(j);
  EXPECT_TRUE(c.custom_layout);
  EXPECT_EQ(c.layout.width(), 4);
  const auto again = parse_run_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
  EXPECT_EQ(config_hash(again), config_hash(c));
}

TEST(ConfigHash, IgnoresRunBookkeepingOnly) {
  const auto a = parse_run_config(minimal());
  auto j = minimal();
  j["output_dir"] = "elsewhere";
  j["trials"] = 2;
  j["trace"] = true;
  j["base_seed"] = 99;
  EXPECT_EQ(config_hash(parse_run_config(j)), config_hash(a));
  j["agent"]["epsilon"] = 0.0;
  EXPECT_NE(config_hash(parse_run_config(j)), config_hash(a));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Fnv1a, ReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(LoadRunConfig, ErrorsCarryThePath) {
  const auto dir = std::filesystem::temp_directory_path() / "miql_test_config";
  std::filesystem::create_directories(dir);
  const auto p = dir / "bad.json";
  {
    std::ofstream os(p);
    os << R"({"schema_version": 1, // comment allowed
              "missingness": {"type": "mcar", "theta": 0.4}, "agent": {"gamma": -1}})";
  }
  try {
    load_run_config(p.string());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(p.string()), std::string::npos);
    EXPECT_NE(msg.find("agent.gamma"), std::string::npos);
  }
  EXPECT_THROW(load_run_config((dir / "absent.json").string()), ConfigError);
}

TEST(LoadRunConfig, SampleConfigsParse) {
  const std::filesystem::path dir = std::filesystem::path(MIQL_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    const auto j = read_json_file(e.path().string());
    if (j.contains("base")) continue;  // grid specs
    EXPECT_NO_THROW(load_run_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 4);
}
