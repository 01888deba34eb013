#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "lanerl/cli.hpp"
#include "lanerl/config.hpp"
#include "lanerl/error.hpp"

namespace lanerl {
namespace {

using json = nlohmann::json;

std::string config_error(const json &doc) {
  try {
    parse_run_config(doc);
  } catch (const ConfigError &e) {
    return e.what();
  }
  ADD_FAILURE() << "expected ConfigError for " << doc.dump();
  return {};
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_run_config(json::object());
  EXPECT_EQ(c.map, "maps/loop.map");
  EXPECT_EQ(c.ppo.total_steps, PPOConfig{}.total_steps);
  EXPECT_EQ(c.env.action_mapping, EnvConfig{}.action_mapping);
  EXPECT_EQ(c.eval.horizon, 15.0);
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_NE(config_error({{"env", {{"reward", {{"phi_degs", 10}}}}}}).find("env.reward.phi_degs"),
            std::string::npos);
  EXPECT_NE(config_error({{"bogus", 1}}).find("bogus"), std::string::npos);
}

TEST(Config, TypeErrorsNameTheirPath) {
  EXPECT_NE(config_error({{"env", {{"reward", {{"phi_deg", "abc"}}}}}}).find("env.reward.phi_deg"),
            std::string::npos);
  EXPECT_NE(config_error({{"ppo", {{"num_workers", 1.5}}}}).find("ppo.num_workers"),
            std::string::npos);
  EXPECT_NE(config_error({{"env", {{"action_mapping", "rocket"}}}}).find("env.action_mapping"),
            std::string::npos);
}

TEST(Config, ValidationFailuresAreConfigErrors) {
  EXPECT_FALSE(config_error({{"ppo", {{"clip_epsilon", 0.5}}}}).empty());
  EXPECT_FALSE(config_error({{"eval", {{"horizon", -1}}}}).empty());
}

TEST(Config, RoundTripIsExact) {
  json doc = {{"ppo", {{"seed", 42}, {"total_steps", 1234}}},
              {"env", {{"reward", {{"phi_deg", 30}}}, {"action_mapping", "wheel_velocity"}}},
              {"teleop", {{"port", 0}}}};
  const RunConfig a = parse_run_config(doc);
  const auto dumped = to_json(a);
  const RunConfig b = parse_run_config(json::parse(dumped.dump()));
  EXPECT_EQ(dumped.dump(), to_json(b).dump());
  EXPECT_EQ(b.ppo.seed, 42u);
  EXPECT_EQ(b.env.action_mapping, ActionMapping::WheelVelocity);
  EXPECT_EQ(dumped["env"]["reward"]["phi_deg"].get<double>(), 30.0);
}

TEST(Config, OverridesApplyByDottedPath) {
  json doc = json::object();
  apply_override(doc, "ppo.seed=9");
  apply_override(doc, "env.action_mapping=steering");
  apply_override(doc, "env.randomization.enabled=true");
  const RunConfig c = parse_run_config(doc);
  EXPECT_EQ(c.ppo.seed, 9u);
  EXPECT_EQ(c.env.action_mapping, ActionMapping::Steering);
  EXPECT_TRUE(c.env.randomization.enabled);
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST(Config, MissingFileIsAnError) {
  EXPECT_ANY_THROW(load_run_config("/nonexistent/config.json"));
}

int cli(std::vector<std::string> args, std::string *out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({"gradcheck", "--coords", "20"}), 0);
  EXPECT_EQ(cli({"eval", "--set", "env.reward.phi_deg=abc"}), 2);
  EXPECT_EQ(cli({"no-such-command"}), 2);
  EXPECT_EQ(cli({"eval", "--map", test::map_path("loop.map"), "--controller",
                 "/nonexistent/ckpt.bin"}),
            4);
  const auto bad = test::scratch_dir("cli_bad_map") / "bad.map";
  std::ofstream(bad) << "tilesize 0.585\nS_NS\n";
  EXPECT_EQ(cli({"eval", "--map", bad.string()}), 2);
}

TEST(Cli, EvalPdWritesTables) {
  const auto dir = test::scratch_dir("cli_eval");
  std::string text;
  ASSERT_EQ(cli({"eval", "--controller", "pd", "--episodes", "2", "--horizon", "3", "--map",
                 test::map_path("loop.map"), "-o", dir.string()},
                &text),
            0)
      << text;
  EXPECT_TRUE(std::filesystem::exists(dir / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "episodes.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "config.json"));
  EXPECT_NE(text.find("survival time"), std::string::npos);
  const RunConfig c = load_run_config((dir / "config.json").string());
  EXPECT_EQ(c.eval.episodes, 2);
}

TEST(Cli, MapGenIsDeterministic) {
  std::string a, b;
  ASSERT_EQ(cli({"map-gen", "-n", "2", "--seed", "5"}, &a), 0);
  ASSERT_EQ(cli({"map-gen", "-n", "2", "--seed", "5"}, &b), 0);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("tilesize"), std::string::npos);
}

}  // namespace
}  // namespace lanerl
