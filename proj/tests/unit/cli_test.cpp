#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <sys/wait.h>

#include "cslab/cli/pipeline.hpp"
#include "cslab/common/errors.hpp"

using namespace cslab;
using namespace cslab::cli;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("cslab_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Small enough that a whole pipeline finishes in seconds.
json tiny_config() {
  return json::parse(R"({
    "collect": {"episodes": 30, "heldout_episodes": 10},
    "world_model": {"epochs": 1, "gru_hidden_dim": 8, "obs_embed_dim": 8,
                    "action_embed_dim": 8, "predictor_hidden_dim": 8},
    "discretizer": {"method": "kmeans", "k": 4},
    "rl": {"method": "tabular", "featurizer": "history", "final_eval_episodes": 4,
           "tabular": {"episodes": 20, "eval_every": 10, "eval_episodes": 2}},
    "planner": {"states": "oracle", "log_probability_cost": true, "episodes": 2}
  })");
}

RunOptions quiet() {
  RunOptions o;
  o.quiet = true;
  return o;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const json defaults = default_config_json();
  const auto c = parse_config(json::object());
  EXPECT_EQ(resolved_json(c), defaults);
  EXPECT_EQ(resolved_json(parse_config(defaults)), defaults);
}

TEST(Config, OverridesAreEchoed) {
  json user = tiny_config();
  user["seeds"] = {3, 5};
  const auto c = parse_config(user);
  EXPECT_EQ(c.collect.episodes, 30);
  EXPECT_EQ(c.discretizer.k, 4);
  EXPECT_EQ(c.rl.tabular.episodes, 20);
  const json r = resolved_json(c);
  EXPECT_EQ(r["seeds"], json({3, 5}));
  // Fields the user left out are present with their defaults.
  EXPECT_EQ(r["rl"]["dqn"]["batch_size"], rl::DqnConfig{}.batch_size);
  EXPECT_EQ(r["world_model"]["lr_decay"], wm::WorldModelConfig{}.lr_decay);
}

TEST(Config, RejectsUnknownKeysBadTypesAndValues) {
  EXPECT_THROW(parse_config(json{{"colect", json::object()}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"rl", {{"dqn", {{"batchsize", 3}}}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"collect", {{"episodes", "many"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"collect", {{"episodes", -1}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"rl", {{"method", "sarsa"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"rl", {{"featurizer", "pixels"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"env", {{"toy", {{"p", 1.5}}}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"seeds", json::array()}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"env", {{"kind", "gridworld"}, {"grid", {{"layout", "no/such/file.txt"}}}}}}),
               ConfigError);
  EXPECT_THROW(parse_config(json{{"version", 99}}), ConfigError);
}

TEST(Config, LayoutPathsBecomeAbsolute) {
  const auto c = parse_config(json{{"env", {{"kind", "gridworld"}, {"grid", {{"layout", "layouts/layout1.txt"}}}}}},
                              CSLAB_SOURCE_DIR);
  EXPECT_TRUE(fs::path(c.env.layout).is_absolute());
  const auto env = make_environment(c);
  EXPECT_EQ(env->kind(), "gridworld");
}

TEST(Csv, QuotingRoundTrip) {
  const std::vector<std::string> fields{"plain", "a,b", "say \"hi\"", "two\r\nlines", ""};
  const std::string row = csv_row(fields);
  EXPECT_EQ(row, "plain,\"a,b\",\"say \"\"hi\"\"\",\"two\r\nlines\",\r\n");
  const auto parsed = parse_csv(row + csv_row({"x", "y", "z", "w", "v"}));
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0], fields);
  EXPECT_THROW(parse_csv("\"open"), ValidationError);
}

TEST(Output, FlagThenEnvironmentThenConfig) {
  ExperimentConfig c;
  c.output = "from_config";
  ::unsetenv("CSLAB_OUT");
  EXPECT_EQ(output_root(c), fs::path("from_config"));
  ::setenv("CSLAB_OUT", "from_env", 1);
  EXPECT_EQ(output_root(c), fs::path("from_env"));
  EXPECT_EQ(output_root(c, "from_flag"), fs::path("from_flag"));
  ::unsetenv("CSLAB_OUT");
}

TEST(Stages, CollectIsDeterministicAndResumable) {
  TempDir tmp("collect");
  const auto c = parse_config(tiny_config());
  cli::Run a(c, 7, tmp.path() / "a", quiet());
  cli::Run b(c, 7, tmp.path() / "b", quiet());
  EXPECT_TRUE(a.collect());
  EXPECT_TRUE(b.collect());
  EXPECT_EQ(slurp(a.dir() / artifacts::kTrainData), slurp(b.dir() / artifacts::kTrainData));
  std::istringstream lines(slurp(a.dir() / artifacts::kTrainData));
  EXPECT_EQ(envs::read_jsonl(lines).size(), 30u);

  // Unchanged inputs: no-op, also from a fresh process view of the manifest.
  EXPECT_FALSE(a.collect());
  cli::Run again(c, 7, tmp.path() / "a", quiet());
  EXPECT_FALSE(again.collect());
  RunOptions force = quiet();
  force.force = true;
  cli::Run forced(c, 7, tmp.path() / "a", force);
  EXPECT_TRUE(forced.collect());

  // A different seed gives different data.
  cli::Run other(c, 8, tmp.path() / "c", quiet());
  other.collect();
  EXPECT_NE(slurp(a.dir() / artifacts::kTrainData), slurp(other.dir() / artifacts::kTrainData));

  const json manifest = read_json(a.dir() / artifacts::kManifest);
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_TRUE(manifest["stages"]["collect"].contains("wall_time_s"));
  EXPECT_EQ(manifest["config"], read_json(a.dir() / artifacts::kResolvedConfig));
  EXPECT_FALSE(manifest["build"].get<std::string>().empty());
}

TEST(Stages, ZeroEpisodesGiveAnEmptyDataset) {
  TempDir tmp("empty");
  json user = tiny_config();
  user["collect"]["episodes"] = 0;
  cli::Run run(parse_config(user), 0, tmp.path(), quiet());
  run.collect();
  EXPECT_EQ(fs::file_size(tmp.path() / artifacts::kTrainData), 0u);
  EXPECT_NE(slurp(tmp.path() / artifacts::kLog).find("warning"), std::string::npos);
}

TEST(Stages, MissingArtifactsNameTheFile) {
  TempDir tmp("missing");
  json user = tiny_config();
  user["rl"]["featurizer"] = "discrete";
  cli::Run run(parse_config(user), 0, tmp.path(), quiet());
  try {
    run.train_rl();
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(e.path().find("world_model/model.ckpt"), std::string::npos);
    EXPECT_EQ(exit_code_for(e), kExitMissingArtifact);
  }
  EXPECT_THROW(run.train_world_model(), MissingArtifactError);
}

TEST(Stages, OracleAnalysisIsUnifilarAndPure) {
  TempDir tmp("oracle");
  json user = tiny_config();
  user["analysis"]["labels"] = "oracle";
  user["collect"]["heldout_episodes"] = 50;
  cli::Run run(parse_config(user), 0, tmp.path(), quiet());
  run.collect();
  run.analyze();
  const json unif = read_json(tmp.path() / artifacts::kUnifilarity);
  const json purity = read_json(tmp.path() / artifacts::kPurity);
  EXPECT_EQ(unif["entropy_bits"].get<double>(), 0.0);
  EXPECT_EQ(purity["purity"].get<double>(), 1.0);
  EXPECT_EQ(read_json(tmp.path() / artifacts::kMerge)["merged_states"], 8);
  EXPECT_NE(slurp(tmp.path() / artifacts::kCsmDot).find("digraph"), std::string::npos);
  const double h = read_json(tmp.path() / artifacts::kSufficiency)["analytic_entropy"].get<double>();
  EXPECT_NEAR(h, -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-12);
}

TEST(Stages, FullPipelineWritesEveryArtifact) {
  TempDir tmp("full");
  json user = tiny_config();
  user["rl"]["featurizer"] = "discrete";
  cli::Run run(parse_config(user), 1, tmp.path(), quiet());
  run.all();
  for (const char* rel : {artifacts::kTrainData, artifacts::kHeldoutData, artifacts::kWorldModel,
                          artifacts::kWorldModelLog, artifacts::kDiscretizer, artifacts::kStateMap,
                          artifacts::kUnifilarity, artifacts::kPurity, artifacts::kSufficiency, artifacts::kCsmJson,
                          artifacts::kCsmDot, artifacts::kMerge, artifacts::kPlanGraph, artifacts::kPlan,
                          artifacts::kPlanExecution, artifacts::kPlanSummary}) {
    EXPECT_TRUE(fs::exists(tmp.path() / rel)) << rel;
  }
  const fs::path rl_dir = tmp.path() / "rl" / run.rl_name();
  for (const char* f : {"curve.csv", "model.ckpt", "result.json", "results.csv"}) {
    EXPECT_TRUE(fs::exists(rl_dir / f)) << f;
  }
  const auto curve = parse_csv(slurp(rl_dir / "curve.csv"));
  EXPECT_EQ(curve[0], (std::vector<std::string>{"step", "episode", "train_reward", "eval_reward_mean",
                                                "eval_reward_std", "seed"}));
  const json suff = read_json(tmp.path() / artifacts::kSufficiency);
  EXPECT_TRUE(suff.contains("gap"));
  const json manifest = read_json(tmp.path() / artifacts::kManifest);
  for (const char* stage : {"collect", "train-wm", "distill", "analyze", "plan"}) {
    EXPECT_TRUE(manifest["stages"].contains(stage)) << stage;
  }

  // A rerun with identical config touches nothing; a changed rl block retrains
  // only the agent.
  cli::Run same(parse_config(user), 1, tmp.path(), quiet());
  EXPECT_FALSE(same.collect());
  EXPECT_FALSE(same.train_world_model());
  EXPECT_FALSE(same.train_rl());
  user["rl"]["tabular"]["alpha"] = 0.2;
  cli::Run changed(parse_config(user), 1, tmp.path(), quiet());
  EXPECT_FALSE(changed.distill());
  EXPECT_TRUE(changed.train_rl());
}

TEST(Report, AggregatesAcrossSeeds) {
  TempDir tmp("report");
  const auto c = parse_config(tiny_config());
  std::vector<double> per_seed;
  for (std::uint64_t s : {0, 1, 2}) {
    cli::Run run(c, s, seed_dir(tmp.path(), s), quiet());
    run.train_rl();
    per_seed.push_back(read_json(run.dir() / "rl" / run.rl_name() / "result.json")["eval_mean"].get<double>());
  }
  const auto rows = aggregate_results({tmp.path()});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n, 3);
  const double mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / 3.0;
  double ss = 0.0;
  for (double v : per_seed) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(rows[0].mean, mean, 1e-9);
  EXPECT_NEAR(rows[0].std, std::sqrt(ss / 2.0), 1e-9);
  EXPECT_EQ(rows[0].method, "tabular");
  EXPECT_EQ(rows[0].featurizer, "history");

  const auto single = aggregate_results({seed_dir(tmp.path(), 0)});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].n, 1);
  EXPECT_EQ(single[0].std, 0.0);
  EXPECT_NE(report_csv(single).find("n=1"), std::string::npos);
}

TEST(Report, IncompatibleConfigsAreListed) {
  TempDir tmp("conflict");
  json user = tiny_config();
  cli::Run a(parse_config(user), 0, tmp.path() / "a", quiet());
  a.train_rl();
  user["rl"]["tabular"]["gamma"] = 0.9;
  cli::Run b(parse_config(user), 1, tmp.path() / "b", quiet());
  b.train_rl();
  try {
    aggregate_results({tmp.path()});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tabular / history"), std::string::npos);
  }
  EXPECT_THROW(aggregate_results({tmp.path() / "nothing"}), MissingArtifactError);
}

TEST(Binary, ExitCodes) {
  TempDir tmp("exit");
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(CSLAB_CLI_PATH) + " -q " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const fs::path bad = tmp.path() / "bad.json";
  std::ofstream(bad) << R"({"rl": {"method": "sarsa"}})";
  EXPECT_EQ(run("-c " + bad.string() + " collect"), kExitConfig);

  json user = tiny_config();
  user["rl"]["featurizer"] = "discrete";
  const fs::path good = tmp.path() / "good.json";
  std::ofstream(good) << user.dump();
  const fs::path out = tmp.path() / "out";
  EXPECT_EQ(run("-c " + good.string() + " -o " + out.string() + " train-rl"), kExitMissingArtifact);
  EXPECT_EQ(run("-c " + good.string() + " -o " + out.string() + " collect"), kExitOk);
  EXPECT_TRUE(fs::exists(seed_dir(out, 0) / artifacts::kTrainData));
  EXPECT_EQ(run("--bogus"), kExitConfig);
}

TEST(Binary, EnvironmentOverridesOutputRoot) {
  TempDir tmp("envout");
  const fs::path cfg = tmp.path() / "c.json";
  json user = tiny_config();
  user["output"] = (tmp.path() / "from_config").string();
  std::ofstream(cfg) << user.dump();
  const std::string cmd = "CSLAB_OUT=" + (tmp.path() / "from_env").string() + " " + CSLAB_CLI_PATH +
                          " -q -c " + cfg.string() + " collect";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "from_env" / "seed_0" / artifacts::kTrainData));
  EXPECT_FALSE(fs::exists(tmp.path() / "from_config"));
}
