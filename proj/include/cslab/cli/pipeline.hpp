#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "cslab/cli/config.hpp"

namespace cslab::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitMissingArtifact = 3,
  kExitDivergence = 4,
};

// Maps an exception escaping a stage to the process exit code.
int exit_code_for(const std::exception& e);

std::string build_id();

// --out, then CSLAB_OUT, then the config's output field.
fs::path output_root(const ExperimentConfig& config, const std::string& out_flag = {});
fs::path seed_dir(const fs::path& root, std::uint64_t seed);

// Writes to a sibling temporary file and renames it into place.
void atomic_write(const fs::path& path, const std::string& text);
// Same for writers that take a path.
void atomic_write_with(const fs::path& path, const std::function<void(const fs::path&)>& writer);

// RFC-4180: fields with commas, quotes or line breaks are quoted; rows end in CRLF.
std::string csv_field(std::string_view s);
std::string csv_row(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string hash_file(const fs::path& path);
std::string hash_text(std::string_view text);

// Artifact paths inside a seed directory.
namespace artifacts {
inline const char* const kTrainData = "data/train.jsonl";
inline const char* const kHeldoutData = "data/heldout.jsonl";
inline const char* const kWorldModel = "world_model/model.ckpt";
inline const char* const kWorldModelLog = "world_model/train_log.csv";
inline const char* const kWorldModelMetrics = "world_model/metrics.json";
inline const char* const kDiscretizer = "discretizer/discretizer.ckpt";
inline const char* const kStateMap = "discretizer/state_map.csv";
inline const char* const kQbnLog = "discretizer/qbn_log.csv";
inline const char* const kDiscretizerSummary = "discretizer/summary.json";
inline const char* const kUnifilarity = "analysis/unifilarity.json";
inline const char* const kPurity = "analysis/purity.json";
inline const char* const kSufficiency = "analysis/sufficiency.json";
inline const char* const kCsmJson = "analysis/csm.json";
inline const char* const kCsmDot = "analysis/csm.dot";
inline const char* const kMerge = "analysis/merge.json";
inline const char* const kPlanGraph = "plan/graph.json";
inline const char* const kPlan = "plan/plan.json";
inline const char* const kPlanExecution = "plan/execution.csv";
inline const char* const kPlanSummary = "plan/summary.json";
inline const char* const kManifest = "manifest.json";
inline const char* const kResolvedConfig = "config.resolved.json";
inline const char* const kLog = "log.jsonl";
}  // namespace artifacts

struct RunOptions {
  bool force = false;   // rerun stages whose inputs are unchanged
  bool quiet = false;   // no progress lines on stderr
};

// One seed's pipeline in a private directory. Each stage reads its
// predecessors' files, skips itself when its input hash matches the manifest
// (unless forced) and records hash, wall time and artifacts in the manifest.
class Run {
 public:
  Run(ExperimentConfig config, std::uint64_t seed, fs::path dir, RunOptions options = {});

  const fs::path& dir() const { return dir_; }
  std::uint64_t seed() const { return seed_; }
  const ExperimentConfig& config() const { return config_; }
  const nlohmann::json& manifest() const { return manifest_; }
  // Effective seed of a stage: depends on the pipeline seed, the stage and the
  // block's seed offset only.
  std::uint64_t stage_seed(std::string_view stage, std::uint64_t offset = 0) const;

  // Each returns true when the stage ran, false when it was up to date.
  bool collect();
  bool train_world_model();
  bool distill();
  bool analyze();
  bool train_rl();
  bool plan();
  // Every stage the configuration needs, in order.
  void all();

  // Name of the directory holding this configuration's RL outputs.
  std::string rl_name() const;

 private:
  fs::path path(const char* rel) const { return dir_ / rel; }
  fs::path require(const char* rel) const;
  std::string input_hash(const nlohmann::json& slice, const std::vector<fs::path>& inputs) const;
  bool up_to_date(const std::string& stage, const std::string& hash) const;
  void record(const std::string& stage, const std::string& hash, double seconds, const std::vector<fs::path>& outputs,
              nlohmann::json extra = {});
  void log(const std::string& stage, const std::string& event, nlohmann::json fields = {});
  template <class F>
  bool run_stage(const std::string& stage, const std::string& hash, F&& body);

  ExperimentConfig config_;
  std::uint64_t seed_;
  fs::path dir_;
  RunOptions options_;
  nlohmann::json manifest_;
};

// The per-run RL results file, one row per trained agent:
// env,method,featurizer,seed,eval_mean,eval_std,episodes,config_hash.
inline constexpr std::string_view kResultsFile = "results.csv";

struct ReportRow {
  std::string env;
  std::string method;
  std::string featurizer;
  double mean = 0.0;
  double std = 0.0;  // sample std over seeds; 0 when n = 1
  int n = 0;
  std::vector<double> values;
};

// Groups every results.csv under `dirs` by (env, method, featurizer). Rows of
// a group with different configuration hashes throw ConfigError listing the
// conflicts.
std::vector<ReportRow> aggregate_results(const std::vector<fs::path>& dirs);
// CSV "env,method,featurizer,eval_mean,eval_std,n,flag"; flag is "n=1" for a
// single seed.
std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace cslab::cli
