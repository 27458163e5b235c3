// cslab: runs the state-reconstruction pipeline stage by stage.
#include <CLI11.hpp>

#include <atomic>
#include <iostream>
#include <thread>

#include "cslab/cli/pipeline.hpp"
#include "cslab/common/errors.hpp"

namespace {

using namespace cslab;
using namespace cslab::cli;

int report_error(const std::exception& e) {
  std::cerr << "cslab: error: " << e.what() << "\n";
  return exit_code_for(e);
}

// Runs `stage` for every seed, `jobs` seeds at a time. Returns the exit code
// of the first failing seed in seed order.
int for_each_seed(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds, const fs::path& root,
                  const RunOptions& options, int jobs, const std::function<void(Run&)>& stage) {
  std::vector<int> codes(seeds.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        Run run(config, seeds[i], seed_dir(root, seeds[i]), options);
        stage(run);
      } catch (const std::exception& e) {
        codes[i] = report_error(e);
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, int(seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (int c : codes) {
    if (c != kExitOk) return c;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal-state reconstruction lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  RunOptions options;
  int jobs = 1;
  app.add_option("-c,--config", config_path, "Experiment config (JSON)");
  app.add_option("-o,--out", out_dir, "Output root (overrides CSLAB_OUT and the config)");
  app.add_option("-s,--seed", seeds, "Pipeline seed(s); overrides the config's seed list");
  app.add_flag("-f,--force", options.force, "Rerun stages even when their inputs are unchanged");
  app.add_flag("-q,--quiet", options.quiet, "No progress output");
  app.add_option("-j,--jobs", jobs, "Seeds to run in parallel")->check(CLI::PositiveNumber);

  struct Stage {
    const char* name;
    const char* help;
    std::function<void(Run&)> fn;
  };
  const std::vector<Stage> stages{
      {"collect", "Random-policy trajectories (JSONL)", [](Run& r) { r.collect(); }},
      {"train-wm", "Train the recurrent world model", [](Run& r) { r.train_world_model(); }},
      {"distill", "Fit the discretizer (QBN, k-means or VQ)", [](Run& r) { r.distill(); }},
      {"analyze", "Unifilarity, purity, sufficiency gap, CSM export", [](Run& r) { r.analyze(); }},
      {"train-rl", "Train and evaluate an RL agent", [](Run& r) { r.train_rl(); }},
      {"plan", "Plan over the state machine and execute", [](Run& r) { r.plan(); }},
      {"run", "Every stage the config needs, in order", [](Run& r) { r.all(); }},
  };
  std::vector<CLI::App*> stage_cmds;
  for (const auto& s : stages) stage_cmds.push_back(app.add_subcommand(s.name, s.help));

  auto* config_cmd = app.add_subcommand("config", "Print the resolved config (defaults when no --config)");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Aggregate RL results across runs into one CSV");
  report_cmd->add_option("dirs", report_dirs, "Run directories or results.csv files")->required();
  report_cmd->add_option("--csv", report_out, "Write the aggregate here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report_cmd->parsed()) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      const std::string csv = report_csv(aggregate_results(dirs));
      if (report_out.empty()) {
        std::cout << csv;
      } else {
        atomic_write(report_out, csv);
      }
      return kExitOk;
    }

    ExperimentConfig config;
    if (!config_path.empty()) {
      config = load_config(config_path);
    } else if (!config_cmd->parsed()) {
      throw ConfigError("--config is required for this command");
    }
    if (!seeds.empty()) config.seeds = seeds;

    if (config_cmd->parsed()) {
      std::cout << resolved_json(config).dump(2) << "\n";
      return kExitOk;
    }

    const fs::path root = output_root(config, out_dir);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stage_cmds[i]->parsed()) return for_each_seed(config, config.seeds, root, options, jobs, stages[i].fn);
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return kExitFailure;
}
