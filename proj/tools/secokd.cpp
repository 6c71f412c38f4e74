#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "secokd/cli/config.hpp"
#include "secokd/cli/stages.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds: no seeds in '" + csv + "'");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-context knowledge distillation on a toy transformer: pretrain a base "
               "model, harvest 8-shot teacher rationales, train SeCoKD/SFT students, and "
               "evaluate shot efficiency, difficulty migration, and cross-task robustness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string preset = "desk";
  std::string out_dir;
  std::string seeds_csv;
  std::string strategy = "secokd-s";
  int workers = 0;

  app.add_option("--config", config_path, "JSON config file; overrides the preset");
  app.add_option("--preset", preset, "Named preset: desk|paper")->capture_default_str();
  app.add_option("--out", out_dir, "Run output root (default: $SECOKD_OUT)");
  app.add_option("--seeds", seeds_csv, "Comma-separated seed list override");
  app.add_option("--workers", workers, "Worker threads for harvest/eval fan-out");

  auto* cmd_pretrain = app.add_subcommand("pretrain", "Pretrain the shared base model per seed");
  auto* cmd_harvest = app.add_subcommand("harvest", "Harvest 8-shot teacher supervision");
  auto* cmd_train = app.add_subcommand("train", "Train student adapters for one strategy");
  cmd_train->add_option("--strategy", strategy, "secokd-s|secokd-m|sft")->required();
  auto* cmd_sweep = app.add_subcommand("sweep", "Shot sweeps for base and trained students");
  auto* cmd_difficulty =
      app.add_subcommand("difficulty", "Positive-demo profiles and improvement scores");
  auto* cmd_crosstask = app.add_subcommand("crosstask", "Cross-task one-shot matrices");
  auto* cmd_report = app.add_subcommand("report", "Render report files from persisted results");
  auto* cmd_run_all = app.add_subcommand("run-all", "Run every stage end to end");

  CLI11_PARSE(app, argc, argv);

  try {
    secokd::cli::RunConfig cfg =
        config_path.empty() ? secokd::cli::preset_config(preset)
                            : secokd::cli::load_config(config_path);
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (cfg.out_dir.empty()) {
      if (const char* env = std::getenv("SECOKD_OUT")) cfg.out_dir = env;
    }
    if (!seeds_csv.empty()) cfg.seeds = parse_seeds(seeds_csv);
    if (workers > 0) cfg.workers = workers;

    if (cmd_report->parsed()) {
      secokd::cli::emit_report(cfg.out_dir);
      return 0;
    }
    if (cmd_run_all->parsed()) {
      secokd::cli::run_experiment(cfg);
      return 0;
    }

    secokd::cli::Runner runner(cfg);
    runner.stage_data();
    for (const auto seed : cfg.seeds) {
      if (cmd_pretrain->parsed()) {
        runner.stage_pretrain(seed);
      } else if (cmd_harvest->parsed()) {
        for (const auto& task : cfg.task_ids) runner.stage_harvest(seed, task);
      } else if (cmd_train->parsed()) {
        for (const auto& task : cfg.task_ids) runner.stage_train(seed, task, strategy);
      } else if (cmd_sweep->parsed()) {
        for (const auto& task : cfg.task_ids) runner.stage_sweep(seed, task);
      } else if (cmd_difficulty->parsed()) {
        for (const auto& task : cfg.task_ids) runner.stage_difficulty(seed, task);
      } else if (cmd_crosstask->parsed()) {
        runner.stage_crosstask(seed);
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
