#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "secokd/cli/config.hpp"
#include "secokd/cli/manifest.hpp"
#include "secokd/distill/distill.hpp"
#include "secokd/model/model.hpp"
#include "secokd/tasks/task.hpp"

namespace secokd::cli {

// Directory layout inside a run root: task data under data/<task>/, one run
// directory per (task, seed) with checkpoints/, harvest/, logs/, results/,
// the shared pretrained base under seed_<S>/base/, cross-task results under
// seed_<S>/crosstask/, and the rendered report under report/.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config_file() const { return root / "config.json"; }
  std::filesystem::path manifest_file() const { return root / "manifest.json"; }
  std::filesystem::path data_dir(const std::string& task) const { return root / "data" / task; }
  std::filesystem::path seed_dir(std::uint64_t seed) const {
    return root / ("seed_" + std::to_string(seed));
  }
  std::filesystem::path base_dir(std::uint64_t seed) const { return seed_dir(seed) / "base"; }
  std::filesystem::path run_dir(std::uint64_t seed, const std::string& task) const {
    return seed_dir(seed) / task;
  }
  std::filesystem::path crosstask_dir(std::uint64_t seed) const {
    return seed_dir(seed) / "crosstask";
  }
  std::filesystem::path report_dir() const { return root / "report"; }

  std::string rel(const std::filesystem::path& p) const {
    return std::filesystem::relative(p, root).string();
  }
};

// Executes pipeline stages idempotently: a stage whose manifest entry is done
// and whose artifacts still hash-match is skipped.
class Runner {
 public:
  explicit Runner(RunConfig cfg);

  void stage_data();
  void stage_pretrain(std::uint64_t seed);
  void stage_harvest(std::uint64_t seed, const std::string& task);
  void stage_train(std::uint64_t seed, const std::string& task, const std::string& strategy);
  void stage_sweep(std::uint64_t seed, const std::string& task);
  void stage_difficulty(std::uint64_t seed, const std::string& task);
  void stage_crosstask(std::uint64_t seed);

  // data -> per seed: pretrain, per task: harvest/train/sweep/difficulty,
  // crosstask -> report.
  void run_all();

  const RunManifest& manifest() const { return manifest_; }
  const RunPaths& paths() const { return paths_; }
  const tasks::Tokenizer& tokenizer() const { return tokenizer_; }
  const RunConfig& config() const { return cfg_; }

  // Strategy tags the run trains, in config order ("SeCoKD-S", ...).
  std::vector<std::string> strategy_tags() const;

 private:
  const tasks::TaskData& task_data(const std::string& task);
  model::AdaptedModel load_base(std::uint64_t seed) const;
  model::AdaptedModel load_student(std::uint64_t seed, const std::string& task,
                                   const std::string& strategy) const;
  std::vector<distill::TrainingExample> build_pretrain_corpus(std::uint64_t seed);
  // Harvested outputs paired with their train samples, after the
  // teacher-correctness filter.
  void training_subset(std::uint64_t seed, const std::string& task,
                       std::vector<tasks::Sample>& samples_out,
                       std::vector<distill::TeacherOutput>& harvest_out) const;
  void finish_stage(const std::string& key, const std::vector<std::filesystem::path>& artifacts);

  RunConfig cfg_;
  tasks::TaskRegistry registry_;
  tasks::Tokenizer tokenizer_;
  RunPaths paths_;
  RunManifest manifest_;
  std::map<std::string, tasks::TaskData> data_cache_;
};

RunManifest run_experiment(const RunConfig& cfg);

// Renders the report (one-shot table, improvement scores, shot sweeps,
// cross-task matrices, summary) from the persisted per-sample logs alone.
void emit_report(const std::string& run_dir);

std::string checkpoint_filename(const std::string& strategy);

}  // namespace secokd::cli
