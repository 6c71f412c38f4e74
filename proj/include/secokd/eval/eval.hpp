#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "secokd/model/model.hpp"
#include "secokd/tasks/task.hpp"
#include "secokd/tasks/tokenizer.hpp"

namespace secokd::eval {

// One evaluation event; every reported number is recomputable from these.
struct PredictionRecord {
  std::string model_tag;
  std::string task;
  int shots = -1;       // shot sweeps
  int demo_index = -1;  // positive-demo probes
  std::string sample_ref;
  std::string prediction;  // empty on extraction failure
  bool correct = false;
};

// Receives records in sample order regardless of the worker count.
using PredictionSink = std::function<void(const PredictionRecord&)>;

// Greedy accuracy with the first `shots` pool demos in pool order; extraction
// failures count as incorrect. Samples fan out across workers.
double accuracy_at_shots(const model::AdaptedModel& m, const tasks::Tokenizer& tok,
                         const tasks::TaskSpec& spec, int shots,
                         const tasks::DemonstrationPool& pool,
                         std::span<const tasks::Sample> test_set, int max_new,
                         const std::string& model_tag, const PredictionSink& sink);

struct ShotSweepResult {
  std::string task_id;
  std::string model_tag;
  std::map<int, double> accuracy_by_shot;
  int n_test = 0;
  std::uint64_t seed = 0;
};

ShotSweepResult sweep_shots(const model::AdaptedModel& m, const tasks::Tokenizer& tok,
                            const tasks::TaskSpec& spec, const tasks::DemonstrationPool& pool,
                            std::span<const tasks::Sample> test_set, int max_shots, int max_new,
                            const std::string& model_tag, std::uint64_t seed,
                            const PredictionSink& sink);

// Number of pool demos that alone lead the model to the correct answer in
// one-shot prompting.
int count_positive_demos(const model::AdaptedModel& m, const tasks::Tokenizer& tok,
                         const tasks::TaskSpec& spec, const tasks::Sample& sample,
                         const tasks::DemonstrationPool& pool, int max_new);

// Per-sample positive-demo counts over a test set, fanned out over workers.
std::vector<int> count_positive_demos_all(const model::AdaptedModel& m,
                                          const tasks::Tokenizer& tok, const tasks::TaskSpec& spec,
                                          std::span<const tasks::Sample> test_set,
                                          const tasks::DemonstrationPool& pool, int max_new,
                                          const std::string& model_tag,
                                          const PredictionSink& sink);

enum class Difficulty { Easy, Hard, HardStar };

// Easy: n >= 6, Hard: 6 > n > 1, Hard*: n <= 1. Throws outside [0, 8].
Difficulty classify_difficulty(int n);
std::string difficulty_name(Difficulty d);

struct DifficultyProfile {
  std::vector<int> positive_counts;  // per sample
  int easy = 0;
  int hard = 0;
  int hard_star = 0;
};
DifficultyProfile profile_from_counts(std::span<const int> counts);

// exp(mean((n_i - m_i) / D)) over aligned per-sample positive-demo counts of
// the fine-tuned and base models.
double improvement_score(std::span<const int> finetuned_counts, std::span<const int> base_counts,
                         int pool_size);

struct CrossTaskMatrix {
  std::string model_tag;
  std::vector<std::string> tasks;  // rows: training task; cols: testing task
  std::vector<double> cells;       // row-major one-shot accuracy
  std::vector<double> baseline;    // base-model one-shot accuracy per testing task

  double cell(int train_idx, int test_idx) const {
    return cells[static_cast<size_t>(train_idx) * tasks.size() + static_cast<size_t>(test_idx)];
  }
  double delta(int train_idx, int test_idx) const {
    return cell(train_idx, test_idx) - baseline[static_cast<size_t>(test_idx)];
  }
};

struct TaskEvalContext {
  const tasks::TaskSpec* spec = nullptr;
  const tasks::DemonstrationPool* pool = nullptr;
  std::span<const tasks::Sample> test_set;
};

// cell(t, u) = one-shot accuracy on u's test set (with u's pool) of the model
// trained on t; the baseline row holds the untrained base model's one-shot
// accuracy per testing task. Throws when adapters_for yields no model.
CrossTaskMatrix cross_task_matrix(
    const std::vector<std::string>& task_ids,
    const std::function<const model::AdaptedModel*(const std::string&)>& adapters_for,
    const model::AdaptedModel& base, const std::map<std::string, TaskEvalContext>& contexts,
    const tasks::Tokenizer& tok, int max_new, const std::string& model_tag,
    const PredictionSink& sink);

}  // namespace secokd::eval
