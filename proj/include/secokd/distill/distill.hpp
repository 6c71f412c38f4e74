#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "secokd/model/model.hpp"
#include "secokd/numerics/optim.hpp"
#include "secokd/numerics/rng.hpp"
#include "secokd/tasks/prompt.hpp"
#include "secokd/tasks/task.hpp"
#include "secokd/tasks/tokenizer.hpp"

namespace secokd::distill {

// Extracted rationale/answer supervision harvested from the 8-shot teacher.
struct TeacherOutput {
  std::string sample_ref;
  std::string rationale;
  std::string answer;
  std::vector<int> supervision_ids;  // tokenize(rationale + marker + answer) + <eoa>
  bool teacher_correct = false;
};

struct TrainingExample {
  std::vector<int> prefix_ids;       // formatted demos + query, ending with "Answer:"
  std::vector<int> supervision_ids;  // tokens the loss covers
  int n_demos_used = 0;
};

enum class StrategyMode { SeCoKDS, SeCoKDM, SFT };

struct StrategyConfig {
  StrategyMode mode = StrategyMode::SeCoKDS;
  std::pair<int, int> m_range = {1, 4};  // SeCoKD-M only
  bool keep_teacher_incorrect = true;
};

std::string strategy_tag(StrategyMode mode);                // "SeCoKD-S" | "SeCoKD-M" | "SFT"
StrategyMode strategy_from_string(const std::string& name);  // "secokd-s" | "secokd-m" | "sft"

std::vector<int> make_supervision_ids(const tasks::Tokenizer& tok, const std::string& rationale,
                                      const std::string& answer);

// Runs the 8-shot teacher on one sample and extracts its supervision.
// Returns nullopt on extraction failure; the caller drops the sample.
std::optional<TeacherOutput> teacher_generate(const model::AdaptedModel& teacher,
                                              const tasks::Tokenizer& tok,
                                              const tasks::DemonstrationPool& pool,
                                              const tasks::Sample& sample,
                                              std::span<const std::string> answer_set,
                                              int max_new, const std::string& sample_ref);

// SeCoKD-S: one uniform demo. SeCoKD-M: m ~ uniform(m_range), then m distinct
// demos without replacement, pool order preserved. SFT: the whole pool.
std::vector<tasks::Demonstration> sample_demos(const tasks::DemonstrationPool& pool,
                                               const StrategyConfig& strategy,
                                               numerics::Rng& rng);

// Prefix from the demo subset + query; nullopt when prefix + supervision
// would overflow the context (callers count the drop).
std::optional<TrainingExample> build_student_example(std::span<const tasks::Demonstration> subset,
                                                     const tasks::Sample& sample,
                                                     const TeacherOutput& supervision,
                                                     const tasks::Tokenizer& tok,
                                                     int max_seq_len);

// Mean over the batch of the per-example token-sum negative log-likelihood of
// the supervision given the prefix; prefix positions carry no loss.
double kd_loss(const model::AdaptedModel& student, std::span<const TrainingExample> batch);

// Harvest file: one TeacherOutput per line, resumable input for training.
void write_harvest_jsonl(const std::string& path, std::span<const TeacherOutput> outputs);
std::vector<TeacherOutput> read_harvest_jsonl(const std::string& path,
                                              const tasks::Tokenizer& tok);

struct TrainHyper {
  numerics::AdamConfig adam;
  int batch_size = 2;
  int epochs = 3;
};

struct TrainStepLog {
  std::int64_t step = 0;
  double loss = 0.0;  // this example's token-sum NLL at that step
  double lr = 0.0;
  int n_demos_used = 0;
  int sample_index = -1;  // in-memory only; the log file keeps the four fields above
};

struct TrainResult {
  std::vector<TrainStepLog> log;
  std::int64_t steps = 0;
  int dropped_overlength = 0;
  double best_metric = -1.0;
  int best_epoch = -1;  // -1 when no eval callback ran
};

// Periodic test metric for best-checkpoint selection; higher is better.
using EvalCallback = std::function<double(const model::AdaptedModel&)>;

// Sequence-level KD: per epoch and sample, draws a fresh demo subset, builds
// the example from the harvested supervision, and applies one Adam step per
// batch to the adapters. Ends with the best-metric adapters when a callback
// is given, otherwise the final ones.
TrainResult train_secokd(model::AdaptedModel& student, std::span<const tasks::Sample> samples,
                         std::span<const TeacherOutput> harvest,
                         const tasks::DemonstrationPool& pool, const tasks::Tokenizer& tok,
                         const StrategyConfig& strategy, const TrainHyper& hyper,
                         std::uint64_t seed, const EvalCallback& test_metric);

// Baseline: identical loop, but the prefix always embeds the whole pool and
// the supervision is the task's standalone templated rationale. Pass the same
// samples, hyper, and seed as the KD run to match its data volume and order.
TrainResult train_sft(model::AdaptedModel& student, std::span<const tasks::Sample> samples,
                      const tasks::TaskSpec& spec, const tasks::DemonstrationPool& pool,
                      const tasks::Tokenizer& tok, const TrainHyper& hyper, std::uint64_t seed,
                      const EvalCallback& test_metric);

// The same loop over prebuilt examples, driving whatever parameters the model
// currently marks trainable. Base pretraining runs through this.
TrainResult train_on_examples(model::AdaptedModel& m, std::span<const TrainingExample> examples,
                              const TrainHyper& hyper, std::uint64_t seed,
                              const EvalCallback& test_metric);

}  // namespace secokd::distill
