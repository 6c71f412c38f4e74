#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "secokd/numerics/rng.hpp"
#include "secokd/tasks/tokenizer.hpp"

namespace secokd::tasks {

struct Sample {
  std::string task_id;
  std::string question;
  std::string label;  // canonical answer text
  std::string split;  // "train" | "test" | "pool"
};

struct Demonstration {
  std::string question;
  std::string rationale;
  std::string answer;
};

struct DemonstrationPool {
  std::string task_id;
  std::vector<Demonstration> demos;

  int size() const { return static_cast<int>(demos.size()); }
};

inline constexpr int kPoolSize = 8;

// Generation knobs for the synthetic tasks.
struct TaskParams {
  std::pair<int, int> coin_flip_people = {2, 3};
  std::pair<int, int> parity_bits = {5, 10};
  int mod_add_operand_max = 29;
  int mod_base = 10;
  int compare_operand_max = 29;
};

struct TaskSpec {
  std::string id;
  std::vector<std::string> answer_set;
  std::function<Sample(numerics::Rng&)> draw;
  // Templated step-by-step rationale derived from the question text; ends
  // before the answer marker.
  std::function<std::string(const Sample&)> rationale;
  std::vector<std::string> vocabulary;  // closed word set this task can emit
};

class TaskRegistry {
 public:
  explicit TaskRegistry(TaskParams params = {});

  const TaskSpec& get(const std::string& task_id) const;  // throws on unknown id
  const std::vector<std::string>& ids() const { return ids_; }
  const TaskParams& params() const { return params_; }

  // Tokenizer over the union of task vocabularies plus prompt structure.
  Tokenizer build_tokenizer() const;

 private:
  TaskParams params_;
  std::vector<std::string> ids_;
  std::vector<TaskSpec> specs_;
};

// One coin-flip sample: k people in the given range each flip or leave the
// coin; label is "yes" iff the flip count is even. Draws are iid under the
// seed; questions may repeat.
std::vector<Sample> gen_coin_flip(std::uint64_t seed, std::pair<int, int> n_flippers_range,
                                  int count, const TaskParams& params = {});

// kind: "parity" | "mod_add" | "compare".
std::vector<Sample> gen_synthetic_task(const std::string& kind, std::uint64_t seed, int count,
                                       const TaskParams& params = {});

// Eight gold demonstrations with templated rationales, unique questions.
DemonstrationPool build_pool(const TaskRegistry& registry, const std::string& task_id,
                             std::uint64_t seed);

// Pool + train/test splits with pairwise-disjoint question sets.
struct TaskData {
  DemonstrationPool pool;
  std::vector<Sample> train;
  std::vector<Sample> test;
};
TaskData build_task_data(const TaskRegistry& registry, const std::string& task_id,
                         std::uint64_t seed, int n_train, int n_test);

// Longest 8-shot prompt, in tokens, over the given query samples.
int longest_prompt_tokens(const Tokenizer& tokenizer, const DemonstrationPool& pool,
                          std::span<const Sample> queries, int shots);

}  // namespace secokd::tasks
