#include "secokd/eval/eval.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "secokd/model/infer.hpp"
#include "secokd/numerics/parallel.hpp"
#include "secokd/tasks/prompt.hpp"

namespace secokd::eval {

using model::AdaptedModel;
using tasks::Demonstration;
using tasks::DemonstrationPool;
using tasks::Sample;
using tasks::TaskSpec;
using tasks::Tokenizer;

namespace {

struct Prediction {
  std::string answer;  // empty on extraction failure
  bool correct = false;
};

Prediction predict(const AdaptedModel& m, const Tokenizer& tok, const TaskSpec& spec,
                   std::span<const Demonstration> demos, const Sample& sample, int max_new) {
  const std::vector<int> prompt = tok.tokenize(tasks::format_prompt(demos, sample));
  const std::vector<int> generated = model::generate(m, prompt, max_new, tok.eoa_id());
  const std::string text = tok.detokenize(generated);
  Prediction p;
  if (auto ex = tasks::extract_answer(text, spec.answer_set)) {
    p.answer = ex->answer;
    p.correct = ex->answer == sample.label;
  }
  return p;
}

std::string sample_ref(const Sample& s, size_t index) {
  return s.task_id + "/" + (s.split.empty() ? "test" : s.split) + "/" + std::to_string(index);
}

}  // namespace

double accuracy_at_shots(const AdaptedModel& m, const Tokenizer& tok, const TaskSpec& spec,
                         int shots, const DemonstrationPool& pool,
                         std::span<const Sample> test_set, int max_new,
                         const std::string& model_tag, const PredictionSink& sink) {
  if (shots < 0 || shots > pool.size()) {
    throw std::invalid_argument("accuracy_at_shots: shots " + std::to_string(shots) +
                                " outside [0, pool size " + std::to_string(pool.size()) + "]");
  }
  if (test_set.empty()) throw std::invalid_argument("accuracy_at_shots: empty test set");
  std::span<const Demonstration> demos(pool.demos.data(), static_cast<size_t>(shots));

  std::vector<Prediction> predictions(test_set.size());
  numerics::parallel_for(static_cast<std::int64_t>(test_set.size()),
                         [&](std::int64_t begin, std::int64_t end) {
                           for (std::int64_t i = begin; i < end; ++i) {
                             predictions[static_cast<size_t>(i)] = predict(
                                 m, tok, spec, demos, test_set[static_cast<size_t>(i)], max_new);
                           }
                         });

  int correct = 0;
  for (size_t i = 0; i < test_set.size(); ++i) {
    correct += predictions[i].correct ? 1 : 0;
    if (sink) {
      PredictionRecord rec;
      rec.model_tag = model_tag;
      rec.task = spec.id;
      rec.shots = shots;
      rec.sample_ref = sample_ref(test_set[i], i);
      rec.prediction = predictions[i].answer;
      rec.correct = predictions[i].correct;
      sink(rec);
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

ShotSweepResult sweep_shots(const AdaptedModel& m, const Tokenizer& tok, const TaskSpec& spec,
                            const DemonstrationPool& pool, std::span<const Sample> test_set,
                            int max_shots, int max_new, const std::string& model_tag,
                            std::uint64_t seed, const PredictionSink& sink) {
  ShotSweepResult result;
  result.task_id = spec.id;
  result.model_tag = model_tag;
  result.n_test = static_cast<int>(test_set.size());
  result.seed = seed;
  for (int shots = 0; shots <= max_shots; ++shots) {
    result.accuracy_by_shot[shots] =
        accuracy_at_shots(m, tok, spec, shots, pool, test_set, max_new, model_tag, sink);
  }
  return result;
}

int count_positive_demos(const AdaptedModel& m, const Tokenizer& tok, const TaskSpec& spec,
                         const Sample& sample, const DemonstrationPool& pool, int max_new) {
  if (pool.size() != tasks::kPoolSize) {
    throw std::invalid_argument("count_positive_demos: pool must hold " +
                                std::to_string(tasks::kPoolSize) + " demonstrations");
  }
  int positive = 0;
  for (int k = 0; k < pool.size(); ++k) {
    std::span<const Demonstration> one(&pool.demos[static_cast<size_t>(k)], 1);
    if (predict(m, tok, spec, one, sample, max_new).correct) ++positive;
  }
  return positive;
}

std::vector<int> count_positive_demos_all(const AdaptedModel& m, const Tokenizer& tok,
                                          const TaskSpec& spec, std::span<const Sample> test_set,
                                          const DemonstrationPool& pool, int max_new,
                                          const std::string& model_tag,
                                          const PredictionSink& sink) {
  struct DemoProbe {
    std::string answer;
    bool correct = false;
  };
  std::vector<std::array<DemoProbe, tasks::kPoolSize>> probes(test_set.size());
  numerics::parallel_for(
      static_cast<std::int64_t>(test_set.size()), [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
          for (int k = 0; k < pool.size(); ++k) {
            std::span<const Demonstration> one(&pool.demos[static_cast<size_t>(k)], 1);
            const Prediction p =
                predict(m, tok, spec, one, test_set[static_cast<size_t>(i)], max_new);
            probes[static_cast<size_t>(i)][static_cast<size_t>(k)] = {p.answer, p.correct};
          }
        }
      });

  std::vector<int> counts(test_set.size(), 0);
  for (size_t i = 0; i < test_set.size(); ++i) {
    for (int k = 0; k < pool.size(); ++k) {
      const auto& probe = probes[i][static_cast<size_t>(k)];
      counts[i] += probe.correct ? 1 : 0;
      if (sink) {
        PredictionRecord rec;
        rec.model_tag = model_tag;
        rec.task = spec.id;
        rec.demo_index = k;
        rec.sample_ref = sample_ref(test_set[i], i);
        rec.prediction = probe.answer;
        rec.correct = probe.correct;
        sink(rec);
      }
    }
  }
  return counts;
}

Difficulty classify_difficulty(int n) {
  if (n < 0 || n > tasks::kPoolSize) {
    throw std::invalid_argument("classify_difficulty: n " + std::to_string(n) +
                                " outside [0, " + std::to_string(tasks::kPoolSize) + "]");
  }
  if (n >= 6) return Difficulty::Easy;
  if (n > 1) return Difficulty::Hard;
  return Difficulty::HardStar;
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Hard: return "hard";
    case Difficulty::HardStar: return "hard*";
  }
  throw std::logic_error("difficulty_name: bad class");
}

DifficultyProfile profile_from_counts(std::span<const int> counts) {
  DifficultyProfile p;
  p.positive_counts.assign(counts.begin(), counts.end());
  for (int n : counts) {
    switch (classify_difficulty(n)) {
      case Difficulty::Easy: ++p.easy; break;
      case Difficulty::Hard: ++p.hard; break;
      case Difficulty::HardStar: ++p.hard_star; break;
    }
  }
  return p;
}

double improvement_score(std::span<const int> finetuned_counts, std::span<const int> base_counts,
                         int pool_size) {
  if (finetuned_counts.size() != base_counts.size() || finetuned_counts.empty()) {
    throw std::invalid_argument("improvement_score: count vectors must align and be nonempty");
  }
  if (pool_size <= 0) throw std::invalid_argument("improvement_score: pool_size must be > 0");
  double sum = 0.0;
  for (size_t i = 0; i < finetuned_counts.size(); ++i) {
    const int n = finetuned_counts[i];
    const int mcount = base_counts[i];
    if (n < 0 || n > pool_size || mcount < 0 || mcount > pool_size) {
      throw std::invalid_argument("improvement_score: counts must sit in [0, pool_size]");
    }
    sum += static_cast<double>(n - mcount) / static_cast<double>(pool_size);
  }
  return std::exp(sum / static_cast<double>(finetuned_counts.size()));
}

CrossTaskMatrix cross_task_matrix(
    const std::vector<std::string>& task_ids,
    const std::function<const AdaptedModel*(const std::string&)>& adapters_for,
    const AdaptedModel& base, const std::map<std::string, TaskEvalContext>& contexts,
    const Tokenizer& tok, int max_new, const std::string& model_tag,
    const PredictionSink& sink) {
  CrossTaskMatrix matrix;
  matrix.model_tag = model_tag;
  matrix.tasks = task_ids;
  matrix.cells.assign(task_ids.size() * task_ids.size(), 0.0);
  matrix.baseline.assign(task_ids.size(), 0.0);

  for (size_t u = 0; u < task_ids.size(); ++u) {
    const auto& ctx = contexts.at(task_ids[u]);
    matrix.baseline[u] = accuracy_at_shots(base, tok, *ctx.spec, 1, *ctx.pool, ctx.test_set,
                                           max_new, "base", sink);
  }
  for (size_t t = 0; t < task_ids.size(); ++t) {
    const AdaptedModel* trained = adapters_for(task_ids[t]);
    if (!trained) {
      throw std::invalid_argument("cross_task_matrix: no trained model for task '" +
                                  task_ids[t] + "'");
    }
    for (size_t u = 0; u < task_ids.size(); ++u) {
      const auto& ctx = contexts.at(task_ids[u]);
      matrix.cells[t * task_ids.size() + u] =
          accuracy_at_shots(*trained, tok, *ctx.spec, 1, *ctx.pool, ctx.test_set, max_new,
                            model_tag + "[train=" + task_ids[t] + "]", sink);
    }
  }
  return matrix;
}

}  // namespace secokd::eval
