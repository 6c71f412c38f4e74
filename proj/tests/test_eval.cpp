#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "secokd/eval/eval.hpp"
#include "secokd/numerics/parallel.hpp"
#include "secokd/numerics/rng.hpp"
#include "secokd/tasks/prompt.hpp"
#include "test_support.hpp"

using namespace secokd;
using eval::Difficulty;
using eval::PredictionRecord;
using numerics::Rng;

namespace {

// Scripted model that answers "yes" (marker + answer + stop) for every shot
// count over the uniform-length pool and fixed-length compare queries.
model::AdaptedModel always_yes_model(const tasks::Tokenizer& tok,
                                     const tasks::DemonstrationPool& pool, int max_shots) {
  const auto query = testing::compare_sample(1, 0);
  std::vector<int> script = tok.tokenize("The answer is: yes");
  script.push_back(tok.eoa_id());
  std::vector<testing::ScriptWindow> windows;
  for (int k = 0; k <= max_shots; ++k) {
    std::span<const tasks::Demonstration> demos(pool.demos.data(), static_cast<size_t>(k));
    const int plen = static_cast<int>(tok.tokenize(tasks::format_prompt(demos, query)).size());
    windows.push_back({plen - 1, script});
  }
  return testing::make_position_scripted_model(tok.vocab_size(), 1024, windows);
}

}  // namespace

TEST_CASE("classify_difficulty reproduces the thresholds on all n in 0..8") {
  CHECK(eval::classify_difficulty(8) == Difficulty::Easy);
  CHECK(eval::classify_difficulty(7) == Difficulty::Easy);
  CHECK(eval::classify_difficulty(6) == Difficulty::Easy);
  CHECK(eval::classify_difficulty(5) == Difficulty::Hard);
  CHECK(eval::classify_difficulty(4) == Difficulty::Hard);
  CHECK(eval::classify_difficulty(3) == Difficulty::Hard);
  CHECK(eval::classify_difficulty(2) == Difficulty::Hard);
  CHECK(eval::classify_difficulty(1) == Difficulty::HardStar);
  CHECK(eval::classify_difficulty(0) == Difficulty::HardStar);
  CHECK_THROWS_AS(eval::classify_difficulty(-1), std::invalid_argument);
  CHECK_THROWS_AS(eval::classify_difficulty(9), std::invalid_argument);
}

TEST_CASE("improvement_score: fixtures and bounds") {
  const std::vector<int> a = {3, 5, 7};
  CHECK(eval::improvement_score(a, a, 8) == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<int> n2 = {8, 0};
  const std::vector<int> m2 = {0, 0};
  CHECK(std::fabs(eval::improvement_score(n2, m2, 8) - std::exp(0.5)) < 1e-12);

  const std::vector<int> n1 = {0};
  const std::vector<int> m1 = {8};
  CHECK(std::fabs(eval::improvement_score(n1, m1, 8) - std::exp(-1.0)) < 1e-12);

  CHECK_THROWS_AS(eval::improvement_score(n2, m1, 8), std::invalid_argument);
  CHECK_THROWS_AS(eval::improvement_score(n1, m1, 0), std::invalid_argument);
  const std::vector<int> bad = {9};
  CHECK_THROWS_AS(eval::improvement_score(bad, m1, 8), std::invalid_argument);
}

TEST_CASE("improvement_score: property over random count vectors") {
  Rng rng(31337);
  const double lo = std::exp(-1.0), hi = std::exp(1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const size_t n = 1 + rng.below(12);
    std::vector<int> fin(n), base(n);
    for (size_t i = 0; i < n; ++i) {
      fin[i] = static_cast<int>(rng.below(9));
      base[i] = static_cast<int>(rng.below(9));
    }
    const double is = eval::improvement_score(fin, base, 8);
    CHECK(is >= lo - 1e-12);
    CHECK(is <= hi + 1e-12);

    // Strictly increasing in n_i, strictly decreasing in m_i.
    if (fin[0] < 8) {
      auto fin2 = fin;
      fin2[0] += 1;
      CHECK(eval::improvement_score(fin2, base, 8) > is);
    }
    if (base[0] < 8) {
      auto base2 = base;
      base2[0] += 1;
      CHECK(eval::improvement_score(fin, base2, 8) < is);
    }
  }
}

TEST_CASE("accuracy_at_shots: scripted predictors and the log-replay oracle") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  const auto& spec = reg.get("compare");

  // Test set with known labels; all questions are the same token length.
  std::vector<tasks::Sample> test_set;
  for (int i = 0; i < 10; ++i) {
    test_set.push_back(testing::compare_sample(i, 9 - i));  // yes iff i >= 5
  }

  auto yes_model = always_yes_model(tok, pool, 8);
  std::vector<PredictionRecord> records;
  auto sink = [&records](const PredictionRecord& r) { records.push_back(r); };

  for (int shots : {0, 1, 4, 8}) {
    records.clear();
    const double acc =
        eval::accuracy_at_shots(yes_model, tok, spec, shots, pool, test_set, 32, "yes", sink);
    CHECK(acc == doctest::Approx(0.5));
    // Replaying the persisted per-sample records reproduces the number.
    int correct = 0;
    REQUIRE(records.size() == test_set.size());
    for (size_t i = 0; i < records.size(); ++i) {
      CHECK(records[i].shots == shots);
      CHECK(records[i].prediction == "yes");
      correct += records[i].correct ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / records.size() == doctest::Approx(acc));
  }

  // Restricted to yes-labeled samples the scripted model is always correct.
  std::vector<tasks::Sample> yes_only(test_set.begin() + 5, test_set.end());
  for (int shots : {0, 1, 8}) {
    CHECK(eval::accuracy_at_shots(yes_model, tok, spec, shots, pool, yes_only, 32, "yes",
                                  nullptr) == doctest::Approx(1.0));
  }

  // A model that never emits the marker scores exactly zero.
  auto mute = testing::make_position_scripted_model(tok.vocab_size(), 1024, {});
  CHECK(eval::accuracy_at_shots(mute, tok, spec, 1, pool, test_set, 8, "mute", nullptr) == 0.0);

  CHECK_THROWS_AS(
      eval::accuracy_at_shots(mute, tok, spec, 9, pool, test_set, 8, "mute", nullptr),
      std::invalid_argument);
}

TEST_CASE("accuracy_at_shots: worker-count independent") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  const auto& spec = reg.get("compare");
  std::vector<tasks::Sample> test_set;
  for (int i = 0; i < 9; ++i) test_set.push_back(testing::compare_sample(i, 8 - i));
  auto yes_model = always_yes_model(tok, pool, 2);

  const int saved = numerics::worker_count();
  std::vector<std::string> preds1, preds2;
  numerics::set_worker_count(1);
  double a1 = eval::accuracy_at_shots(yes_model, tok, spec, 1, pool, test_set, 32, "t",
                                      [&](const PredictionRecord& r) { preds1.push_back(r.sample_ref + r.prediction); });
  numerics::set_worker_count(4);
  double a2 = eval::accuracy_at_shots(yes_model, tok, spec, 1, pool, test_set, 32, "t",
                                      [&](const PredictionRecord& r) { preds2.push_back(r.sample_ref + r.prediction); });
  numerics::set_worker_count(saved);
  CHECK(a1 == a2);
  CHECK(preds1 == preds2);
}

TEST_CASE("count_positive_demos: scripted extremes and probe-oracle agreement") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  const auto& spec = reg.get("compare");

  auto yes_sample = testing::compare_sample(7, 1);
  auto no_sample = testing::compare_sample(2, 6);
  auto yes_model = always_yes_model(tok, pool, 1);

  CHECK(eval::count_positive_demos(yes_model, tok, spec, yes_sample, pool, 32) == 8);
  CHECK(eval::count_positive_demos(yes_model, tok, spec, no_sample, pool, 32) == 0);

  auto mute = testing::make_position_scripted_model(tok.vocab_size(), 1024, {});
  CHECK(eval::count_positive_demos(mute, tok, spec, yes_sample, pool, 8) == 0);

  // Batch fan-out agrees with the one-sample op, and the per-demo records
  // reproduce the counts.
  std::vector<tasks::Sample> samples = {yes_sample, no_sample, testing::compare_sample(9, 0)};
  std::vector<PredictionRecord> records;
  auto counts = eval::count_positive_demos_all(yes_model, tok, spec, samples, pool, 32, "t",
                                               [&](const PredictionRecord& r) { records.push_back(r); });
  REQUIRE(counts.size() == 3);
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 0);
  CHECK(counts[2] == 8);
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(counts[i] ==
          eval::count_positive_demos(yes_model, tok, spec, samples[i], pool, 32));
  }
  REQUIRE(records.size() == 24);
  std::vector<int> replay(3, 0);
  for (const auto& r : records) {
    REQUIRE(r.demo_index >= 0);
    REQUIRE(r.demo_index < 8);
    if (r.correct) {
      const size_t idx = r.sample_ref.find("/test/");
      replay[static_cast<size_t>(std::stoi(r.sample_ref.substr(idx + 6)))]++;
    }
  }
  for (size_t i = 0; i < 3; ++i) CHECK(replay[i] == counts[i]);
}

TEST_CASE("difficulty profile partitions the test set") {
  const std::vector<int> counts = {8, 6, 5, 2, 1, 0, 7, 3};
  auto profile = eval::profile_from_counts(counts);
  CHECK(profile.easy == 3);
  CHECK(profile.hard == 3);
  CHECK(profile.hard_star == 2);
  CHECK(profile.easy + profile.hard + profile.hard_star == static_cast<int>(counts.size()));
}

TEST_CASE("cross_task_matrix: base-vs-base deltas vanish; diagonal matches sweeps") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  const auto& spec = reg.get("compare");

  std::vector<tasks::Sample> test_set;
  for (int i = 0; i < 8; ++i) test_set.push_back(testing::compare_sample(i, 7 - i));

  auto yes_model = always_yes_model(tok, pool, 1);

  const std::vector<std::string> task_ids = {"compare"};
  std::map<std::string, eval::TaskEvalContext> contexts;
  contexts["compare"] = eval::TaskEvalContext{&spec, &pool, test_set};

  auto matrix = eval::cross_task_matrix(
      task_ids, [&](const std::string&) { return &yes_model; }, yes_model, contexts, tok, 32,
      "self", nullptr);
  CHECK(matrix.delta(0, 0) == 0.0);

  const double sweep_value =
      eval::accuracy_at_shots(yes_model, tok, spec, 1, pool, test_set, 32, "x", nullptr);
  CHECK(matrix.cell(0, 0) == sweep_value);

  CHECK_THROWS_AS(eval::cross_task_matrix(
                      task_ids, [](const std::string&) -> const model::AdaptedModel* { return nullptr; },
                      yes_model, contexts, tok, 32, "self", nullptr),
                  std::invalid_argument);
}
