#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>

#include "secokd/tasks/io.hpp"
#include "secokd/tasks/prompt.hpp"
#include "secokd/tasks/task.hpp"
#include "secokd/tasks/tokenizer.hpp"

using namespace secokd::tasks;

namespace {

// Independent re-parse oracles, deliberately written against the question
// text alone.
int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

std::string coin_flip_oracle(const std::string& question) {
  return count_occurrences(question, " flips the coin.") % 2 == 0 ? "yes" : "no";
}

std::string parity_oracle(const std::string& question) {
  int ones = 0;
  const auto start = question.find("string ") + 7;
  for (size_t i = start; i < question.size(); ++i) {
    if (question[i] == '1') ++ones;
  }
  return ones % 2 == 0 ? "even" : "odd";
}

std::string mod_add_oracle(const std::string& question) {
  int a = 0, b = 0, m = 0;
  std::sscanf(question.c_str(), "What is %d plus %d modulo %d?", &a, &b, &m);
  return std::to_string((a + b) % m);
}

std::string compare_oracle(const std::string& question) {
  int a = 0, b = 0;
  std::sscanf(question.c_str(), "Is %d greater than %d?", &a, &b);
  return a > b ? "yes" : "no";
}

}  // namespace

TEST_CASE("coin flip: parity fixtures") {
  TaskRegistry reg;
  const auto& spec = reg.get("coin_flip");

  Sample two_flips;
  two_flips.task_id = "coin_flip";
  two_flips.question =
      "A coin is heads up. Anna flips the coin. Ben flips the coin. Is the coin still heads up?";
  two_flips.label = "yes";
  const std::string r = spec.rationale(two_flips);
  CHECK(r.find("Anna flips the coin. The coin is now tails up.") != std::string::npos);
  CHECK(r.find("Ben flips the coin. The coin is now heads up.") != std::string::npos);
  CHECK(r.find("So the coin is still heads up.") != std::string::npos);

  Sample one_of_three;
  one_of_three.task_id = "coin_flip";
  one_of_three.question =
      "A coin is heads up. Anna does not flip the coin. Ben flips the coin. Carla does not flip "
      "the coin. Is the coin still heads up?";
  one_of_three.label = "no";
  const std::string r2 = spec.rationale(one_of_three);
  CHECK(r2.find("So the coin is not heads up.") != std::string::npos);

  // A label inconsistent with the question is a logic error.
  one_of_three.label = "yes";
  CHECK_THROWS_AS(spec.rationale(one_of_three), std::logic_error);
}

TEST_CASE("coin flip: 10000 generated labels match the re-parse oracle") {
  auto samples = gen_coin_flip(123, {2, 4}, 10000);
  REQUIRE(samples.size() == 10000);
  int yes = 0;
  for (const auto& s : samples) {
    CHECK(s.label == coin_flip_oracle(s.question));
    yes += s.label == "yes" ? 1 : 0;
  }
  // Flip counts are Binomial(k, 1/2), so both labels occur in bulk.
  CHECK(yes > 3000);
  CHECK(yes < 7000);
}

TEST_CASE("coin flip: generator validates its range") {
  CHECK_THROWS_AS(gen_coin_flip(1, {3, 2}, 5), std::invalid_argument);
  CHECK_THROWS_AS(gen_coin_flip(1, {0, 2}, 5), std::invalid_argument);
  CHECK_THROWS_AS(gen_coin_flip(1, {1, 9}, 5), std::invalid_argument);
  CHECK_THROWS_AS(gen_coin_flip(1, {2, 3}, 0), std::invalid_argument);
}

TEST_CASE("synthetic tasks: labels verified by direct recomputation") {
  TaskParams params;
  for (const auto& kind : {"parity", "mod_add", "compare"}) {
    auto samples = gen_synthetic_task(kind, 7, 2000, params);
    for (const auto& s : samples) {
      if (s.task_id == "parity") CHECK(s.label == parity_oracle(s.question));
      if (s.task_id == "mod_add") CHECK(s.label == mod_add_oracle(s.question));
      if (s.task_id == "compare") CHECK(s.label == compare_oracle(s.question));
    }
  }
  CHECK_THROWS_AS(gen_synthetic_task("mystery", 7, 5, params), std::invalid_argument);
}

TEST_CASE("synthetic tasks: fixture semantics") {
  TaskRegistry reg;
  Sample parity_fixture;
  parity_fixture.task_id = "parity";
  parity_fixture.question = "What is the parity of the bit string 1 1 0 1?";
  parity_fixture.label = "odd";
  const std::string r = reg.get("parity").rationale(parity_fixture);
  CHECK(r.find("The number of ones is 3.") != std::string::npos);
  CHECK(r.find("So the parity is odd.") != std::string::npos);

  Sample mod_fixture;
  mod_fixture.task_id = "mod_add";
  mod_fixture.question = "What is 7 plus 8 modulo 10?";
  mod_fixture.label = "5";
  const std::string mr = reg.get("mod_add").rationale(mod_fixture);
  CHECK(mr == "7 plus 8 equals 15. 15 modulo 10 equals 5.");
}

TEST_CASE("pool: deterministic, unique questions, extraction round-trip") {
  TaskRegistry reg;
  for (const auto& task : reg.ids()) {
    auto p1 = build_pool(reg, task, 99);
    auto p2 = build_pool(reg, task, 99);
    REQUIRE(p1.size() == kPoolSize);
    std::set<std::string> questions;
    for (int i = 0; i < kPoolSize; ++i) {
      CHECK(p1.demos[static_cast<size_t>(i)].question == p2.demos[static_cast<size_t>(i)].question);
      CHECK_FALSE(p1.demos[static_cast<size_t>(i)].rationale.empty());
      questions.insert(p1.demos[static_cast<size_t>(i)].question);
    }
    CHECK(static_cast<int>(questions.size()) == kPoolSize);

    // g() recovers each demo's rationale and answer unchanged from its
    // formatted supervision text.
    const auto& answers = reg.get(task).answer_set;
    for (const auto& d : p1.demos) {
      auto ex = extract_answer(supervision_text(d.rationale, d.answer), answers);
      REQUIRE(ex.has_value());
      CHECK(ex->rationale == d.rationale);
      CHECK(ex->answer == d.answer);
    }
  }
}

TEST_CASE("task data: pairwise disjoint splits and deterministic rebuild") {
  TaskRegistry reg;
  for (const auto& task : reg.ids()) {
    auto data = build_task_data(reg, task, 42, 64, 32);
    CHECK(data.train.size() == 64);
    CHECK(data.test.size() == 32);
    std::set<std::string> pool_q, train_q, test_q;
    for (const auto& d : data.pool.demos) pool_q.insert(d.question);
    for (const auto& s : data.train) {
      CHECK(s.split == "train");
      train_q.insert(s.question);
    }
    for (const auto& s : data.test) {
      CHECK(s.split == "test");
      test_q.insert(s.question);
    }
    CHECK(train_q.size() == data.train.size());
    CHECK(test_q.size() == data.test.size());
    for (const auto& q : train_q) {
      CHECK(pool_q.count(q) == 0);
      CHECK(test_q.count(q) == 0);
    }
    for (const auto& q : test_q) CHECK(pool_q.count(q) == 0);

    auto again = build_task_data(reg, task, 42, 64, 32);
    CHECK(again.train[0].question == data.train[0].question);
    CHECK(again.test.back().question == data.test.back().question);
  }
}

TEST_CASE("format_prompt: block structure") {
  TaskRegistry reg;
  auto data = build_task_data(reg, "coin_flip", 5, 4, 2);
  const Sample& query = data.test[0];

  const std::string zero = format_prompt({}, query);
  CHECK(count_occurrences(zero, "Question:") == 1);
  CHECK(zero.find("\nAnswer:") == zero.size() - 8);

  for (int k = 1; k <= kPoolSize; ++k) {
    std::span<const Demonstration> demos(data.pool.demos.data(), static_cast<size_t>(k));
    const std::string prompt = format_prompt(demos, query);
    CHECK(count_occurrences(prompt, "Question:") == k + 1);
    CHECK(count_occurrences(prompt, std::string(kAnswerMarker)) == k);
  }
}

TEST_CASE("extract_answer: fixtures") {
  const std::vector<std::string> yes_no = {"yes", "no"};

  auto ex = extract_answer("the state is heads. The answer is: yes", yes_no);
  REQUIRE(ex.has_value());
  CHECK(ex->rationale == "the state is heads.");
  CHECK(ex->answer == "yes");

  CHECK_FALSE(extract_answer("no marker at all here", yes_no).has_value());
  CHECK_FALSE(extract_answer("The answer is: maybe definitely", yes_no).has_value());

  // Marker twice within one block: the last occurrence wins.
  auto ex2 = extract_answer(
      "Ben flips the coin. The answer is: no is wrong. Try again. The answer is: yes", yes_no);
  REQUIRE(ex2.has_value());
  CHECK(ex2->rationale == "Ben flips the coin. The answer is: no is wrong. Try again.");
  CHECK(ex2->answer == "yes");

  // Run-on generation beyond a blank line or an echoed block is discarded.
  auto ex3 = extract_answer(
      "state is tails. The answer is: no\n\nQuestion: A coin is heads up. The answer is: yes",
      yes_no);
  REQUIRE(ex3.has_value());
  CHECK(ex3->answer == "no");
  auto ex4 = extract_answer("rationale without end\n\nThe answer is: yes", yes_no);
  CHECK_FALSE(ex4.has_value());

  // Non-canonical tokens after the marker are skipped.
  auto ex5 = extract_answer("so. The answer is: maybe yes", yes_no);
  REQUIRE(ex5.has_value());
  CHECK(ex5->answer == "yes");
}

TEST_CASE("tokenizer: round-trips every producible corpus string") {
  TaskRegistry reg;
  Tokenizer tok = reg.build_tokenizer();
  CHECK(tok.vocab_size() < 200);

  for (const auto& task : reg.ids()) {
    auto data = build_task_data(reg, task, 31, 48, 16);
    std::vector<std::string> corpus;
    for (const auto& d : data.pool.demos) {
      corpus.push_back(d.question);
      corpus.push_back(d.rationale);
      corpus.push_back(supervision_text(d.rationale, d.answer));
    }
    const auto& spec = reg.get(task);
    for (const auto& s : data.train) {
      corpus.push_back(s.question);
      corpus.push_back(spec.rationale(s));
    }
    std::span<const Demonstration> all_demos(data.pool.demos.data(),
                                             data.pool.demos.size());
    for (const auto& s : data.test) {
      corpus.push_back(format_prompt({}, s));
      corpus.push_back(format_prompt(all_demos, s));
    }
    for (const auto& text : corpus) {
      const auto ids = tok.tokenize(text);
      CHECK(tok.detokenize(ids) == text);
    }
  }

  CHECK_THROWS_AS(tok.tokenize("entirely unknownword"), std::invalid_argument);
}

TEST_CASE("tokenizer: specials and determinism") {
  TaskRegistry reg;
  Tokenizer a = reg.build_tokenizer();
  Tokenizer b = reg.build_tokenizer();
  CHECK(a.vocab_size() == b.vocab_size());
  CHECK(a.pad_id() == b.pad_id());
  CHECK(a.eoa_id() == b.eoa_id());
  CHECK(a.token(a.eoa_id()) == Tokenizer::kEndOfAnswer);
  for (int i = 0; i < a.vocab_size(); ++i) CHECK(a.token(i) == b.token(i));
}

TEST_CASE("prompt length audit: 8-shot prompts with generation room fit the context") {
  TaskRegistry reg;
  Tokenizer tok = reg.build_tokenizer();
  const int max_seq_len = 1024;
  const int max_new = 128;
  for (const auto& task : reg.ids()) {
    auto data = build_task_data(reg, task, 17, 32, 32);
    const int longest = longest_prompt_tokens(tok, data.pool, data.test, kPoolSize);
    CHECK(longest <= max_seq_len - max_new);
  }
}

TEST_CASE("samples and pool files round-trip") {
  TaskRegistry reg;
  auto data = build_task_data(reg, "mod_add", 8, 6, 3);
  const auto dir = std::filesystem::temp_directory_path();
  const auto samples_path = (dir / "secokd_samples_test.jsonl").string();
  const auto pool_path = (dir / "secokd_pool_test.json").string();

  std::vector<Sample> all = data.train;
  all.insert(all.end(), data.test.begin(), data.test.end());
  write_samples_jsonl(samples_path, all);
  auto rt = read_samples_jsonl(samples_path);
  REQUIRE(rt.size() == all.size());
  for (size_t i = 0; i < all.size(); ++i) {
    CHECK(rt[i].task_id == all[i].task_id);
    CHECK(rt[i].question == all[i].question);
    CHECK(rt[i].label == all[i].label);
    CHECK(rt[i].split == all[i].split);
  }

  write_pool_json(pool_path, data.pool);
  auto pool = read_pool_json(pool_path);
  REQUIRE(pool.size() == data.pool.size());
  for (int i = 0; i < pool.size(); ++i) {
    CHECK(pool.demos[static_cast<size_t>(i)].rationale ==
          data.pool.demos[static_cast<size_t>(i)].rationale);
  }
  std::filesystem::remove(samples_path);
  std::filesystem::remove(pool_path);
}
