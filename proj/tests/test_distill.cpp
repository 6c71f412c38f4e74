#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "secokd/distill/distill.hpp"
#include "secokd/model/infer.hpp"
#include "secokd/model/tape.hpp"
#include "secokd/tasks/prompt.hpp"
#include "test_support.hpp"

using namespace secokd;
using distill::StrategyConfig;
using distill::StrategyMode;
using distill::TeacherOutput;
using distill::TrainingExample;
using numerics::Rng;
using numerics::Tensor;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// Model with constant logits z = (1, 0, -1) at every position over vocab 3.
// All weights zero, final layer-norm bias e0, head rows (1, 0, -1) on
// channel 0.
model::AdaptedModel vocab3_fixed_logits_model() {
  model::TransformerConfig cfg;
  cfg.vocab_size = 3;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 8;
  cfg.max_seq_len = 16;
  auto m = model::init_base_model(cfg, 0);
  for (auto& p : m.base) {
    for (double& v : p.tensor.data) v = 0.0;
    if (p.name.find(".gain") != std::string::npos) {
      for (double& v : p.tensor.data) v = 1.0;
    }
  }
  m.find("ln_f.bias")->data[0] = 1.0;
  auto* head = m.find("lm_head");
  head->at(0, 0) = 1.0;
  head->at(1, 0) = 0.0;
  head->at(2, 0) = -1.0;
  model::set_base_trainable(m, false);
  return m;
}

model::AdaptedModel uniform_logits_model(int vocab) {
  model::TransformerConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 8;
  cfg.max_seq_len = 64;
  auto m = model::init_base_model(cfg, 0);
  for (auto& p : m.base) {
    for (double& v : p.tensor.data) v = 0.0;
    if (p.name.find(".gain") != std::string::npos) {
      for (double& v : p.tensor.data) v = 1.0;
    }
  }
  model::set_base_trainable(m, false);
  return m;
}

}  // namespace

TEST_CASE("kd_loss: hand-computed vocab-3 oracle") {
  auto m = vocab3_fixed_logits_model();
  // Every logits row is exactly (1, 0, -1).
  Tensor logits = model::forward(m, std::vector<int>{0, 1});
  CHECK(logits.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(logits.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(logits.at(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));

  TrainingExample ex;
  ex.prefix_ids = {0, 1};
  ex.supervision_ids = {0, 2};
  ex.n_demos_used = 0;

  // Softmax arithmetic done by hand: lse = ln(e^1 + e^0 + e^-1),
  // loss = (lse - z[0]) + (lse - z[2]).
  const double lse = std::log(std::exp(1.0) + 1.0 + std::exp(-1.0));
  const double expected = (lse - 1.0) + (lse + 1.0);
  CHECK(std::fabs(distill::kd_loss(m, std::vector<TrainingExample>{ex}) - expected) < 1e-6);

  // Mean semantics: a batch of two identical examples has the same loss.
  std::vector<TrainingExample> pair = {ex, ex};
  CHECK(distill::kd_loss(m, pair) ==
        doctest::Approx(distill::kd_loss(m, std::vector<TrainingExample>{ex})).epsilon(1e-12));
}

TEST_CASE("kd_loss: uniform-logit student gives L_r * ln V") {
  const int vocab = 7;
  auto m = uniform_logits_model(vocab);
  TrainingExample ex;
  ex.prefix_ids = {1, 2, 3};
  ex.supervision_ids = {4, 5, 6, 1, 2};
  const double expected = 5.0 * std::log(static_cast<double>(vocab));
  CHECK(distill::kd_loss(m, std::vector<TrainingExample>{ex}) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("kd_loss equals minus mean summed log_prob_of") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    model::TransformerConfig cfg;
    cfg.vocab_size = 11;
    cfg.d_model = 12;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq_len = 48;
    auto m = model::init_base_model(cfg, 1000 + static_cast<std::uint64_t>(trial));
    model::set_base_trainable(m, false);

    std::vector<TrainingExample> batch;
    double lp_sum_mean = 0.0;
    const int batch_size = 1 + static_cast<int>(rng.below(3));
    for (int b = 0; b < batch_size; ++b) {
      TrainingExample ex;
      const int plen = 2 + static_cast<int>(rng.below(6));
      const int slen = 1 + static_cast<int>(rng.below(6));
      for (int i = 0; i < plen; ++i) ex.prefix_ids.push_back(static_cast<int>(rng.below(11)));
      for (int i = 0; i < slen; ++i) ex.supervision_ids.push_back(static_cast<int>(rng.below(11)));
      const auto lp = model::log_prob_of(m, ex.prefix_ids, ex.supervision_ids);
      lp_sum_mean += std::accumulate(lp.begin(), lp.end(), 0.0);
      batch.push_back(std::move(ex));
    }
    lp_sum_mean /= batch_size;
    CHECK(std::fabs(distill::kd_loss(m, batch) - (-lp_sum_mean)) < 1e-9);
  }
}

TEST_CASE("kd_loss covers only supervision rows (prefix masking)") {
  auto m = vocab3_fixed_logits_model();
  TrainingExample ex;
  ex.prefix_ids = {0, 1, 2, 1};
  ex.supervision_ids = {2, 0};

  // Perturb logits on prefix rows through the tape; the supervision-row loss
  // must not move.
  std::vector<int> ids = ex.prefix_ids;
  ids.insert(ids.end(), ex.supervision_ids.begin(), ex.supervision_ids.end());
  const int P = static_cast<int>(ex.prefix_ids.size());
  const int L = static_cast<int>(ex.supervision_ids.size());

  for (int variant = 0; variant < 2; ++variant) {
    model::TapeRunner runner(m, false, nullptr);
    auto logits = runner.forward_logits(ids);
    if (variant == 1) {
      Tensor bump = Tensor::zeros({static_cast<int>(ids.size()), 3});
      for (int r = 0; r < P - 1; ++r) {
        for (int v = 0; v < 3; ++v) bump.at(r, v) = 7.0 * (v + 1);
      }
      logits = runner.graph().add(logits, runner.graph().constant(std::move(bump)));
    }
    std::vector<int> rows, targets;
    for (int i = 0; i < L; ++i) {
      rows.push_back(P - 1 + i);
      targets.push_back(ex.supervision_ids[static_cast<size_t>(i)]);
    }
    auto loss = runner.graph().cross_entropy_sum(logits, rows, targets);
    static double baseline = 0.0;
    if (variant == 0) {
      baseline = runner.graph().value(loss).data[0];
    } else {
      CHECK(runner.graph().value(loss).data[0] == baseline);
    }
  }
}

TEST_CASE("kd_loss rejects empty batches and overlength examples") {
  auto m = vocab3_fixed_logits_model();
  CHECK_THROWS_AS(distill::kd_loss(m, std::vector<TrainingExample>{}), std::invalid_argument);
  TrainingExample ex;
  ex.prefix_ids.assign(15, 0);
  ex.supervision_ids.assign(5, 1);
  CHECK_THROWS_AS(distill::kd_loss(m, std::vector<TrainingExample>{ex}), std::invalid_argument);
}

TEST_CASE("sample_demos: sizes, uniformity, determinism, order") {
  tasks::TaskRegistry reg;
  auto pool = tasks::build_pool(reg, "coin_flip", 3);

  StrategyConfig single;
  single.mode = StrategyMode::SeCoKDS;
  Rng rng(1);
  std::vector<int> hits(8, 0);
  for (int i = 0; i < 10000; ++i) {
    auto subset = distill::sample_demos(pool, single, rng);
    REQUIRE(subset.size() == 1);
    for (int k = 0; k < 8; ++k) {
      if (subset[0].question == pool.demos[static_cast<size_t>(k)].question) ++hits[static_cast<size_t>(k)];
    }
  }
  // Chi-square sanity bound: 7 dof, expected 1250 per demo.
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - 1250.0) * (h - 1250.0) / 1250.0;
  CHECK(chi2 < 30.0);

  StrategyConfig multi;
  multi.mode = StrategyMode::SeCoKDM;
  multi.m_range = {1, 4};
  std::vector<int> size_hits(5, 0);
  Rng rng2(2);
  for (int i = 0; i < 10000; ++i) {
    auto subset = distill::sample_demos(pool, multi, rng2);
    REQUIRE(subset.size() >= 1);
    REQUIRE(subset.size() <= 4);
    size_hits[subset.size()]++;
    // Pool order is preserved.
    size_t cursor = 0;
    for (const auto& d : subset) {
      while (cursor < pool.demos.size() && pool.demos[cursor].question != d.question) ++cursor;
      REQUIRE(cursor < pool.demos.size());
      ++cursor;
    }
  }
  for (int s = 1; s <= 4; ++s) {
    CHECK(std::fabs(size_hits[static_cast<size_t>(s)] - 2500.0) < 350.0);
  }

  Rng ra(77), rb(77);
  for (int i = 0; i < 50; ++i) {
    auto sa = distill::sample_demos(pool, multi, ra);
    auto sb = distill::sample_demos(pool, multi, rb);
    REQUIRE(sa.size() == sb.size());
    for (size_t k = 0; k < sa.size(); ++k) CHECK(sa[k].question == sb[k].question);
  }

  StrategyConfig bad;
  bad.mode = StrategyMode::SeCoKDM;
  bad.m_range = {1, 9};
  Rng rc(1);
  CHECK_THROWS_AS(distill::sample_demos(pool, bad, rc), std::invalid_argument);

  StrategyConfig sft;
  sft.mode = StrategyMode::SFT;
  Rng rd(1);
  CHECK(distill::sample_demos(pool, sft, rd).size() == 8);
}

TEST_CASE("build_student_example: structure, round-trip, overlength") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto data = tasks::build_task_data(reg, "coin_flip", 5, 4, 2);
  const auto& sample = data.train[0];
  const auto& spec = reg.get("coin_flip");

  TeacherOutput sup;
  sup.rationale = spec.rationale(sample);
  sup.answer = sample.label;
  sup.supervision_ids = distill::make_supervision_ids(tok, sup.rationale, sup.answer);

  // Zero demos: the prefix is the bare query block.
  auto ex0 = distill::build_student_example({}, sample, sup, tok, 1024);
  REQUIRE(ex0.has_value());
  CHECK(ex0->n_demos_used == 0);
  CHECK(tok.detokenize(ex0->prefix_ids) == tasks::format_prompt({}, sample));

  for (int k = 1; k <= 4; ++k) {
    std::span<const tasks::Demonstration> subset(data.pool.demos.data(), static_cast<size_t>(k));
    auto ex = distill::build_student_example(subset, sample, sup, tok, 1024);
    REQUIRE(ex.has_value());
    CHECK(ex->n_demos_used == k);
    const std::string text = tok.detokenize(ex->prefix_ids);
    CHECK(text == tasks::format_prompt(subset, sample));
    // Structural audit: demos used = "Question:" blocks minus the query.
    int blocks = 0;
    size_t pos = 0;
    while ((pos = text.find("Question:", pos)) != std::string::npos) {
      ++blocks;
      pos += 9;
    }
    CHECK(ex->n_demos_used == blocks - 1);
  }

  auto dropped = distill::build_student_example({}, sample, sup, tok, 16);
  CHECK_FALSE(dropped.has_value());
}

TEST_CASE("teacher_generate: scripted teacher yields a valid TeacherOutput") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  auto sample = testing::compare_sample(9, 3);  // label yes
  const auto& spec = reg.get("compare");

  std::span<const tasks::Demonstration> all(pool.demos.data(), pool.demos.size());
  const int prompt_len = static_cast<int>(tok.tokenize(tasks::format_prompt(all, sample)).size());

  // Teacher echoes the first demonstration's rationale, then the correct
  // answer for this sample.
  const std::string echoed = pool.demos[0].rationale;
  std::vector<int> script = tok.tokenize(tasks::supervision_text(echoed, "yes"));
  script.push_back(tok.eoa_id());

  auto teacher = testing::make_position_scripted_model(
      tok.vocab_size(), 512, {{prompt_len - 1, script}});
  auto out = distill::teacher_generate(teacher, tok, pool, sample, spec.answer_set, 64,
                                       "compare/test/0");
  REQUIRE(out.has_value());
  CHECK(out->rationale == echoed);
  CHECK(out->answer == "yes");
  CHECK(out->teacher_correct);
  CHECK(out->supervision_ids == distill::make_supervision_ids(tok, echoed, "yes"));
  CHECK(out->supervision_ids.back() == tok.eoa_id());

  // Same scripted teacher, but the sample's label is "no": extraction still
  // succeeds, teacher_correct flips.
  auto wrong = testing::compare_sample(2, 8);
  const int plen2 = static_cast<int>(
      tok.tokenize(tasks::format_prompt(all, wrong)).size());
  auto teacher2 = testing::make_position_scripted_model(tok.vocab_size(), 512,
                                                        {{plen2 - 1, script}});
  auto out2 = distill::teacher_generate(teacher2, tok, pool, wrong, spec.answer_set, 64,
                                        "compare/test/1");
  REQUIRE(out2.has_value());
  CHECK_FALSE(out2->teacher_correct);
}

TEST_CASE("teacher_generate: marker-free generation is an extraction failure") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  auto pool = testing::uniform_length_pool();
  auto sample = testing::compare_sample(9, 3);
  const auto& spec = reg.get("compare");

  auto mute = testing::make_position_scripted_model(tok.vocab_size(), 512, {});
  CHECK_FALSE(
      distill::teacher_generate(mute, tok, pool, sample, spec.answer_set, 16, "x").has_value());

  tasks::DemonstrationPool small = pool;
  small.demos.resize(5);
  CHECK_THROWS_AS(
      distill::teacher_generate(mute, tok, small, sample, spec.answer_set, 16, "x"),
      std::invalid_argument);
}

TEST_CASE("harvest file round-trips and re-derives supervision ids") {
  tasks::TaskRegistry reg;
  auto tok = reg.build_tokenizer();
  std::vector<TeacherOutput> outputs;
  TeacherOutput a;
  a.sample_ref = "coin_flip/train/0";
  a.rationale = "Anna flips the coin. The coin is now tails up. So the coin is not heads up.";
  a.answer = "no";
  a.supervision_ids = distill::make_supervision_ids(tok, a.rationale, a.answer);
  a.teacher_correct = true;
  outputs.push_back(a);
  TeacherOutput b = a;
  b.sample_ref = "coin_flip/train/3";
  b.answer = "yes";
  b.teacher_correct = false;
  b.supervision_ids = distill::make_supervision_ids(tok, b.rationale, b.answer);
  outputs.push_back(b);

  const auto path =
      (std::filesystem::temp_directory_path() / "secokd_harvest_test.jsonl").string();
  distill::write_harvest_jsonl(path, outputs);
  auto loaded = distill::read_harvest_jsonl(path, tok);
  std::filesystem::remove(path);
  REQUIRE(loaded.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(loaded[i].sample_ref == outputs[i].sample_ref);
    CHECK(loaded[i].rationale == outputs[i].rationale);
    CHECK(loaded[i].answer == outputs[i].answer);
    CHECK(loaded[i].teacher_correct == outputs[i].teacher_correct);
    CHECK(loaded[i].supervision_ids == outputs[i].supervision_ids);
  }
}

namespace {

struct TrainFixture {
  tasks::TaskRegistry reg;
  tasks::Tokenizer tok = reg.build_tokenizer();
  tasks::TaskData data = tasks::build_task_data(reg, "compare", 9, 16, 4);
  model::TransformerConfig cfg;
  model::AdaptedModel base;
  std::vector<TeacherOutput> harvest;

  TrainFixture() {
    cfg.vocab_size = tok.vocab_size();
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.max_seq_len = 512;
    base = model::init_base_model(cfg, 7);
    model::set_base_trainable(base, false);
    const auto& spec = reg.get("compare");
    for (size_t i = 0; i < data.train.size(); ++i) {
      TeacherOutput t;
      t.sample_ref = "compare/train/" + std::to_string(i);
      t.rationale = spec.rationale(data.train[i]);
      t.answer = data.train[i].label;
      t.supervision_ids = distill::make_supervision_ids(tok, t.rationale, t.answer);
      t.teacher_correct = true;
      harvest.push_back(std::move(t));
    }
  }
};

std::vector<TrainingExample> probe_batch(const TrainFixture& f, int count) {
  std::vector<TrainingExample> batch;
  for (int i = 0; i < count; ++i) {
    std::span<const tasks::Demonstration> one(&f.data.pool.demos[0], 1);
    auto ex = distill::build_student_example(one, f.data.train[static_cast<size_t>(i)],
                                             f.harvest[static_cast<size_t>(i)], f.tok,
                                             f.cfg.max_seq_len);
    batch.push_back(*ex);
  }
  return batch;
}

}  // namespace

TEST_CASE("train_secokd: zero epochs leave the student identical to the base") {
  TrainFixture f;
  model::LoraConfig lc;
  lc.dropout = 0.0;
  auto student = model::attach_lora(f.base, lc, 31);
  const auto adapters_before = student.adapters;

  distill::TrainHyper hyper;
  hyper.epochs = 0;
  StrategyConfig strategy;
  auto result = distill::train_secokd(student, f.data.train, f.harvest, f.data.pool, f.tok,
                                      strategy, hyper, 5, nullptr);
  CHECK(result.steps == 0);
  for (size_t i = 0; i < student.adapters.size(); ++i) {
    CHECK(bitwise_equal(student.adapters[i].tensor, adapters_before[i].tensor));
  }
}

TEST_CASE("train_secokd: probe loss decreases, base frozen, deterministic") {
  TrainFixture f;
  model::LoraConfig lc;
  lc.rank = 4;
  lc.dropout = 0.0;

  distill::TrainHyper hyper;
  hyper.epochs = 2;
  hyper.batch_size = 2;
  hyper.adam.lr_base = 5e-3;
  hyper.adam.warmup_ratio = 0.02;
  StrategyConfig strategy;
  strategy.mode = StrategyMode::SeCoKDS;

  auto run_once = [&]() {
    auto student = model::attach_lora(f.base, lc, 31);
    distill::train_secokd(student, f.data.train, f.harvest, f.data.pool, f.tok, strategy, hyper,
                          5, nullptr);
    return student;
  };

  auto student1 = run_once();

  const auto probe = probe_batch(f, 4);
  auto fresh = model::attach_lora(f.base, lc, 31);
  const double before = distill::kd_loss(fresh, probe);
  const double after = distill::kd_loss(student1, probe);
  CHECK(after <= before);

  for (size_t i = 0; i < student1.base.size(); ++i) {
    CHECK(bitwise_equal(student1.base[i].tensor, f.base.base[i].tensor));
  }

  auto student2 = run_once();
  for (size_t i = 0; i < student1.adapters.size(); ++i) {
    CHECK(bitwise_equal(student1.adapters[i].tensor, student2.adapters[i].tensor));
  }

  // The log carries per-example lines with single-demo prefixes throughout.
  auto student3 = model::attach_lora(f.base, lc, 31);
  auto result = distill::train_secokd(student3, f.data.train, f.harvest, f.data.pool, f.tok,
                                      strategy, hyper, 5, nullptr);
  CHECK(result.log.size() == 2 * f.data.train.size());
  for (const auto& entry : result.log) CHECK(entry.n_demos_used == 1);
}

TEST_CASE("train_secokd: preconditions") {
  TrainFixture f;
  model::LoraConfig lc;
  auto student = model::attach_lora(f.base, lc, 31);
  student.adapters[1].tensor.data[0] = 0.5;  // dirty lora_b
  distill::TrainHyper hyper;
  StrategyConfig strategy;
  CHECK_THROWS_AS(distill::train_secokd(student, f.data.train, f.harvest, f.data.pool, f.tok,
                                        strategy, hyper, 5, nullptr),
                  std::invalid_argument);

  auto no_adapters = f.base;
  CHECK_THROWS_AS(distill::train_secokd(no_adapters, f.data.train, f.harvest, f.data.pool, f.tok,
                                        strategy, hyper, 5, nullptr),
                  std::invalid_argument);
}

TEST_CASE("train_sft: all-pool prefixes, template supervision, shared order with KD") {
  TrainFixture f;
  model::LoraConfig lc;
  lc.dropout = 0.0;
  distill::TrainHyper hyper;
  hyper.epochs = 1;
  hyper.batch_size = 2;
  hyper.adam.lr_base = 1e-3;

  auto sft_student = model::attach_lora(f.base, lc, 31);
  auto sft_result = distill::train_sft(sft_student, f.data.train, f.reg.get("compare"),
                                       f.data.pool, f.tok, hyper, 5, nullptr);
  CHECK(sft_result.log.size() == f.data.train.size());
  for (const auto& entry : sft_result.log) CHECK(entry.n_demos_used == 8);

  auto kd_student = model::attach_lora(f.base, lc, 31);
  StrategyConfig strategy;
  auto kd_result = distill::train_secokd(kd_student, f.data.train, f.harvest, f.data.pool, f.tok,
                                         strategy, hyper, 5, nullptr);

  // Identical seeds consume the identical per-epoch sample order.
  REQUIRE(kd_result.log.size() == sft_result.log.size());
  for (size_t i = 0; i < kd_result.log.size(); ++i) {
    CHECK(kd_result.log[i].sample_index == sft_result.log[i].sample_index);
  }

  // Provenance: train_sft takes no harvest at all; its supervision for a
  // sample is exactly the template rationale plus the gold label.
  const auto& spec = f.reg.get("compare");
  const auto& s0 = f.data.train[0];
  const auto expected = distill::make_supervision_ids(f.tok, spec.rationale(s0), s0.label);
  std::span<const tasks::Demonstration> all(f.data.pool.demos.data(), f.data.pool.demos.size());
  TeacherOutput standalone;
  standalone.rationale = spec.rationale(s0);
  standalone.answer = s0.label;
  standalone.supervision_ids = expected;
  auto ex = distill::build_student_example(all, s0, standalone, f.tok, f.cfg.max_seq_len);
  REQUIRE(ex.has_value());
  CHECK(ex->supervision_ids == expected);
  CHECK(ex->n_demos_used == 8);
}

TEST_CASE("training drops overlength examples with a counter") {
  TrainFixture f;
  model::TransformerConfig small_cfg = f.cfg;
  small_cfg.max_seq_len = 64;  // an 8-demo prefix cannot fit
  auto small_base = model::init_base_model(small_cfg, 7);
  model::set_base_trainable(small_base, false);
  model::LoraConfig lc;
  lc.dropout = 0.0;
  auto student = model::attach_lora(small_base, lc, 31);

  distill::TrainHyper hyper;
  hyper.epochs = 1;
  auto result = distill::train_sft(student, f.data.train, f.reg.get("compare"), f.data.pool,
                                   f.tok, hyper, 5, nullptr);
  CHECK(result.dropped_overlength == static_cast<int>(f.data.train.size()));
  CHECK(result.log.empty());
}
