#include "secokd/distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "secokd/model/infer.hpp"
#include "secokd/model/tape.hpp"

namespace secokd::distill {

using model::AdaptedModel;
using model::TapeRunner;
using numerics::Graph;
using numerics::Rng;
using numerics::Tensor;
using tasks::Demonstration;
using tasks::DemonstrationPool;
using tasks::Sample;
using tasks::Tokenizer;

std::string strategy_tag(StrategyMode mode) {
  switch (mode) {
    case StrategyMode::SeCoKDS: return "SeCoKD-S";
    case StrategyMode::SeCoKDM: return "SeCoKD-M";
    case StrategyMode::SFT: return "SFT";
  }
  throw std::logic_error("strategy_tag: bad mode");
}

StrategyMode strategy_from_string(const std::string& name) {
  if (name == "secokd-s") return StrategyMode::SeCoKDS;
  if (name == "secokd-m") return StrategyMode::SeCoKDM;
  if (name == "sft") return StrategyMode::SFT;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected secokd-s|secokd-m|sft)");
}

std::vector<int> make_supervision_ids(const Tokenizer& tok, const std::string& rationale,
                                      const std::string& answer) {
  std::vector<int> ids = tok.tokenize(tasks::supervision_text(rationale, answer));
  ids.push_back(tok.eoa_id());
  return ids;
}

std::optional<TeacherOutput> teacher_generate(const AdaptedModel& teacher, const Tokenizer& tok,
                                              const DemonstrationPool& pool, const Sample& sample,
                                              std::span<const std::string> answer_set,
                                              int max_new, const std::string& sample_ref) {
  if (pool.size() != tasks::kPoolSize) {
    throw std::invalid_argument("teacher_generate: pool must hold " +
                                std::to_string(tasks::kPoolSize) + " demonstrations, got " +
                                std::to_string(pool.size()));
  }
  std::span<const Demonstration> demos(pool.demos.data(), pool.demos.size());
  const std::vector<int> prompt = tok.tokenize(tasks::format_prompt(demos, sample));
  const std::vector<int> generated = model::generate(teacher, prompt, max_new, tok.eoa_id());
  const std::string text = tok.detokenize(generated);

  auto extraction = tasks::extract_answer(text, answer_set);
  if (!extraction) return std::nullopt;

  TeacherOutput out;
  out.sample_ref = sample_ref;
  out.rationale = extraction->rationale;
  out.answer = extraction->answer;
  out.supervision_ids = make_supervision_ids(tok, out.rationale, out.answer);
  out.teacher_correct = extraction->answer == sample.label;
  return out;
}

std::vector<Demonstration> sample_demos(const DemonstrationPool& pool,
                                        const StrategyConfig& strategy, Rng& rng) {
  if (pool.size() == 0) throw std::invalid_argument("sample_demos: empty pool");
  if (strategy.mode == StrategyMode::SFT) return pool.demos;

  int m = 1;
  if (strategy.mode == StrategyMode::SeCoKDM) {
    const auto [lo, hi] = strategy.m_range;
    if (lo < 1 || hi < lo || hi > pool.size()) {
      throw std::invalid_argument("sample_demos: m_range must sit within [1, pool size]");
    }
    m = rng.range(lo, hi);
  }
  std::vector<int> picked;
  while (static_cast<int>(picked.size()) < m) {
    const int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(pool.size())));
    if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
  }
  std::sort(picked.begin(), picked.end());  // pool order preserved
  std::vector<Demonstration> out;
  for (int idx : picked) out.push_back(pool.demos[static_cast<size_t>(idx)]);
  return out;
}

std::optional<TrainingExample> build_student_example(std::span<const Demonstration> subset,
                                                     const Sample& sample,
                                                     const TeacherOutput& supervision,
                                                     const Tokenizer& tok, int max_seq_len) {
  TrainingExample ex;
  ex.prefix_ids = tok.tokenize(tasks::format_prompt(subset, sample));
  ex.supervision_ids = supervision.supervision_ids;
  ex.n_demos_used = static_cast<int>(subset.size());
  if (ex.supervision_ids.empty()) {
    throw std::invalid_argument("build_student_example: empty supervision");
  }
  if (static_cast<int>(ex.prefix_ids.size() + ex.supervision_ids.size()) > max_seq_len) {
    return std::nullopt;
  }
  return ex;
}

namespace {

// Token-sum NLL of one example's supervision region on a shared tape.
Graph::Ref example_loss(TapeRunner& runner, const TrainingExample& ex) {
  std::vector<int> ids = ex.prefix_ids;
  ids.insert(ids.end(), ex.supervision_ids.begin(), ex.supervision_ids.end());
  const int prefix_len = static_cast<int>(ex.prefix_ids.size());
  if (prefix_len < 1) throw std::invalid_argument("example_loss: empty prefix");

  Graph::Ref logits = runner.forward_logits(ids);
  std::vector<int> rows, targets;
  for (size_t i = 0; i < ex.supervision_ids.size(); ++i) {
    rows.push_back(prefix_len - 1 + static_cast<int>(i));
    targets.push_back(ex.supervision_ids[i]);
  }
  return runner.graph().cross_entropy_sum(logits, std::move(rows), std::move(targets));
}

}  // namespace

double kd_loss(const AdaptedModel& student, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw std::invalid_argument("kd_loss: empty batch");
  for (const auto& ex : batch) {
    if (static_cast<int>(ex.prefix_ids.size() + ex.supervision_ids.size()) >
        student.config.max_seq_len) {
      throw std::invalid_argument("kd_loss: example exceeds max_seq_len");
    }
  }
  TapeRunner runner(student, /*training=*/false, nullptr);
  Graph::Ref total{};
  for (size_t i = 0; i < batch.size(); ++i) {
    Graph::Ref li = example_loss(runner, batch[i]);
    total = i == 0 ? li : runner.graph().add(total, li);
  }
  const double n = static_cast<double>(batch.size());
  return runner.graph().value(runner.graph().scale(total, 1.0 / n)).data[0];
}

void write_harvest_jsonl(const std::string& path, std::span<const TeacherOutput> outputs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_harvest_jsonl: cannot open " + path);
  for (const auto& t : outputs) {
    const nlohmann::json j = {{"sample_ref", t.sample_ref},
                              {"rationale", t.rationale},
                              {"answer", t.answer},
                              {"teacher_correct", t.teacher_correct}};
    out << j.dump() << "\n";
  }
}

std::vector<TeacherOutput> read_harvest_jsonl(const std::string& path, const Tokenizer& tok) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_harvest_jsonl: cannot open " + path);
  std::vector<TeacherOutput> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("read_harvest_jsonl: " + path + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    TeacherOutput t;
    t.sample_ref = j.at("sample_ref").get<std::string>();
    t.rationale = j.at("rationale").get<std::string>();
    t.answer = j.at("answer").get<std::string>();
    t.teacher_correct = j.at("teacher_correct").get<bool>();
    t.supervision_ids = make_supervision_ids(tok, t.rationale, t.answer);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

using MakeExample = std::function<std::optional<TrainingExample>(int index, Rng& rng)>;

TrainResult run_training_loop(AdaptedModel& m, int sample_count, const MakeExample& make_example,
                              const TrainHyper& hyper, std::uint64_t seed,
                              const EvalCallback& test_metric) {
  if (sample_count <= 0) {
    TrainResult empty;
    return empty;
  }
  auto params = m.trainable_params();
  if (params.empty()) throw std::invalid_argument("training: model has no trainable parameters");
  auto state = numerics::OptimState::init(params, hyper.adam);

  const int batches_per_epoch = (sample_count + hyper.batch_size - 1) / hyper.batch_size;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(hyper.epochs) * batches_per_epoch;

  TrainResult result;
  Rng base_rng(seed);

  std::vector<Tensor> best_snapshot;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const std::string suffix = std::to_string(epoch);
    std::vector<int> order(static_cast<size_t>(sample_count));
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = base_rng.fork("order/" + suffix);
    order_rng.shuffle(order);
    Rng demo_rng = base_rng.fork("demos/" + suffix);
    Rng dropout_rng = base_rng.fork("dropout/" + suffix);

    for (int b = 0; b < batches_per_epoch; ++b) {
      std::vector<TrainingExample> batch;
      std::vector<int> batch_indices;
      for (int k = 0; k < hyper.batch_size; ++k) {
        const int pos = b * hyper.batch_size + k;
        if (pos >= sample_count) break;
        const int sample_index = order[static_cast<size_t>(pos)];
        auto ex = make_example(sample_index, demo_rng);
        if (!ex) {
          ++result.dropped_overlength;
          continue;
        }
        batch.push_back(std::move(*ex));
        batch_indices.push_back(sample_index);
      }
      if (batch.empty()) continue;

      TapeRunner runner(m, /*training=*/true, &dropout_rng);
      std::vector<Graph::Ref> losses;
      for (const auto& ex : batch) losses.push_back(example_loss(runner, ex));
      Graph::Ref total = losses[0];
      for (size_t i = 1; i < losses.size(); ++i) total = runner.graph().add(total, losses[i]);
      Graph::Ref loss =
          runner.graph().scale(total, 1.0 / static_cast<double>(batch.size()));

      const double loss_value = runner.graph().value(loss).data[0];
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("training: non-finite loss " + std::to_string(loss_value) +
                                 " at step " + std::to_string(state.step) + " (epoch " +
                                 std::to_string(epoch) + ")");
      }
      runner.graph().backward(loss);
      std::vector<const Tensor*> grads;
      for (auto ref : runner.trainable_refs()) grads.push_back(runner.graph().grad(ref));
      const double lr = numerics::lr_at(hyper.adam, state.step, total_steps);
      numerics::adam_step(params, grads, state, total_steps);

      for (size_t i = 0; i < batch.size(); ++i) {
        TrainStepLog entry;
        entry.step = state.step - 1;
        entry.loss = runner.graph().value(losses[i]).data[0];
        entry.lr = lr;
        entry.n_demos_used = batch[i].n_demos_used;
        entry.sample_index = batch_indices[i];
        result.log.push_back(entry);
      }
    }

    if (test_metric) {
      const double metric = test_metric(m);
      if (metric > result.best_metric) {
        result.best_metric = metric;
        result.best_epoch = epoch;
        best_snapshot.clear();
        for (const Tensor* p : params) best_snapshot.push_back(*p);
      }
    }
  }

  if (test_metric && !best_snapshot.empty()) {
    for (size_t i = 0; i < params.size(); ++i) *params[i] = best_snapshot[i];
  }
  result.steps = state.step;
  return result;
}

void require_fresh_adapters(const AdaptedModel& student) {
  if (!student.lora) {
    throw std::invalid_argument("training: student has no adapters attached");
  }
  for (const auto& p : student.adapters) {
    if (p.name.size() >= 6 && p.name.substr(p.name.size() - 6) == "lora_b") {
      for (double v : p.tensor.data) {
        if (v != 0.0) {
          throw std::invalid_argument("training: adapters must be zero-initialized (" + p.name +
                                      " is nonzero)");
        }
      }
    }
  }
}

}  // namespace

TrainResult train_secokd(AdaptedModel& student, std::span<const Sample> samples,
                         std::span<const TeacherOutput> harvest, const DemonstrationPool& pool,
                         const Tokenizer& tok, const StrategyConfig& strategy,
                         const TrainHyper& hyper, std::uint64_t seed,
                         const EvalCallback& test_metric) {
  if (samples.size() != harvest.size()) {
    throw std::invalid_argument("train_secokd: samples and harvest must align");
  }
  if (strategy.mode == StrategyMode::SFT) {
    throw std::invalid_argument("train_secokd: use train_sft for the SFT baseline");
  }
  require_fresh_adapters(student);

  auto make = [&](int index, Rng& rng) -> std::optional<TrainingExample> {
    const auto subset = sample_demos(pool, strategy, rng);
    return build_student_example(subset, samples[static_cast<size_t>(index)],
                                 harvest[static_cast<size_t>(index)], tok,
                                 student.config.max_seq_len);
  };
  return run_training_loop(student, static_cast<int>(samples.size()), make, hyper, seed,
                           test_metric);
}

TrainResult train_sft(AdaptedModel& student, std::span<const Sample> samples,
                      const tasks::TaskSpec& spec, const DemonstrationPool& pool,
                      const Tokenizer& tok, const TrainHyper& hyper, std::uint64_t seed,
                      const EvalCallback& test_metric) {
  require_fresh_adapters(student);
  if (!spec.rationale) {
    throw std::invalid_argument("train_sft: task '" + spec.id + "' has no rationale template");
  }

  auto make = [&](int index, Rng&) -> std::optional<TrainingExample> {
    const Sample& sample = samples[static_cast<size_t>(index)];
    TeacherOutput standalone;
    standalone.rationale = spec.rationale(sample);
    standalone.answer = sample.label;
    standalone.supervision_ids = make_supervision_ids(tok, standalone.rationale, standalone.answer);
    std::span<const Demonstration> all(pool.demos.data(), pool.demos.size());
    return build_student_example(all, sample, standalone, tok, student.config.max_seq_len);
  };
  return run_training_loop(student, static_cast<int>(samples.size()), make, hyper, seed,
                           test_metric);
}

TrainResult train_on_examples(AdaptedModel& m, std::span<const TrainingExample> examples,
                              const TrainHyper& hyper, std::uint64_t seed,
                              const EvalCallback& test_metric) {
  auto make = [&examples](int index, Rng&) -> std::optional<TrainingExample> {
    return examples[static_cast<size_t>(index)];
  };
  return run_training_loop(m, static_cast<int>(examples.size()), make, hyper, seed, test_metric);
}

}  // namespace secokd::distill
