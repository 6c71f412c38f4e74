#include "secokd/cli/stages.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <unordered_set>

#include <json.hpp>

#include "secokd/eval/eval.hpp"
#include "secokd/model/checkpoint.hpp"
#include "secokd/numerics/parallel.hpp"
#include "secokd/tasks/io.hpp"
#include "secokd/tasks/prompt.hpp"

namespace secokd::cli {

namespace fs = std::filesystem;
using distill::StrategyConfig;
using distill::StrategyMode;
using distill::TeacherOutput;
using distill::TrainingExample;
using nlohmann::json;
using numerics::Rng;
using tasks::Sample;

namespace {

std::string seed_key(std::uint64_t seed) { return "seed" + std::to_string(seed); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_prediction_line(std::ofstream& out, const eval::PredictionRecord& r) {
  json j;
  j["model_tag"] = r.model_tag;
  j["task"] = r.task;
  if (r.shots >= 0) j["shots"] = r.shots;
  if (r.demo_index >= 0) j["demo_index"] = r.demo_index;
  j["sample_ref"] = r.sample_ref;
  j["prediction"] = r.prediction;
  j["correct"] = r.correct;
  out << j.dump() << "\n";
}

void write_train_log(const fs::path& path, const distill::TrainResult& result) {
  auto out = open_out(path);
  for (const auto& e : result.log) {
    const json j = {
        {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}, {"n_demos_used", e.n_demos_used}};
    out << j.dump() << "\n";
  }
}

void write_train_summary(const fs::path& path, const distill::TrainResult& result,
                         const model::AdaptedModel& m, int n_samples, bool kept_incorrect) {
  const json j = {{"steps", result.steps},
                  {"dropped_overlength", result.dropped_overlength},
                  {"best_epoch", result.best_epoch},
                  {"best_metric", result.best_metric},
                  {"trainable_fraction", model::trainable_fraction(m)},
                  {"trainable_params", m.trainable_param_count()},
                  {"total_params", m.total_param_count()},
                  {"n_samples", n_samples},
                  {"kept_teacher_incorrect", kept_incorrect},
                  {"model_selection", "best epoch by one-shot test accuracy"}};
  write_text(path, j.dump(2) + "\n");
}

std::string fmt_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string checkpoint_filename(const std::string& strategy) {
  std::string name = strategy;
  std::replace(name.begin(), name.end(), '-', '_');
  return name + ".bin";
}

Runner::Runner(RunConfig cfg)
    : cfg_(std::move(cfg)), registry_(cfg_.task_params), tokenizer_(registry_.build_tokenizer()) {
  cfg_.validate();
  if (cfg_.out_dir.empty()) {
    throw std::invalid_argument("config: out_dir is empty (set it or pass --out)");
  }
  if (cfg_.model.vocab_size == 0) cfg_.model.vocab_size = tokenizer_.vocab_size();
  if (cfg_.model.vocab_size < tokenizer_.vocab_size()) {
    throw std::invalid_argument("config: vocab_size smaller than the task vocabulary");
  }
  cfg_.model.validate();
  if (cfg_.workers > 0) numerics::set_worker_count(cfg_.workers);

  paths_.root = fs::path(cfg_.out_dir);
  fs::create_directories(paths_.root);

  const json snapshot = config_to_json(cfg_);
  const std::string hash = fnv64_hex(snapshot.dump());
  if (fs::exists(paths_.manifest_file())) {
    manifest_ = RunManifest::load(paths_.manifest_file().string());
    if (manifest_.config_hash != hash) {
      throw std::runtime_error("out_dir already holds a run with a different config (hash " +
                               manifest_.config_hash + " vs " + hash +
                               "); use a fresh directory");
    }
  } else {
    manifest_.config_snapshot = snapshot;
    manifest_.config_hash = hash;
    save_config(cfg_, paths_.config_file().string());
    manifest_.save(paths_.manifest_file().string());
  }
}

std::vector<std::string> Runner::strategy_tags() const {
  std::vector<std::string> tags;
  for (const auto& s : cfg_.strategies) {
    tags.push_back(distill::strategy_tag(distill::strategy_from_string(s)));
  }
  return tags;
}

void Runner::finish_stage(const std::string& key, const std::vector<fs::path>& artifacts) {
  std::vector<std::string> rels;
  for (const auto& p : artifacts) rels.push_back(paths_.rel(p));
  manifest_.record_stage(key, paths_.root.string(), rels);
  manifest_.save(paths_.manifest_file().string());
  std::cout << "[done] " << key << "\n";
}

const tasks::TaskData& Runner::task_data(const std::string& task) {
  auto it = data_cache_.find(task);
  if (it != data_cache_.end()) return it->second;
  const auto dir = paths_.data_dir(task);
  tasks::TaskData data;
  data.pool = tasks::read_pool_json((dir / "pool.json").string());
  data.train = tasks::read_samples_jsonl((dir / "train.jsonl").string());
  data.test = tasks::read_samples_jsonl((dir / "test.jsonl").string());
  return data_cache_.emplace(task, std::move(data)).first->second;
}

void Runner::stage_data() {
  const std::string key = "data";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  std::vector<fs::path> artifacts;
  for (const auto& task : cfg_.task_ids) {
    auto data = tasks::build_task_data(registry_, task, cfg_.data_seed, cfg_.n_train, cfg_.n_test);

    // Context-window registration check: the longest 8-shot prompt must
    // leave room for generation.
    std::vector<Sample> all = data.train;
    all.insert(all.end(), data.test.begin(), data.test.end());
    const int longest =
        tasks::longest_prompt_tokens(tokenizer_, data.pool, all, tasks::kPoolSize);
    if (longest > cfg_.model.max_seq_len - cfg_.max_new) {
      throw std::runtime_error("data: longest 8-shot prompt for '" + task + "' (" +
                               std::to_string(longest) + " tokens) exceeds max_seq_len - max_new (" +
                               std::to_string(cfg_.model.max_seq_len - cfg_.max_new) + ")");
    }

    const auto dir = paths_.data_dir(task);
    fs::create_directories(dir);
    tasks::write_pool_json((dir / "pool.json").string(), data.pool);
    tasks::write_samples_jsonl((dir / "train.jsonl").string(), data.train);
    tasks::write_samples_jsonl((dir / "test.jsonl").string(), data.test);
    artifacts.push_back(dir / "pool.json");
    artifacts.push_back(dir / "train.jsonl");
    artifacts.push_back(dir / "test.jsonl");
    data_cache_[task] = std::move(data);
  }
  finish_stage(key, artifacts);
}

std::vector<TrainingExample> Runner::build_pretrain_corpus(std::uint64_t seed) {
  Rng rng(numerics::derive_seed(seed, "pretrain-corpus"));

  std::unordered_set<std::string> test_questions;
  for (const auto& task : cfg_.task_ids) {
    for (const auto& s : task_data(task).test) test_questions.insert(s.question);
  }

  std::vector<double> weights = cfg_.pretrain_shot_weights;
  if (weights.empty()) weights.assign(static_cast<size_t>(tasks::kPoolSize) + 1, 1.0);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  auto draw_clean = [&](const tasks::TaskSpec& spec) {
    for (int guard = 0; guard < 1000; ++guard) {
      Sample s = spec.draw(rng);
      if (!test_questions.count(s.question)) return s;
    }
    throw std::runtime_error("pretrain corpus: cannot avoid test questions for '" + spec.id + "'");
  };

  std::vector<TrainingExample> corpus;
  corpus.reserve(static_cast<size_t>(cfg_.pretrain_episodes));
  for (int e = 0; e < cfg_.pretrain_episodes; ++e) {
    const auto& task = cfg_.task_ids[static_cast<size_t>(e) % cfg_.task_ids.size()];
    const auto& spec = registry_.get(task);

    const double r = rng.uniform() * total;
    int k = 0;
    double cum = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (r < cum) {
        k = static_cast<int>(i);
        break;
      }
    }

    std::vector<tasks::Demonstration> demos;
    for (int d = 0; d < k; ++d) {
      Sample s = draw_clean(spec);
      demos.push_back(tasks::Demonstration{s.question, spec.rationale(s), s.label});
    }
    Sample query = draw_clean(spec);

    TrainingExample ex;
    ex.prefix_ids = tokenizer_.tokenize(tasks::format_prompt(demos, query));
    ex.supervision_ids =
        distill::make_supervision_ids(tokenizer_, spec.rationale(query), query.label);
    ex.n_demos_used = k;
    if (static_cast<int>(ex.prefix_ids.size() + ex.supervision_ids.size()) >
        cfg_.model.max_seq_len) {
      throw std::logic_error("pretrain corpus: episode exceeds max_seq_len despite length audit");
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void Runner::stage_pretrain(std::uint64_t seed) {
  const std::string key = seed_key(seed) + "/pretrain";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  manifest_.require_stage("data", paths_.root.string(), key);

  auto base = model::init_base_model(cfg_.model, numerics::derive_seed(seed, "init"));
  auto corpus = build_pretrain_corpus(seed);

  distill::TrainHyper hyper;
  hyper.adam = cfg_.adam;
  hyper.adam.lr_base = cfg_.pretrain_lr;
  hyper.adam.warmup_ratio = cfg_.pretrain_warmup_ratio;
  hyper.batch_size = cfg_.batch_size;
  hyper.epochs = cfg_.pretrain_epochs;

  std::cout << "[pretrain] seed " << seed << ": " << corpus.size() << " episodes, "
            << "trainable fraction " << model::trainable_fraction(base) << "\n";
  auto result = distill::train_on_examples(base, corpus, hyper,
                                           numerics::derive_seed(seed, "pretrain-train"), nullptr);

  model::set_base_trainable(base, false);
  const auto dir = paths_.base_dir(seed);
  fs::create_directories(dir);
  const auto ckpt = dir / "checkpoint.bin";
  model::save_checkpoint(base, ckpt.string());
  write_train_log(dir / "pretrain_log.jsonl", result);
  write_train_summary(dir / "pretrain_summary.json", result, base,
                      static_cast<int>(corpus.size()), true);
  finish_stage(key, {ckpt, dir / "pretrain_log.jsonl", dir / "pretrain_summary.json"});
}

model::AdaptedModel Runner::load_base(std::uint64_t seed) const {
  const auto ckpt = paths_.base_dir(seed) / "checkpoint.bin";
  if (!fs::exists(ckpt)) {
    throw std::runtime_error("missing base checkpoint " + ckpt.string() +
                             " (run the pretrain stage first)");
  }
  return model::load_checkpoint(ckpt.string());
}

model::AdaptedModel Runner::load_student(std::uint64_t seed, const std::string& task,
                                         const std::string& strategy) const {
  const auto ckpt =
      paths_.run_dir(seed, task) / "checkpoints" / checkpoint_filename(strategy);
  if (!fs::exists(ckpt)) {
    throw std::runtime_error("missing checkpoint " + ckpt.string() +
                             " (run the train stage for strategy '" + strategy + "' first)");
  }
  return model::load_checkpoint(ckpt.string());
}

void Runner::stage_harvest(std::uint64_t seed, const std::string& task) {
  const std::string key = seed_key(seed) + "/" + task + "/harvest";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  manifest_.require_stage(seed_key(seed) + "/pretrain", paths_.root.string(), key);

  const auto& data = task_data(task);
  const auto& spec = registry_.get(task);
  const auto teacher = load_base(seed);

  std::vector<std::optional<TeacherOutput>> raw(data.train.size());
  numerics::parallel_for(
      static_cast<std::int64_t>(data.train.size()), [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
          const auto ref = task + "/train/" + std::to_string(i);
          raw[static_cast<size_t>(i)] =
              distill::teacher_generate(teacher, tokenizer_, data.pool,
                                        data.train[static_cast<size_t>(i)], spec.answer_set,
                                        cfg_.max_new, ref);
        }
      });

  std::vector<TeacherOutput> harvested;
  int n_correct = 0;
  for (auto& opt : raw) {
    if (!opt) continue;
    n_correct += opt->teacher_correct ? 1 : 0;
    harvested.push_back(std::move(*opt));
  }

  const auto dir = paths_.run_dir(seed, task) / "harvest";
  fs::create_directories(dir);
  distill::write_harvest_jsonl((dir / "teacher.jsonl").string(), harvested);
  const json summary = {{"n_samples", data.train.size()},
                        {"n_extracted", harvested.size()},
                        {"n_teacher_correct", n_correct}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "[harvest] " << key << ": extracted " << harvested.size() << "/"
            << data.train.size() << ", teacher correct " << n_correct << "\n";
  finish_stage(key, {dir / "teacher.jsonl", dir / "summary.json"});
}

void Runner::training_subset(std::uint64_t seed, const std::string& task,
                             std::vector<Sample>& samples_out,
                             std::vector<TeacherOutput>& harvest_out) const {
  const auto path = paths_.run_dir(seed, task) / "harvest" / "teacher.jsonl";
  if (!fs::exists(path)) {
    throw std::runtime_error("missing harvest file " + path.string() +
                             " (run the harvest stage first)");
  }
  auto harvested = distill::read_harvest_jsonl(path.string(), tokenizer_);
  const auto& train = data_cache_.at(task).train;

  for (auto& t : harvested) {
    if (!cfg_.keep_teacher_incorrect && !t.teacher_correct) continue;
    const auto pos = t.sample_ref.rfind('/');
    const size_t idx = std::stoul(t.sample_ref.substr(pos + 1));
    if (idx >= train.size()) {
      throw std::runtime_error("harvest sample_ref out of range: " + t.sample_ref);
    }
    samples_out.push_back(train[idx]);
    harvest_out.push_back(std::move(t));
  }
}

void Runner::stage_train(std::uint64_t seed, const std::string& task,
                         const std::string& strategy) {
  const std::string key = seed_key(seed) + "/" + task + "/train/" + strategy;
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  manifest_.require_stage(seed_key(seed) + "/" + task + "/harvest", paths_.root.string(), key);

  const auto mode = distill::strategy_from_string(strategy);
  const auto& data = task_data(task);
  const auto& spec = registry_.get(task);
  const auto base = load_base(seed);

  std::vector<Sample> samples;
  std::vector<TeacherOutput> harvest;
  training_subset(seed, task, samples, harvest);
  if (samples.empty()) {
    throw std::runtime_error(key + ": no usable harvested samples (teacher produced nothing "
                                   "extractable); cannot train");
  }

  auto student =
      model::attach_lora(base, cfg_.lora, numerics::derive_seed(seed, task + "/lora"));

  distill::TrainHyper hyper;
  hyper.adam = cfg_.adam;
  hyper.batch_size = cfg_.batch_size;
  hyper.epochs = cfg_.epochs;

  const std::string tag = distill::strategy_tag(mode);
  distill::EvalCallback one_shot_metric = [&](const model::AdaptedModel& m) {
    return eval::accuracy_at_shots(m, tokenizer_, spec, 1, data.pool, data.test, cfg_.max_new,
                                   tag, nullptr);
  };

  const std::uint64_t train_seed = numerics::derive_seed(seed, task + "/train");
  distill::TrainResult result;
  if (mode == StrategyMode::SFT) {
    result = distill::train_sft(student, samples, spec, data.pool, tokenizer_, hyper, train_seed,
                                one_shot_metric);
  } else {
    StrategyConfig strat;
    strat.mode = mode;
    strat.m_range = cfg_.m_range;
    strat.keep_teacher_incorrect = cfg_.keep_teacher_incorrect;
    result = distill::train_secokd(student, samples, harvest, data.pool, tokenizer_, strat, hyper,
                                   train_seed, one_shot_metric);
  }

  const auto run_dir = paths_.run_dir(seed, task);
  const auto ckpt = run_dir / "checkpoints" / checkpoint_filename(strategy);
  fs::create_directories(ckpt.parent_path());
  model::save_checkpoint(student, ckpt.string());
  std::string stem = strategy;
  std::replace(stem.begin(), stem.end(), '-', '_');
  const auto log_file = run_dir / "logs" / ("train_" + stem + ".jsonl");
  const auto summary_file = run_dir / "logs" / ("train_" + stem + "_summary.json");
  write_train_log(log_file, result);
  write_train_summary(summary_file, result, student, static_cast<int>(samples.size()),
                      cfg_.keep_teacher_incorrect);
  std::cout << "[train] " << key << ": " << result.steps << " steps on " << samples.size()
            << " samples, best epoch " << result.best_epoch << " (one-shot "
            << result.best_metric << "), trainable fraction "
            << model::trainable_fraction(student) << "\n";
  finish_stage(key, {ckpt, log_file, summary_file});
}

void Runner::stage_sweep(std::uint64_t seed, const std::string& task) {
  const std::string key = seed_key(seed) + "/" + task + "/sweep";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  manifest_.require_stage(seed_key(seed) + "/pretrain", paths_.root.string(), key);
  for (const auto& strategy : cfg_.strategies) {
    manifest_.require_stage(seed_key(seed) + "/" + task + "/train/" + strategy,
                            paths_.root.string(), key);
  }

  const auto& data = task_data(task);
  const auto& spec = registry_.get(task);

  const auto results_dir = paths_.run_dir(seed, task) / "results";
  auto pred_out = open_out(results_dir / "predictions.jsonl");
  auto sink = [&pred_out](const eval::PredictionRecord& r) {
    write_prediction_line(pred_out, r);
  };

  std::vector<std::pair<std::string, model::AdaptedModel>> models;
  models.emplace_back("base", load_base(seed));
  for (const auto& strategy : cfg_.strategies) {
    models.emplace_back(distill::strategy_tag(distill::strategy_from_string(strategy)),
                        load_student(seed, task, strategy));
  }

  std::string csv = "model_tag";
  for (int s = 0; s <= tasks::kPoolSize; ++s) csv += ",shot" + std::to_string(s);
  csv += "\n";
  for (const auto& [tag, m] : models) {
    auto sweep = eval::sweep_shots(m, tokenizer_, spec, data.pool, data.test, tasks::kPoolSize,
                                   cfg_.max_new, tag, seed, sink);
    csv += tag;
    for (const auto& [shot, acc] : sweep.accuracy_by_shot) {
      (void)shot;
      csv += "," + fmt_acc(acc);
    }
    csv += "\n";
    std::cout << "[sweep] " << key << " " << tag << ": 0-shot "
              << fmt_acc(sweep.accuracy_by_shot.at(0)) << ", 1-shot "
              << fmt_acc(sweep.accuracy_by_shot.at(1)) << ", 8-shot "
              << fmt_acc(sweep.accuracy_by_shot.at(8)) << "\n";
  }
  pred_out.close();
  write_text(results_dir / "sweep.csv", csv);
  finish_stage(key, {results_dir / "predictions.jsonl", results_dir / "sweep.csv"});
}

void Runner::stage_difficulty(std::uint64_t seed, const std::string& task) {
  const std::string key = seed_key(seed) + "/" + task + "/difficulty";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  for (const auto& strategy : cfg_.strategies) {
    manifest_.require_stage(seed_key(seed) + "/" + task + "/train/" + strategy,
                            paths_.root.string(), key);
  }

  const auto& data = task_data(task);
  const auto& spec = registry_.get(task);

  const auto results_dir = paths_.run_dir(seed, task) / "results";
  auto pred_out = open_out(results_dir / "difficulty.jsonl");
  auto sink = [&pred_out](const eval::PredictionRecord& r) {
    write_prediction_line(pred_out, r);
  };

  std::vector<std::pair<std::string, model::AdaptedModel>> models;
  models.emplace_back("base", load_base(seed));
  for (const auto& strategy : cfg_.strategies) {
    models.emplace_back(distill::strategy_tag(distill::strategy_from_string(strategy)),
                        load_student(seed, task, strategy));
  }

  std::map<std::string, std::vector<int>> counts_by_tag;
  std::string profile_csv = "model_tag,easy,hard,hard_star\n";
  for (const auto& [tag, m] : models) {
    auto counts = eval::count_positive_demos_all(m, tokenizer_, spec, data.test, data.pool,
                                                 cfg_.max_new, tag, sink);
    auto profile = eval::profile_from_counts(counts);
    profile_csv += tag + "," + std::to_string(profile.easy) + "," + std::to_string(profile.hard) +
                   "," + std::to_string(profile.hard_star) + "\n";
    counts_by_tag[tag] = std::move(counts);
  }
  pred_out.close();

  std::string is_csv = "model_tag,improvement_score\n";
  for (const auto& [tag, counts] : counts_by_tag) {
    if (tag == "base") continue;
    const double is =
        eval::improvement_score(counts, counts_by_tag.at("base"), tasks::kPoolSize);
    is_csv += tag + "," + fmt_acc(is) + "\n";
    std::cout << "[difficulty] " << key << " " << tag << ": IS " << fmt_acc(is) << "\n";
  }
  write_text(results_dir / "difficulty.csv", profile_csv);
  write_text(results_dir / "improvement.csv", is_csv);
  finish_stage(key, {results_dir / "difficulty.jsonl", results_dir / "difficulty.csv",
                     results_dir / "improvement.csv"});
}

void Runner::stage_crosstask(std::uint64_t seed) {
  const std::string key = seed_key(seed) + "/crosstask";
  if (manifest_.stage_done(key, paths_.root.string())) {
    std::cout << "[skip] " << key << "\n";
    return;
  }
  // Cross-task evaluation follows the single-demo setting; it needs the
  // SeCoKD-S and SFT students for every task.
  std::vector<std::string> cross_strategies;
  for (const auto& s : cfg_.strategies) {
    if (s == "secokd-s" || s == "sft") cross_strategies.push_back(s);
  }
  for (const auto& task : cfg_.task_ids) {
    for (const auto& strategy : cross_strategies) {
      manifest_.require_stage(seed_key(seed) + "/" + task + "/train/" + strategy,
                              paths_.root.string(), key);
    }
  }

  std::map<std::string, eval::TaskEvalContext> contexts;
  for (const auto& task : cfg_.task_ids) {
    const auto& data = task_data(task);
    contexts[task] = eval::TaskEvalContext{&registry_.get(task), &data.pool, data.test};
  }

  const auto dir = paths_.crosstask_dir(seed);
  auto pred_out = open_out(dir / "predictions.jsonl");
  auto sink = [&pred_out](const eval::PredictionRecord& r) {
    write_prediction_line(pred_out, r);
  };

  const auto base = load_base(seed);
  std::vector<fs::path> artifacts = {dir / "predictions.jsonl"};
  for (const auto& strategy : cross_strategies) {
    const std::string tag = distill::strategy_tag(distill::strategy_from_string(strategy));
    std::map<std::string, model::AdaptedModel> trained;
    for (const auto& task : cfg_.task_ids) {
      trained.emplace(task, load_student(seed, task, strategy));
    }
    auto matrix = eval::cross_task_matrix(
        cfg_.task_ids,
        [&trained](const std::string& t) { return &trained.at(t); }, base, contexts, tokenizer_,
        cfg_.max_new, tag, sink);

    std::string csv = "train_task";
    std::string delta_csv = "train_task";
    for (const auto& t : matrix.tasks) {
      csv += "," + t;
      delta_csv += "," + t;
    }
    csv += "\n";
    delta_csv += "\n";
    for (size_t r = 0; r < matrix.tasks.size(); ++r) {
      csv += matrix.tasks[r];
      delta_csv += matrix.tasks[r];
      for (size_t c = 0; c < matrix.tasks.size(); ++c) {
        csv += "," + fmt_acc(matrix.cell(static_cast<int>(r), static_cast<int>(c)));
        delta_csv += "," + fmt_acc(matrix.delta(static_cast<int>(r), static_cast<int>(c)));
      }
      csv += "\n";
      delta_csv += "\n";
    }
    std::string base_row = "base";
    for (size_t c = 0; c < matrix.tasks.size(); ++c) {
      base_row += "," + fmt_acc(matrix.baseline[c]);
    }
    csv += base_row + "\n";

    const auto name = checkpoint_filename(strategy);
    const auto stem = name.substr(0, name.size() - 4);
    write_text(dir / ("crosstask_" + stem + ".csv"), csv);
    write_text(dir / ("crosstask_" + stem + "_delta.csv"), delta_csv);
    artifacts.push_back(dir / ("crosstask_" + stem + ".csv"));
    artifacts.push_back(dir / ("crosstask_" + stem + "_delta.csv"));
  }
  pred_out.close();
  finish_stage(key, artifacts);
}

void Runner::run_all() {
  stage_data();
  for (const auto seed : cfg_.seeds) {
    stage_pretrain(seed);
    for (const auto& task : cfg_.task_ids) {
      stage_harvest(seed, task);
      for (const auto& strategy : cfg_.strategies) stage_train(seed, task, strategy);
      stage_sweep(seed, task);
      stage_difficulty(seed, task);
    }
    stage_crosstask(seed);
  }
  emit_report(paths_.root.string());
}

RunManifest run_experiment(const RunConfig& cfg) {
  Runner runner(cfg);
  runner.run_all();
  return runner.manifest();
}

}  // namespace secokd::cli
