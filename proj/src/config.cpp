#include "secokd/cli/config.hpp"

#include <fstream>
#include <stdexcept>

#include "secokd/distill/distill.hpp"

namespace secokd::cli {

using nlohmann::json;

void RunConfig::validate() const {
  tasks::TaskRegistry registry(task_params);
  for (const auto& t : task_ids) registry.get(t);  // throws on unknown task
  if (task_ids.empty()) throw std::invalid_argument("config: task_ids must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("config: split sizes must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (max_new < 1) throw std::invalid_argument("config: max_new must be >= 1");
  if (pretrain_episodes < 1) {
    throw std::invalid_argument("config: pretrain_episodes must be >= 1");
  }
  if (!pretrain_shot_weights.empty() &&
      pretrain_shot_weights.size() != static_cast<size_t>(tasks::kPoolSize) + 1) {
    throw std::invalid_argument("config: pretrain_shot_weights must cover shots 0..8");
  }
  for (const auto& s : strategies) distill::strategy_from_string(s);
  if (m_range.first < 1 || m_range.second < m_range.first ||
      m_range.second > tasks::kPoolSize) {
    throw std::invalid_argument("config: m_range must sit within [1, 8]");
  }
  lora.validate();
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  if (name == "desk") {
    cfg.preset = "desk";
    return cfg;
  }
  if (name == "paper") {
    cfg.preset = "paper";
    cfg.lora.rank = 32;
    cfg.lora.alpha = 64.0;
    cfg.lora.dropout = 0.05;
    cfg.adam.lr_base = 1e-4;
    cfg.adam.warmup_ratio = 0.02;
    cfg.batch_size = 2;
    cfg.n_train = 800;
    cfg.n_test = 200;
    return cfg;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk|paper)");
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  j["task_ids"] = cfg.task_ids;
  j["strategies"] = cfg.strategies;
  j["model"] = {{"vocab_size", cfg.model.vocab_size}, {"d_model", cfg.model.d_model},
                {"n_layers", cfg.model.n_layers},     {"n_heads", cfg.model.n_heads},
                {"d_ff", cfg.model.d_ff},             {"max_seq_len", cfg.model.max_seq_len}};
  j["lora"] = {{"rank", cfg.lora.rank},
               {"alpha", cfg.lora.alpha},
               {"dropout", cfg.lora.dropout},
               {"target_modules", cfg.lora.target_modules}};
  j["m_range"] = {cfg.m_range.first, cfg.m_range.second};
  j["keep_teacher_incorrect"] = cfg.keep_teacher_incorrect;
  j["optim"] = {{"lr", cfg.adam.lr_base},
                {"warmup_ratio", cfg.adam.warmup_ratio},
                {"beta1", cfg.adam.beta1},
                {"beta2", cfg.adam.beta2},
                {"eps", cfg.adam.eps},
                {"weight_decay", cfg.adam.weight_decay},
                {"grad_clip", cfg.adam.grad_clip},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs}};
  j["max_new"] = cfg.max_new;
  j["pretrain"] = {{"episodes", cfg.pretrain_episodes},
                   {"epochs", cfg.pretrain_epochs},
                   {"lr", cfg.pretrain_lr},
                   {"warmup_ratio", cfg.pretrain_warmup_ratio},
                   {"shot_weights", cfg.pretrain_shot_weights}};
  j["data"] = {{"n_train", cfg.n_train},
               {"n_test", cfg.n_test},
               {"data_seed", cfg.data_seed},
               {"coin_flip_people", {cfg.task_params.coin_flip_people.first,
                                     cfg.task_params.coin_flip_people.second}},
               {"parity_bits",
                {cfg.task_params.parity_bits.first, cfg.task_params.parity_bits.second}},
               {"mod_add_operand_max", cfg.task_params.mod_add_operand_max},
               {"mod_base", cfg.task_params.mod_base},
               {"compare_operand_max", cfg.task_params.compare_operand_max}};
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["workers"] = cfg.workers;
  return j;
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_pair(const json& j, const char* key, std::pair<int, int>& out) {
  if (j.contains(key)) {
    const auto v = j.at(key).get<std::vector<int>>();
    if (v.size() != 2) throw std::invalid_argument(std::string("config: ") + key + " needs 2 ints");
    out = {v[0], v[1]};
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  if (j.contains("preset")) cfg = preset_config(j.at("preset").get<std::string>());
  maybe(j, "task_ids", cfg.task_ids);
  maybe(j, "strategies", cfg.strategies);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    maybe(m, "vocab_size", cfg.model.vocab_size);
    maybe(m, "d_model", cfg.model.d_model);
    maybe(m, "n_layers", cfg.model.n_layers);
    maybe(m, "n_heads", cfg.model.n_heads);
    maybe(m, "d_ff", cfg.model.d_ff);
    maybe(m, "max_seq_len", cfg.model.max_seq_len);
  }
  if (j.contains("lora")) {
    const auto& l = j.at("lora");
    maybe(l, "rank", cfg.lora.rank);
    maybe(l, "alpha", cfg.lora.alpha);
    maybe(l, "dropout", cfg.lora.dropout);
    maybe(l, "target_modules", cfg.lora.target_modules);
  }
  maybe_pair(j, "m_range", cfg.m_range);
  maybe(j, "keep_teacher_incorrect", cfg.keep_teacher_incorrect);
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    maybe(o, "lr", cfg.adam.lr_base);
    maybe(o, "warmup_ratio", cfg.adam.warmup_ratio);
    maybe(o, "beta1", cfg.adam.beta1);
    maybe(o, "beta2", cfg.adam.beta2);
    maybe(o, "eps", cfg.adam.eps);
    maybe(o, "weight_decay", cfg.adam.weight_decay);
    maybe(o, "grad_clip", cfg.adam.grad_clip);
    maybe(o, "batch_size", cfg.batch_size);
    maybe(o, "epochs", cfg.epochs);
  }
  maybe(j, "max_new", cfg.max_new);
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    maybe(p, "episodes", cfg.pretrain_episodes);
    maybe(p, "epochs", cfg.pretrain_epochs);
    maybe(p, "lr", cfg.pretrain_lr);
    maybe(p, "warmup_ratio", cfg.pretrain_warmup_ratio);
    maybe(p, "shot_weights", cfg.pretrain_shot_weights);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    maybe(d, "n_train", cfg.n_train);
    maybe(d, "n_test", cfg.n_test);
    maybe(d, "data_seed", cfg.data_seed);
    maybe_pair(d, "coin_flip_people", cfg.task_params.coin_flip_people);
    maybe_pair(d, "parity_bits", cfg.task_params.parity_bits);
    maybe(d, "mod_add_operand_max", cfg.task_params.mod_add_operand_max);
    maybe(d, "mod_base", cfg.task_params.mod_base);
    maybe(d, "compare_operand_max", cfg.task_params.compare_operand_max);
  }
  maybe(j, "seeds", cfg.seeds);
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "workers", cfg.workers);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace secokd::cli
