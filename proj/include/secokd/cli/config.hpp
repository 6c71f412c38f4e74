#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "secokd/model/config.hpp"
#include "secokd/numerics/optim.hpp"
#include "secokd/tasks/task.hpp"

namespace secokd::cli {

// Everything a full run needs, loadable from one JSON file. Two named presets
// ship with the binary: "desk" (fast defaults) and "paper" (the reference
// hyperparameters: LoRA r=32/alpha=64/dropout 0.05, lr 1e-4, warmup 0.02,
// batch 2, 800/200 splits).
struct RunConfig {
  std::string preset = "desk";
  std::vector<std::string> task_ids = {"coin_flip", "parity", "mod_add", "compare"};
  std::vector<std::string> strategies = {"secokd-s", "secokd-m", "sft"};

  model::TransformerConfig model;  // vocab_size 0 = derive from the tokenizer
  model::LoraConfig lora;

  std::pair<int, int> m_range = {1, 4};
  bool keep_teacher_incorrect = true;

  numerics::AdamConfig adam;
  int batch_size = 2;
  int epochs = 3;
  int max_new = 128;

  int pretrain_episodes = 3000;
  int pretrain_epochs = 1;
  double pretrain_lr = 3e-3;
  double pretrain_warmup_ratio = 0.02;
  std::vector<double> pretrain_shot_weights;  // empty = uniform over 0..8

  int n_train = 512;
  int n_test = 128;
  std::uint64_t data_seed = 7;
  tasks::TaskParams task_params;

  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir;
  int workers = 0;  // 0 = auto

  void validate() const;  // throws with the offending field named
};

RunConfig preset_config(const std::string& name);  // "desk" | "paper"

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

// Loads a config file. The file may name a "preset" to start from; any other
// present key overrides that base.
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace secokd::cli
