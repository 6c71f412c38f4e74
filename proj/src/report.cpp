#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "secokd/cli/stages.hpp"
#include "secokd/eval/eval.hpp"

namespace secokd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PredRow {
  std::string model_tag;
  std::string task;
  int shots = -1;
  int demo_index = -1;
  std::string sample_ref;
  bool correct = false;
};

std::vector<PredRow> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report: cannot open results file " + path.string());
  std::vector<PredRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      PredRow r;
      r.model_tag = j.at("model_tag").get<std::string>();
      r.task = j.at("task").get<std::string>();
      if (j.contains("shots")) r.shots = j.at("shots").get<int>();
      if (j.contains("demo_index")) r.demo_index = j.at("demo_index").get<int>();
      r.sample_ref = j.at("sample_ref").get<std::string>();
      r.correct = j.at("correct").get<bool>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error("report: malformed results line " + path.string() + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct Tally {
  int correct = 0;
  int total = 0;
  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot write " + path.string());
  out << text;
}

}  // namespace

void emit_report(const std::string& run_dir) {
  RunPaths paths;
  paths.root = fs::path(run_dir);
  if (!fs::exists(paths.config_file())) {
    throw std::runtime_error("report: no results under " + run_dir + " (missing config.json)");
  }
  const RunConfig cfg = load_config(paths.config_file().string());

  std::vector<std::string> tags = {"base"};
  for (const auto& s : cfg.strategies) {
    tags.push_back(distill::strategy_tag(distill::strategy_from_string(s)));
  }

  // ---- shot sweeps ----
  // task -> tag -> shot -> per-seed accuracy, in config seed order.
  std::map<std::string, std::map<std::string, std::map<int, std::vector<double>>>> sweep;
  for (const auto seed : cfg.seeds) {
    for (const auto& task : cfg.task_ids) {
      const auto file = paths.run_dir(seed, task) / "results" / "predictions.jsonl";
      std::map<std::string, std::map<int, Tally>> tallies;
      for (const auto& row : read_predictions(file)) {
        if (row.shots < 0) continue;
        auto& t = tallies[row.model_tag][row.shots];
        t.total += 1;
        t.correct += row.correct ? 1 : 0;
      }
      for (const auto& [tag, by_shot] : tallies) {
        for (const auto& [shot, tally] : by_shot) {
          sweep[task][tag][shot].push_back(tally.ratio());
        }
      }
    }
  }

  // ---- improvement scores from the per-demo probes ----
  // task -> tag -> per-seed IS.
  std::map<std::string, std::map<std::string, std::vector<double>>> is_scores;
  // task -> tag -> mean class tallies over seeds.
  std::map<std::string, std::map<std::string, std::array<double, 3>>> difficulty_classes;
  for (const auto seed : cfg.seeds) {
    for (const auto& task : cfg.task_ids) {
      const auto file = paths.run_dir(seed, task) / "results" / "difficulty.jsonl";
      // tag -> sample_ref -> positive count.
      std::map<std::string, std::map<std::string, int>> counts;
      for (const auto& row : read_predictions(file)) {
        if (row.demo_index < 0) continue;
        counts[row.model_tag];  // ensure tag exists even with zero positives
        auto& per_sample = counts[row.model_tag];
        per_sample.emplace(row.sample_ref, 0);
        if (row.correct) per_sample[row.sample_ref] += 1;
      }
      const auto base_it = counts.find("base");
      if (base_it == counts.end()) {
        throw std::runtime_error("report: no base-model difficulty probes in " + file.string());
      }
      for (const auto& [tag, per_sample] : counts) {
        std::vector<int> vec;
        for (const auto& [ref, n] : per_sample) vec.push_back(n);
        auto profile = eval::profile_from_counts(vec);
        auto& cls = difficulty_classes[task][tag];
        cls[0] += profile.easy;
        cls[1] += profile.hard;
        cls[2] += profile.hard_star;
        if (tag == "base") continue;
        if (per_sample.size() != base_it->second.size()) {
          throw std::runtime_error("report: difficulty probe sample sets differ between base and " +
                                   tag + " in " + file.string());
        }
        std::vector<int> fin, bas;
        for (const auto& [ref, n] : per_sample) {
          fin.push_back(n);
          bas.push_back(base_it->second.at(ref));
        }
        is_scores[task][tag].push_back(eval::improvement_score(fin, bas, tasks::kPoolSize));
      }
    }
  }
  for (auto& [task, by_tag] : difficulty_classes) {
    for (auto& [tag, cls] : by_tag) {
      for (double& v : cls) v /= static_cast<double>(cfg.seeds.size());
    }
  }

  // ---- cross-task matrices ----
  // tag -> train task -> test task -> per-seed accuracy; "base" keyed by test task.
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> cross;
  std::map<std::string, std::vector<double>> cross_base;
  {
    std::map<std::string, std::map<std::string, Tally>> dummy;
    for (const auto seed : cfg.seeds) {
      const auto file = paths.crosstask_dir(seed) / "predictions.jsonl";
      if (!fs::exists(file)) continue;  // crosstask stage not part of this run
      std::map<std::string, std::map<std::string, Tally>> tallies;  // tag -> test task -> tally
      for (const auto& row : read_predictions(file)) {
        auto& t = tallies[row.model_tag][row.task];
        t.total += 1;
        t.correct += row.correct ? 1 : 0;
      }
      for (const auto& [tag, by_task] : tallies) {
        if (tag == "base") {
          for (const auto& [task, tally] : by_task) cross_base[task].push_back(tally.ratio());
          continue;
        }
        const auto open = tag.find("[train=");
        if (open == std::string::npos || tag.back() != ']') continue;
        const std::string method = tag.substr(0, open);
        const std::string train_task = tag.substr(open + 7, tag.size() - open - 8);
        for (const auto& [task, tally] : by_task) {
          cross[method][train_task][task].push_back(tally.ratio());
        }
      }
    }
    (void)dummy;
  }

  // ---- render ----
  const auto report = paths.report_dir();
  std::ostringstream summary;
  summary << "Run report\n==========\n\n";
  summary << "Tasks: ";
  for (size_t i = 0; i < cfg.task_ids.size(); ++i) {
    summary << (i ? ", " : "") << cfg.task_ids[i];
  }
  summary << "\nSeeds: ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) summary << (i ? ", " : "") << cfg.seeds[i];
  summary << "\nMethods: ";
  for (size_t i = 0; i < tags.size(); ++i) summary << (i ? ", " : "") << tags[i];
  summary << "\n\nNote: the base model is pretrained from scratch on mixed k-shot episodes\n"
             "(held-out generator seeds) to give the toy transformer in-context ability;\n"
             "a pretrained LLM plays this role at full scale.\n"
             "Note: checkpoint selection uses one-shot accuracy on the test set, which\n"
             "leaks test signal into model choice; kept for fidelity and flagged here.\n\n";

  // One-shot accuracy table: rows = method, cols = task, mean over seeds.
  {
    std::string csv = "model_tag";
    for (const auto& task : cfg.task_ids) csv += "," + task;
    csv += "\n";
    summary << "One-shot accuracy (mean over seeds)\n";
    summary << "  " << std::string(12, ' ');
    for (const auto& task : cfg.task_ids) summary << " " << task;
    summary << "\n";
    for (const auto& tag : tags) {
      csv += tag;
      summary << "  ";
      summary.width(12);
      summary << std::left << tag;
      for (const auto& task : cfg.task_ids) {
        const auto& per_seed = sweep.at(task).at(tag).at(1);
        const double m = mean(per_seed);
        csv += "," + fmt(m);
        summary << " " << fmt4(m) << std::string(task.size() > 6 ? task.size() - 6 : 0, ' ');
      }
      csv += "\n";
      summary << "\n";
    }
    write_file(report / "one_shot_accuracy.csv", csv);
    summary << "\n";
  }

  // Shot sweep CSV per task: mean row + per-seed rows per method.
  for (const auto& task : cfg.task_ids) {
    std::string csv = "model_tag,seed";
    for (int s = 0; s <= tasks::kPoolSize; ++s) csv += ",shot" + std::to_string(s);
    csv += "\n";
    for (const auto& tag : tags) {
      csv += tag + ",mean";
      for (int s = 0; s <= tasks::kPoolSize; ++s) {
        csv += "," + fmt(mean(sweep.at(task).at(tag).at(s)));
      }
      csv += "\n";
      for (size_t i = 0; i < cfg.seeds.size(); ++i) {
        csv += tag + "," + std::to_string(cfg.seeds[i]);
        for (int s = 0; s <= tasks::kPoolSize; ++s) {
          csv += "," + fmt(sweep.at(task).at(tag).at(s).at(i));
        }
        csv += "\n";
      }
    }
    write_file(report / ("sweep_" + task + ".csv"), csv);
  }

  // Improvement scores: rows = method, cols = task.
  {
    std::string csv = "model_tag";
    for (const auto& task : cfg.task_ids) csv += "," + task;
    csv += "\n";
    summary << "Improvement score (mean over seeds; >1 means queries got easier)\n";
    for (const auto& tag : tags) {
      if (tag == "base") continue;
      csv += tag;
      summary << "  ";
      summary.width(12);
      summary << std::left << tag;
      for (const auto& task : cfg.task_ids) {
        const double m = mean(is_scores.at(task).at(tag));
        csv += "," + fmt(m);
        summary << " " << fmt4(m);
      }
      csv += "\n";
      summary << "\n";
    }
    write_file(report / "improvement_scores.csv", csv);
    summary << "\n";
  }

  // Difficulty class distribution.
  summary << "Difficulty classes (easy/hard/hard*, mean counts over seeds)\n";
  for (const auto& task : cfg.task_ids) {
    summary << "  " << task << ":\n";
    for (const auto& tag : tags) {
      const auto it = difficulty_classes.at(task).find(tag);
      if (it == difficulty_classes.at(task).end()) continue;
      summary << "    ";
      summary.width(12);
      summary << std::left << tag;
      summary << " " << fmt(it->second[0]) << " / " << fmt(it->second[1]) << " / "
              << fmt(it->second[2]) << "\n";
    }
  }
  summary << "\n";

  // Cross-task matrices (mean over seeds).
  for (const auto& [method, by_train] : cross) {
    std::string csv = "train_task";
    std::string delta_csv = "train_task";
    for (const auto& task : cfg.task_ids) {
      csv += "," + task;
      delta_csv += "," + task;
    }
    csv += "\n";
    delta_csv += "\n";
    summary << "Cross-task one-shot accuracy, " << method
            << " (rows: training task, cols: testing task)\n";
    for (const auto& train_task : cfg.task_ids) {
      csv += train_task;
      delta_csv += train_task;
      summary << "  ";
      summary.width(12);
      summary << std::left << train_task;
      for (const auto& test_task : cfg.task_ids) {
        const double m = mean(by_train.at(train_task).at(test_task));
        const double d = m - mean(cross_base.at(test_task));
        csv += "," + fmt(m);
        delta_csv += "," + fmt(d);
        summary << " " << fmt4(m);
      }
      csv += "\n";
      delta_csv += "\n";
      summary << "\n";
    }
    std::string base_row = "base";
    for (const auto& test_task : cfg.task_ids) {
      base_row += "," + fmt(mean(cross_base.at(test_task)));
    }
    csv += base_row + "\n";
    std::string method_file = method;
    std::transform(method_file.begin(), method_file.end(), method_file.begin(),
                   [](unsigned char c) { return std::tolower(c == '-' ? '_' : c); });
    write_file(report / ("crosstask_" + method_file + ".csv"), csv);
    write_file(report / ("crosstask_" + method_file + "_delta.csv"), delta_csv);
    summary << "\n";
  }

  write_file(report / "summary.txt", summary.str());
  std::cout << "[report] written to " << report.string() << "\n";
}

}  // namespace secokd::cli
