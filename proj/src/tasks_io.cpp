#include "secokd/tasks/io.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace secokd::tasks {

using nlohmann::json;

void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_samples_jsonl: cannot open " + path);
  for (const auto& s : samples) {
    const json j = {{"task_id", s.task_id},
                    {"question", s.question},
                    {"label", s.label},
                    {"split", s.split}};
    out << j.dump() << "\n";
  }
}

std::vector<Sample> read_samples_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_samples_jsonl: cannot open " + path);
  std::vector<Sample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("read_samples_jsonl: " + path + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    Sample s;
    s.task_id = j.at("task_id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.label = j.at("label").get<std::string>();
    s.split = j.at("split").get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

void write_pool_json(const std::string& path, const DemonstrationPool& pool) {
  json demos = json::array();
  for (const auto& d : pool.demos) {
    demos.push_back(
        {{"question", d.question}, {"rationale", d.rationale}, {"answer", d.answer}});
  }
  const json j = {{"task_id", pool.task_id}, {"demos", std::move(demos)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_pool_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

DemonstrationPool read_pool_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_pool_json: cannot open " + path);
  json j;
  in >> j;
  DemonstrationPool pool;
  pool.task_id = j.at("task_id").get<std::string>();
  for (const auto& dj : j.at("demos")) {
    Demonstration d;
    d.question = dj.at("question").get<std::string>();
    d.rationale = dj.at("rationale").get<std::string>();
    d.answer = dj.at("answer").get<std::string>();
    pool.demos.push_back(std::move(d));
  }
  return pool;
}

}  // namespace secokd::tasks
