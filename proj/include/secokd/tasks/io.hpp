#pragma once

#include <string>
#include <vector>

#include "secokd/tasks/task.hpp"

namespace secokd::tasks {

// JSON Lines, one sample per line: {task_id, question, label, split}.
void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_samples_jsonl(const std::string& path);

// Pool as a JSON document listing the {question, rationale, answer} objects.
void write_pool_json(const std::string& path, const DemonstrationPool& pool);
DemonstrationPool read_pool_json(const std::string& path);

}  // namespace secokd::tasks
