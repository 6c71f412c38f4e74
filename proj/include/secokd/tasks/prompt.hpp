#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "secokd/tasks/task.hpp"

namespace secokd::tasks {

inline constexpr std::string_view kAnswerMarker = "The answer is:";

// "Question: {q}\nAnswer: {rationale} The answer is: {a}\n\n" per demo, then
// "Question: {query}\nAnswer:". Zero demos yields the bare query block.
std::string format_prompt(std::span<const Demonstration> demos, const Sample& query);

// "{rationale} The answer is: {answer}" — the text a demo contributes after
// "Answer:", and the shape teacher supervision takes.
std::string supervision_text(const std::string& rationale, const std::string& answer);

struct Extraction {
  std::string rationale;
  std::string answer;
};

// Splits generated text into rationale and canonical answer. Run-on
// generation is discarded first (everything at and after the first blank line
// or "Question:"), then the split happens at the LAST answer marker, and the
// answer is the first token after the marker that is in answer_set. Returns
// nullopt when the marker is absent or no canonical token follows.
std::optional<Extraction> extract_answer(std::string_view generated_text,
                                         std::span<const std::string> answer_set);

}  // namespace secokd::tasks
