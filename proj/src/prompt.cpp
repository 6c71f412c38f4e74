#include "secokd/tasks/prompt.hpp"

#include <algorithm>

namespace secokd::tasks {

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\n\r";
  const auto start = s.find_first_not_of(ws);
  if (start == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(ws);
  return std::string(s.substr(start, end - start + 1));
}

}  // namespace

std::string format_prompt(std::span<const Demonstration> demos, const Sample& query) {
  std::string out;
  for (const auto& d : demos) {
    out += "Question: " + d.question + "\n";
    out += "Answer: " + supervision_text(d.rationale, d.answer) + "\n\n";
  }
  out += "Question: " + query.question + "\nAnswer:";
  return out;
}

std::string supervision_text(const std::string& rationale, const std::string& answer) {
  return rationale + " " + std::string(kAnswerMarker) + " " + answer;
}

std::optional<Extraction> extract_answer(std::string_view generated_text,
                                         std::span<const std::string> answer_set) {
  // Discard run-on continuation beyond the first blank line or echoed block.
  size_t cut = generated_text.size();
  if (const auto p = generated_text.find("\n\n"); p != std::string_view::npos) {
    cut = std::min(cut, p);
  }
  if (const auto p = generated_text.find("Question:"); p != std::string_view::npos) {
    cut = std::min(cut, p);
  }
  const std::string_view region = generated_text.substr(0, cut);

  const auto marker_pos = region.rfind(kAnswerMarker);
  if (marker_pos == std::string_view::npos) return std::nullopt;

  Extraction out;
  out.rationale = trim(region.substr(0, marker_pos));
  const std::string_view tail = region.substr(marker_pos + kAnswerMarker.size());
  for (const auto& tok : Tokenizer::split(tail)) {
    if (std::find(answer_set.begin(), answer_set.end(), tok) != answer_set.end()) {
      out.answer = tok;
      return out;
    }
  }
  return std::nullopt;
}

}  // namespace secokd::tasks
