#include "secokd/tasks/task.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "secokd/tasks/prompt.hpp"

namespace secokd::tasks {

using numerics::Rng;

namespace {

const std::vector<std::string>& people_names() {
  static const std::vector<std::string> names = {"Anna",  "Ben",   "Carla", "David",
                                                 "Erin",  "Frank", "Grace", "Henry"};
  return names;
}

std::vector<std::string> number_words(int lo, int hi) {
  std::vector<std::string> out;
  for (int i = lo; i <= hi; ++i) out.push_back(std::to_string(i));
  return out;
}

// ---- coin flip ----

Sample draw_coin_flip(Rng& rng, std::pair<int, int> range) {
  const int k = rng.range(range.first, range.second);
  std::vector<std::string> names = people_names();
  rng.shuffle(names);
  std::string q = "A coin is heads up.";
  int flips = 0;
  for (int i = 0; i < k; ++i) {
    const bool does_flip = rng.below(2) == 1;
    if (does_flip) {
      q += " " + names[static_cast<size_t>(i)] + " flips the coin.";
      ++flips;
    } else {
      q += " " + names[static_cast<size_t>(i)] + " does not flip the coin.";
    }
  }
  q += " Is the coin still heads up?";
  Sample s;
  s.task_id = "coin_flip";
  s.question = std::move(q);
  s.label = (flips % 2 == 0) ? "yes" : "no";
  return s;
}

struct CoinAction {
  std::string name;
  bool flips = false;
};

std::vector<CoinAction> parse_coin_actions(const std::string& question) {
  const auto toks = Tokenizer::split(question);
  std::vector<CoinAction> actions;
  // Skip the leading "A coin is heads up ." then read person sentences until "Is".
  size_t i = 6;
  while (i < toks.size() && toks[i] != "Is") {
    CoinAction a;
    a.name = toks[i];
    if (i + 1 < toks.size() && toks[i + 1] == "flips") {
      a.flips = true;
      i += 5;  // Name flips the coin .
    } else {
      a.flips = false;
      i += 7;  // Name does not flip the coin .
    }
    actions.push_back(std::move(a));
  }
  if (actions.empty()) {
    throw std::invalid_argument("coin_flip: malformed question '" + question + "'");
  }
  return actions;
}

std::string coin_flip_rationale(const Sample& s) {
  const auto actions = parse_coin_actions(s.question);
  bool heads = true;
  std::string r;
  for (const auto& a : actions) {
    if (!r.empty()) r += " ";
    if (a.flips) {
      heads = !heads;
      r += a.name + " flips the coin. The coin is now " + (heads ? "heads" : "tails") + " up.";
    } else {
      r += a.name + " does not flip the coin. The coin is still " + (heads ? "heads" : "tails") +
           " up.";
    }
  }
  r += heads ? " So the coin is still heads up." : " So the coin is not heads up.";
  if ((heads ? "yes" : "no") != s.label) {
    throw std::logic_error("coin_flip: rationale state disagrees with label for '" + s.question +
                           "'");
  }
  return r;
}

// ---- parity ----

Sample draw_parity(Rng& rng, std::pair<int, int> bits_range) {
  const int len = rng.range(bits_range.first, bits_range.second);
  std::string bits;
  int ones = 0;
  for (int i = 0; i < len; ++i) {
    const bool one = rng.below(2) == 1;
    if (i) bits += " ";
    bits += one ? "1" : "0";
    ones += one ? 1 : 0;
  }
  Sample s;
  s.task_id = "parity";
  s.question = "What is the parity of the bit string " + bits + "?";
  s.label = (ones % 2 == 0) ? "even" : "odd";
  return s;
}

std::string parity_rationale(const Sample& s) {
  const auto toks = Tokenizer::split(s.question);
  int ones = 0;
  bool in_bits = false;
  for (const auto& t : toks) {
    if (t == "string") {
      in_bits = true;
      continue;
    }
    if (!in_bits || t == "?") continue;
    if (t == "1") ++ones;
  }
  const std::string par = (ones % 2 == 0) ? "even" : "odd";
  if (par != s.label) {
    throw std::logic_error("parity: rationale disagrees with label for '" + s.question + "'");
  }
  return "The number of ones is " + std::to_string(ones) + ". " + std::to_string(ones) + " is " +
         par + ". So the parity is " + par + ".";
}

// ---- modular addition ----

Sample draw_mod_add(Rng& rng, const TaskParams& p) {
  const int a = rng.range(0, p.mod_add_operand_max);
  const int b = rng.range(0, p.mod_add_operand_max);
  Sample s;
  s.task_id = "mod_add";
  s.question = "What is " + std::to_string(a) + " plus " + std::to_string(b) + " modulo " +
               std::to_string(p.mod_base) + "?";
  s.label = std::to_string((a + b) % p.mod_base);
  return s;
}

std::string mod_add_rationale(const Sample& s) {
  const auto toks = Tokenizer::split(s.question);
  // What is {a} plus {b} modulo {m} ?
  const int a = std::stoi(toks.at(2));
  const int b = std::stoi(toks.at(4));
  const int m = std::stoi(toks.at(6));
  const int sum = a + b;
  const int r = sum % m;
  if (std::to_string(r) != s.label) {
    throw std::logic_error("mod_add: rationale disagrees with label for '" + s.question + "'");
  }
  return std::to_string(a) + " plus " + std::to_string(b) + " equals " + std::to_string(sum) +
         ". " + std::to_string(sum) + " modulo " + std::to_string(m) + " equals " +
         std::to_string(r) + ".";
}

// ---- comparison ----

Sample draw_compare(Rng& rng, const TaskParams& p) {
  const int a = rng.range(0, p.compare_operand_max);
  int b = rng.range(0, p.compare_operand_max);
  while (b == a) b = rng.range(0, p.compare_operand_max);
  Sample s;
  s.task_id = "compare";
  s.question = "Is " + std::to_string(a) + " greater than " + std::to_string(b) + "?";
  s.label = a > b ? "yes" : "no";
  return s;
}

std::string compare_rationale(const Sample& s) {
  const auto toks = Tokenizer::split(s.question);
  // Is {a} greater than {b} ?
  const int a = std::stoi(toks.at(1));
  const int b = std::stoi(toks.at(4));
  if (((a > b) ? "yes" : "no") != s.label) {
    throw std::logic_error("compare: rationale disagrees with label for '" + s.question + "'");
  }
  if (a > b) return std::to_string(a) + " is greater than " + std::to_string(b) + ".";
  return std::to_string(a) + " is not greater than " + std::to_string(b) + ".";
}

std::vector<std::string> with_words(std::vector<std::string> v,
                                    std::initializer_list<const char*> extra) {
  for (const char* w : extra) v.emplace_back(w);
  return v;
}

}  // namespace

TaskRegistry::TaskRegistry(TaskParams params) : params_(params) {
  if (params_.coin_flip_people.first < 1 || params_.coin_flip_people.second > 8 ||
      params_.coin_flip_people.first > params_.coin_flip_people.second) {
    throw std::invalid_argument("TaskParams: coin_flip_people range must sit within [1, 8]");
  }

  TaskSpec coin;
  coin.id = "coin_flip";
  coin.answer_set = {"yes", "no"};
  coin.draw = [p = params_](Rng& rng) { return draw_coin_flip(rng, p.coin_flip_people); };
  coin.rationale = coin_flip_rationale;
  coin.vocabulary = with_words(people_names(),
                               {"A", "coin", "is", "heads", "tails", "up", "the", "still", "Is",
                                "flips", "flip", "does", "not", "The", "now", "So", "yes", "no"});
  specs_.push_back(std::move(coin));

  TaskSpec parity;
  parity.id = "parity";
  parity.answer_set = {"even", "odd"};
  parity.draw = [p = params_](Rng& rng) { return draw_parity(rng, p.parity_bits); };
  parity.rationale = parity_rationale;
  parity.vocabulary =
      with_words(number_words(0, std::max(1, params_.parity_bits.second)),
                 {"What", "is", "the", "parity", "of", "bit", "string", "The", "number", "ones",
                  "even", "odd", "So"});
  specs_.push_back(std::move(parity));

  TaskSpec mod_add;
  mod_add.id = "mod_add";
  for (int d = 0; d < params_.mod_base; ++d) mod_add.answer_set.push_back(std::to_string(d));
  mod_add.draw = [p = params_](Rng& rng) { return draw_mod_add(rng, p); };
  mod_add.rationale = mod_add_rationale;
  mod_add.vocabulary =
      with_words(number_words(0, std::max(2 * params_.mod_add_operand_max, params_.mod_base)),
                 {"What", "is", "plus", "modulo", "equals"});
  specs_.push_back(std::move(mod_add));

  TaskSpec compare;
  compare.id = "compare";
  compare.answer_set = {"yes", "no"};
  compare.draw = [p = params_](Rng& rng) { return draw_compare(rng, p); };
  compare.rationale = compare_rationale;
  compare.vocabulary = with_words(number_words(0, params_.compare_operand_max),
                                  {"Is", "is", "greater", "than", "not", "yes", "no"});
  specs_.push_back(std::move(compare));

  for (const auto& s : specs_) ids_.push_back(s.id);
}

const TaskSpec& TaskRegistry::get(const std::string& task_id) const {
  for (const auto& s : specs_) {
    if (s.id == task_id) return s;
  }
  throw std::invalid_argument("TaskRegistry: unknown task '" + task_id + "'");
}

Tokenizer TaskRegistry::build_tokenizer() const {
  std::vector<std::string> words = {"Question", "Answer", "The", "answer", "is"};
  for (const auto& s : specs_) {
    words.insert(words.end(), s.vocabulary.begin(), s.vocabulary.end());
    words.insert(words.end(), s.answer_set.begin(), s.answer_set.end());
  }
  return Tokenizer::build(std::move(words));
}

std::vector<Sample> gen_coin_flip(std::uint64_t seed, std::pair<int, int> n_flippers_range,
                                  int count, const TaskParams& params) {
  if (n_flippers_range.first < 1 || n_flippers_range.second > 8 ||
      n_flippers_range.first > n_flippers_range.second) {
    throw std::invalid_argument("gen_coin_flip: range must be nonempty and within [1, 8]");
  }
  if (count < 1) throw std::invalid_argument("gen_coin_flip: count must be >= 1");
  (void)params;
  Rng rng(numerics::derive_seed(seed, "gen/coin_flip"));
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(draw_coin_flip(rng, n_flippers_range));
  return out;
}

std::vector<Sample> gen_synthetic_task(const std::string& kind, std::uint64_t seed, int count,
                                       const TaskParams& params) {
  if (count < 1) throw std::invalid_argument("gen_synthetic_task: count must be >= 1");
  Rng rng(numerics::derive_seed(seed, "gen/" + kind));
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    if (kind == "parity") {
      out.push_back(draw_parity(rng, params.parity_bits));
    } else if (kind == "mod_add") {
      out.push_back(draw_mod_add(rng, params));
    } else if (kind == "compare") {
      out.push_back(draw_compare(rng, params));
    } else {
      throw std::invalid_argument("gen_synthetic_task: unknown kind '" + kind + "'");
    }
  }
  return out;
}

DemonstrationPool build_pool(const TaskRegistry& registry, const std::string& task_id,
                             std::uint64_t seed) {
  const TaskSpec& spec = registry.get(task_id);
  if (!spec.rationale) {
    throw std::invalid_argument("build_pool: task '" + task_id + "' has no rationale template");
  }
  Rng rng(numerics::derive_seed(seed, task_id + "/pool"));
  DemonstrationPool pool;
  pool.task_id = task_id;
  std::unordered_set<std::string> seen;
  int guard = 0;
  while (pool.size() < kPoolSize) {
    if (++guard > 10000) {
      throw std::runtime_error("build_pool: cannot draw " + std::to_string(kPoolSize) +
                               " unique questions for '" + task_id + "'");
    }
    Sample s = spec.draw(rng);
    if (!seen.insert(s.question).second) continue;
    Demonstration d;
    d.question = s.question;
    d.rationale = spec.rationale(s);
    d.answer = s.label;
    pool.demos.push_back(std::move(d));
  }
  return pool;
}

TaskData build_task_data(const TaskRegistry& registry, const std::string& task_id,
                         std::uint64_t seed, int n_train, int n_test) {
  const TaskSpec& spec = registry.get(task_id);
  TaskData data;
  data.pool = build_pool(registry, task_id, seed);

  std::unordered_set<std::string> seen;
  for (const auto& d : data.pool.demos) seen.insert(d.question);

  Rng rng(numerics::derive_seed(seed, task_id + "/splits"));
  const int total = n_train + n_test;
  std::vector<Sample> drawn;
  int guard = 0;
  const int guard_limit = 400 * std::max(total, 1);
  while (static_cast<int>(drawn.size()) < total) {
    if (++guard > guard_limit) {
      throw std::runtime_error("build_task_data: question space of '" + task_id +
                               "' too small for " + std::to_string(total) + " unique samples");
    }
    Sample s = spec.draw(rng);
    if (!seen.insert(s.question).second) continue;
    drawn.push_back(std::move(s));
  }
  for (int i = 0; i < n_train; ++i) {
    drawn[static_cast<size_t>(i)].split = "train";
    data.train.push_back(std::move(drawn[static_cast<size_t>(i)]));
  }
  for (int i = n_train; i < total; ++i) {
    drawn[static_cast<size_t>(i)].split = "test";
    data.test.push_back(std::move(drawn[static_cast<size_t>(i)]));
  }
  return data;
}

int longest_prompt_tokens(const Tokenizer& tokenizer, const DemonstrationPool& pool,
                          std::span<const Sample> queries, int shots) {
  std::span<const Demonstration> demos(pool.demos.data(),
                                       static_cast<size_t>(std::min(shots, pool.size())));
  int longest = 0;
  for (const auto& q : queries) {
    const auto ids = tokenizer.tokenize(format_prompt(demos, q));
    longest = std::max(longest, static_cast<int>(ids.size()));
  }
  return longest;
}

}  // namespace secokd::tasks
