#include "pllm/instruct.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pllm/embedded_data.hpp"
#include "pllm/io_util.hpp"
#include "pllm/numbers.hpp"
#include "pllm/rng.hpp"

namespace pllm {

namespace {

constexpr u64 kSplitTagTrain = 0x747261696eULL;
constexpr u64 kSplitTagVal = 0x76616cULL;
constexpr u64 kSplitTagTest = 0x74657374ULL;

u64 split_tag(Split s) {
  switch (s) {
    case Split::train: return kSplitTagTrain;
    case Split::val: return kSplitTagVal;
    case Split::test: return kSplitTagTest;
  }
  return 0;
}

u64 fnv1a(const std::string& s) {
  u64 h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ~10% of the pool is reserved for unseen-word evaluation; membership is a
// stable function of the word itself so it never depends on pool order.
bool is_holdout_word(const std::string& w) { return fnv1a(w) % 10 == 0; }

std::vector<std::string> parse_lines(const char* text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

struct TemplateSet {
  std::vector<std::string> question[3];
  std::vector<std::string> answer[3];
};

const TemplateSet& templates() {
  static const TemplateSet sets = [] {
    TemplateSet s;
    std::istringstream in(data::kTemplates);
    std::string line;
    std::vector<std::string>* current = nullptr;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      if (line.front() == '[' && line.back() == ']') {
        const std::string section = line.substr(1, line.size() - 2);
        const auto dot = section.find('.');
        const std::string task_name = section.substr(0, dot);
        const std::string kind = section.substr(dot + 1);
        const auto task = task_from_string(task_name);
        if (!task || (kind != "question" && kind != "answer"))
          throw std::runtime_error("bad template section: " + section);
        current = kind == "question" ? &s.question[static_cast<int>(*task)]
                                     : &s.answer[static_cast<int>(*task)];
        continue;
      }
      if (!current) throw std::runtime_error("template line outside a section");
      current->push_back(line);
    }
    for (int t = 0; t < 3; ++t) {
      if (s.question[t].size() != 10 || s.answer[t].size() != 10)
        throw std::runtime_error("each task needs exactly 10 question and 10 answer templates");
    }
    return s;
  }();
  return sets;
}

std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  const std::string needle = "{" + key + "}";
  size_t pos = 0;
  while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
    tmpl.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return tmpl;
}

std::string zero_pad(i64 v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

nlohmann::json pair_to_json(const QAPair& p) {
  nlohmann::json j;
  j["id"] = p.id;
  j["task"] = to_string(p.task);
  j["question"] = p.question;
  j["answer"] = p.answer;
  j["key_count"] = p.key_count;
  j["keyword"] = p.keyword;
  if (p.modality_ref) j["modality_ref"] = *p.modality_ref; else j["modality_ref"] = nullptr;
  j["template_ids"] = {{"question", p.template_ids.question}, {"answer", p.template_ids.answer}};
  return j;
}

QAPair pair_from_json(const nlohmann::json& j) {
  QAPair p;
  p.id = j.at("id").get<std::string>();
  const auto task = task_from_string(j.at("task").get<std::string>());
  if (!task) throw std::runtime_error("unknown task: " + j.at("task").get<std::string>());
  p.task = *task;
  p.question = j.at("question").get<std::string>();
  p.answer = j.at("answer").get<std::string>();
  p.key_count = j.at("key_count").get<long long>();
  p.keyword = j.at("keyword").get<std::string>();
  if (j.contains("modality_ref") && !j.at("modality_ref").is_null())
    p.modality_ref = j.at("modality_ref").get<std::string>();
  p.template_ids.question = j.at("template_ids").at("question").get<int>();
  p.template_ids.answer = j.at("template_ids").at("answer").get<int>();
  return p;
}

}  // namespace

const char* to_string(Task t) {
  switch (t) {
    case Task::text_repeat: return "text_repeat";
    case Task::macro_count: return "macro_count";
    case Task::micro_rate: return "micro_rate";
  }
  return "?";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Task> task_from_string(const std::string& s) {
  if (s == "text_repeat") return Task::text_repeat;
  if (s == "macro_count") return Task::macro_count;
  if (s == "micro_rate") return Task::micro_rate;
  return std::nullopt;
}

std::optional<Split> split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

int task_rank(Task t) { return static_cast<int>(t); }

const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = [] {
    auto words = parse_lines(data::kWordPool);
    if (words.empty()) throw std::runtime_error("bundled word pool is empty");
    for (const auto& w : words)
      if (is_number_word(w))
        throw std::runtime_error("word pool must not contain number words: " + w);
    return words;
  }();
  return pool;
}

const std::string& word_pool_version() {
  static const std::string version = data::kWordPoolVersion;
  return version;
}

const std::vector<std::string>& action_pool() {
  static const std::vector<std::string> pool = [] {
    auto actions = parse_lines(data::kActionPool);
    if (actions.empty()) throw std::runtime_error("bundled action pool is empty");
    return actions;
  }();
  return pool;
}

const std::vector<std::string>& question_templates(Task t) {
  return templates().question[static_cast<int>(t)];
}

const std::vector<std::string>& answer_templates(Task t) {
  return templates().answer[static_cast<int>(t)];
}

std::string CorpusManifest::to_json() const {
  nlohmann::json j;
  j["task"] = pllm::to_string(task);
  j["size"] = size;
  j["seed"] = seed;
  j["split"] = pllm::to_string(split);
  j["word_pool_version"] = word_pool_version;
  return j.dump(2);
}

std::vector<QAPair> gen_text_repeat_qa(u64 seed, i64 count, const TextRepeatOptions& opts) {
  if (count < 1) throw std::invalid_argument("gen_text_repeat_qa: count must be >= 1");
  if (opts.n_min < 2 || opts.n_max > 20 || opts.n_min > opts.n_max)
    throw std::invalid_argument("gen_text_repeat_qa: n range must lie within [2, 20]");

  const auto& pool = word_pool();
  std::vector<std::string> usable;
  const size_t limit = opts.pool_limit > 0
                           ? std::min(pool.size(), static_cast<size_t>(opts.pool_limit))
                           : pool.size();
  for (size_t i = 0; i < limit; ++i) {
    const bool held = is_holdout_word(pool[i]);
    if (!opts.holdout) {
      usable.push_back(pool[i]);
    } else if (opts.split == Split::test ? held : !held) {
      usable.push_back(pool[i]);
    }
  }
  if (usable.empty()) throw std::runtime_error("gen_text_repeat_qa: word pool selection is empty");

  const auto& qts = question_templates(Task::text_repeat);
  const auto& ats = answer_templates(Task::text_repeat);

  std::vector<QAPair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (i64 i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, split_tag(opts.split), static_cast<u64>(i)));
    QAPair p;
    p.task = Task::text_repeat;
    p.id = std::string(to_string(p.task)) + ":" + to_string(opts.split) + ":" + zero_pad(i, 8);
    p.keyword = usable[rng.next_below(usable.size())];
    const long long n = rng.next_int(opts.n_min, opts.n_max);
    p.key_count = n;
    p.template_ids.question = static_cast<int>(rng.next_below(qts.size()));
    p.template_ids.answer = static_cast<int>(rng.next_below(ats.size()));
    const NumberStyle style = rng.next_bool() ? NumberStyle::words : NumberStyle::digits;

    std::string repeated = p.keyword;
    for (long long k = 1; k < n; ++k) repeated += " " + p.keyword;

    std::string q = qts[static_cast<size_t>(p.template_ids.question)];
    q = substitute(q, "word", p.keyword);
    q = substitute(q, "string", repeated);
    p.question = q;

    std::string a = ats[static_cast<size_t>(p.template_ids.answer)];
    a = substitute(a, "word", p.keyword);
    a = substitute(a, "count", render_number(n, style));
    p.answer = a;

    pairs.push_back(std::move(p));
  }
  return pairs;
}

QAPair gen_modal_qa(const std::string& seq_file, const GroundTruth& truth, Task task, u64 seed) {
  if (task != Task::macro_count && task != Task::micro_rate)
    throw std::invalid_argument("gen_modal_qa: task must be macro_count or micro_rate");
  if (truth.repetition_count < 0 || truth.rate_per_minute < 0)
    throw std::invalid_argument("gen_modal_qa: invalid ground truth");
  if (!file_exists(seq_file))
    throw std::runtime_error("gen_modal_qa: missing sequence file: " + seq_file);

  Rng rng(Rng::mix(seed, 0x6d6f64616cULL));
  const auto& qts = question_templates(task);
  const auto& ats = answer_templates(task);

  QAPair p;
  p.task = task;
  p.modality_ref = seq_file;
  p.template_ids.question = static_cast<int>(rng.next_below(qts.size()));
  p.template_ids.answer = static_cast<int>(rng.next_below(ats.size()));
  const NumberStyle style = rng.next_bool() ? NumberStyle::words : NumberStyle::digits;

  std::string q = qts[static_cast<size_t>(p.template_ids.question)];
  std::string a = ats[static_cast<size_t>(p.template_ids.answer)];

  if (task == Task::macro_count) {
    p.keyword = action_pool()[rng.next_below(action_pool().size())];
    p.key_count = truth.repetition_count;
    q = substitute(q, "action", p.keyword);
    a = substitute(a, "action", p.keyword);
    a = substitute(a, "count", render_number(p.key_count, style));
  } else {
    p.keyword = "heart rate";
    p.key_count = std::llround(truth.rate_per_minute);
    a = substitute(a, "rate", render_number(p.key_count, style));
  }
  p.question = q;
  p.answer = a;
  p.id = std::string(to_string(task)) + ":" + zero_pad(static_cast<i64>(seed & 0xffffffff), 10);
  return p;
}

void write_jsonl(const std::vector<QAPair>& pairs, const std::string& path) {
  AtomicFileWriter w(path);
  for (const auto& p : pairs) {
    w.write_text(pair_to_json(p).dump());
    w.write_text("\n");
  }
  w.commit();
}

std::vector<QAPair> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<QAPair> pairs;
  std::string line;
  i64 line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace pllm
