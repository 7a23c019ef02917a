#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pllm/common.hpp"
#include "pllm/signal.hpp"

namespace pllm {

enum class Task { text_repeat, macro_count, micro_rate };
enum class Split { train, val, test };

const char* to_string(Task t);
const char* to_string(Split s);
std::optional<Task> task_from_string(const std::string& s);
std::optional<Split> split_from_string(const std::string& s);

// Difficulty order used by the curriculum: text < macro < micro.
int task_rank(Task t);

struct TemplateIds {
  int question = 0;
  int answer = 0;
};

struct QAPair {
  std::string id;
  Task task = Task::text_repeat;
  std::string question;
  std::string answer;
  long long key_count = 0;  // numeric ground truth embedded in the answer
  std::string keyword;      // repeated word or action label
  std::optional<std::string> modality_ref;  // sequence file path
  TemplateIds template_ids;

  bool operator==(const QAPair&) const = default;
};

struct CorpusManifest {
  Task task = Task::text_repeat;
  i64 size = 0;
  u64 seed = 0;
  Split split = Split::train;
  std::string word_pool_version;

  std::string to_json() const;
};

// Bundled word pool and per-task question/answer paraphrase templates.
// Ten of each; the pool excludes anything the number extractor would parse.
const std::vector<std::string>& word_pool();
const std::string& word_pool_version();
const std::vector<std::string>& action_pool();
const std::vector<std::string>& question_templates(Task t);
const std::vector<std::string>& answer_templates(Task t);

struct TextRepeatOptions {
  int n_min = 2;
  int n_max = 20;
  Split split = Split::train;
  // With holdout on, train/val draw words from the main partition and test
  // draws only from the ~10% held-out partition, so test words never occur
  // in training pairs.
  bool holdout = false;
  // 0 = whole pool; otherwise only the first pool_limit words are used
  // (smaller vocabularies for fast experiments).
  int pool_limit = 0;
};

// Deterministic in (seed, split, index): pair i of any prefix length matches
// pair i of a longer run.
std::vector<QAPair> gen_text_repeat_qa(u64 seed, i64 count, const TextRepeatOptions& opts = {});

// One multimodal QA pair for a generated sequence file. seq_file must exist;
// its path is recorded as modality_ref verbatim.
QAPair gen_modal_qa(const std::string& seq_file, const GroundTruth& truth, Task task, u64 seed);

// JSONL, one object per line, fields: id, task, question, answer, key_count,
// keyword, modality_ref, template_ids.
void write_jsonl(const std::vector<QAPair>& pairs, const std::string& path);
std::vector<QAPair> read_jsonl(const std::string& path);

}  // namespace pllm
