#pragma once

#include <optional>
#include <string>
#include <vector>

namespace pllm {

enum class ExtractionKind { digit, word, none };

struct Extraction {
  std::optional<long long> value;     // present iff kind != none
  std::size_t span_begin = 0;         // character offsets into the input
  std::size_t span_end = 0;
  ExtractionKind kind = ExtractionKind::none;
};

// Finds the first number mentioned in the text, scanning left to right after
// lowercasing. Recognizes digit runs and English number words: zero..twenty,
// tens up to ninety, hyphenated or spaced compounds to 99, and "hundred"
// composition to 999. No disambiguation of article-like "one".
Extraction extract_number(const std::string& text);

struct NumericSummary {
  std::optional<double> mae;
  std::optional<double> rmse;
  std::optional<double> std_dev;  // of signed errors (pred - truth), population form
  double failure_rate = 0.0;      // fraction of absent predictions
  std::size_t n_scored = 0;
};

NumericSummary numeric_metrics(const std::vector<std::optional<long long>>& pred,
                               const std::vector<long long>& truth);

// Sentence-level Bleu1: clipped unigram precision times brevity penalty
// exp(min(0, 1 - r/c)), r the reference length closest to the candidate's.
double bleu1(const std::string& candidate, const std::vector<std::string>& references);

// Exact-match METEOR: greedy left-to-right unigram alignment, F-mean with
// alpha=0.9, fragmentation penalty gamma=0.5, theta=3; best reference wins.
double meteor_simplified(const std::string& candidate, const std::vector<std::string>& references);

// Corpus CIDEr over n-grams of order 1..4: TF-IDF cosine against each
// reference, averaged over references and orders, mean over items, scaled by
// 10. Document frequencies come from this corpus's references. Needs >= 2
// items, one or more references each.
double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references);

struct EvalReport {
  std::optional<double> mae;
  std::optional<double> rmse;
  std::optional<double> std_dev;
  double extraction_failure_rate = 0.0;
  double bleu1 = 0.0;
  double meteor = 0.0;
  std::optional<double> cider;      // raw score / 10, in [0, 1]
  std::optional<double> cider_raw;  // conventional x10 scale
  std::size_t n = 0;

  std::string to_json() const;
  std::string to_csv_row() const;
  static std::string csv_header();
  static EvalReport from_json(const std::string& json_text);
};

// Full protocol over a prediction set: numeric extraction + MAE/RMSE/STD,
// mean sentence Bleu1 and METEOR, corpus CIDEr (absent when n < 2).
EvalReport evaluate_predictions(const std::vector<std::string>& generated,
                                const std::vector<std::string>& references,
                                const std::vector<long long>& truths);

// Lowercased word tokens, hyphens kept inside words ("pull-ups" is one token).
std::vector<std::string> metric_tokens(const std::string& text);

}  // namespace pllm
