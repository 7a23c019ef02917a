#include "pllm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "pllm/io_util.hpp"

namespace pllm {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit_char(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

struct RawToken {
  std::string text;     // lowercased, [a-z0-9]+
  std::size_t begin = 0;
  std::size_t end = 0;
  bool hyphen_before = false;  // separated from previous token by a single '-'
};

std::vector<RawToken> scan_tokens(const std::string& text) {
  std::vector<RawToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_alnum(text[i])) { ++i; continue; }
    RawToken tok;
    tok.begin = i;
    while (i < text.size() && is_alnum(text[i])) {
      tok.text += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
      ++i;
    }
    tok.end = i;
    if (!out.empty()) {
      const RawToken& prev = out.back();
      tok.hyphen_before = (tok.begin == prev.end + 1 && text[prev.end] == '-');
    }
    out.push_back(std::move(tok));
  }
  return out;
}

const std::unordered_map<std::string, int>& small_number_words() {
  static const std::unordered_map<std::string, int> table = {
      {"zero", 0},     {"one", 1},       {"two", 2},       {"three", 3},
      {"four", 4},     {"five", 5},      {"six", 6},       {"seven", 7},
      {"eight", 8},    {"nine", 9},      {"ten", 10},      {"eleven", 11},
      {"twelve", 12},  {"thirteen", 13}, {"fourteen", 14}, {"fifteen", 15},
      {"sixteen", 16}, {"seventeen", 17},{"eighteen", 18}, {"nineteen", 19},
      {"twenty", 20},  {"thirty", 30},   {"forty", 40},    {"fifty", 50},
      {"sixty", 60},   {"seventy", 70},  {"eighty", 80},   {"ninety", 90}};
  return table;
}

struct WordParse {
  long long value = 0;
  std::size_t last_index = 0;  // index of the last consumed token
};

// Parses a value below 100 starting at token i: a unit/teen, or a tens word
// optionally joined to a unit by a hyphen or whitespace.
std::optional<WordParse> parse_below_hundred(const std::vector<RawToken>& toks, std::size_t i) {
  const auto& table = small_number_words();
  auto it = table.find(toks[i].text);
  if (it == table.end()) return std::nullopt;
  WordParse p{it->second, i};
  if (it->second >= 20 && it->second % 10 == 0 && i + 1 < toks.size()) {
    auto unit = table.find(toks[i + 1].text);
    if (unit != table.end() && unit->second >= 1 && unit->second <= 9) {
      p.value += unit->second;
      p.last_index = i + 1;
    }
  }
  return p;
}

// Greedy-longest English number starting at token i, up to 999.
std::optional<WordParse> parse_number_words(const std::vector<RawToken>& toks, std::size_t i) {
  auto first = parse_below_hundred(toks, i);
  if (!first) return std::nullopt;
  WordParse p = *first;
  // "<unit> hundred [and] [<below-hundred>]"
  if (p.value >= 1 && p.value <= 9 && p.last_index == i && i + 1 < toks.size() &&
      toks[i + 1].text == "hundred") {
    p.value *= 100;
    p.last_index = i + 1;
    std::size_t next = p.last_index + 1;
    if (next < toks.size() && toks[next].text == "and") ++next;
    if (next < toks.size()) {
      if (auto rest = parse_below_hundred(toks, next); rest && rest->value < 100 && rest->value > 0) {
        p.value += rest->value;
        p.last_index = rest->last_index;
      }
    }
  }
  return p;
}

std::vector<std::string> ngrams(const std::vector<std::string>& toks, std::size_t n) {
  std::vector<std::string> out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (std::size_t k = 1; k < n; ++k) g += " " + toks[i + k];
    out.push_back(std::move(g));
  }
  return out;
}

std::map<std::string, double> count_map(const std::vector<std::string>& grams) {
  std::map<std::string, double> m;
  for (const auto& g : grams) m[g] += 1.0;
  return m;
}

}  // namespace

std::vector<std::string> metric_tokens(const std::string& text) {
  std::vector<std::string> out;
  const auto raw = scan_tokens(text);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!out.empty() && raw[i].hyphen_before) {
      out.back() += "-" + raw[i].text;
    } else {
      out.push_back(raw[i].text);
    }
  }
  return out;
}

Extraction extract_number(const std::string& text) {
  const auto toks = scan_tokens(text);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const RawToken& t = toks[i];
    if (is_digit_char(t.text[0])) {
      // Maximal alnum runs that start with a digit but contain letters ("4k")
      // still yield their leading digit run.
      std::size_t len = 0;
      while (len < t.text.size() && is_digit_char(t.text[len])) ++len;
      const std::string digits = t.text.substr(0, len);
      long long v = std::strtoll(digits.c_str(), nullptr, 10);
      Extraction e;
      e.value = v;
      e.span_begin = t.begin;
      e.span_end = t.begin + len;
      e.kind = ExtractionKind::digit;
      return e;
    }
    if (auto parsed = parse_number_words(toks, i)) {
      Extraction e;
      e.value = parsed->value;
      e.span_begin = t.begin;
      e.span_end = toks[parsed->last_index].end;
      e.kind = ExtractionKind::word;
      return e;
    }
  }
  return {};
}

NumericSummary numeric_metrics(const std::vector<std::optional<long long>>& pred,
                               const std::vector<long long>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("numeric_metrics: pred and truth sizes differ");
  NumericSummary s;
  if (pred.empty()) { s.failure_rate = 0.0; return s; }

  double abs_sum = 0.0, sq_sum = 0.0, signed_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i]) continue;
    const double e = static_cast<double>(*pred[i] - truth[i]);
    abs_sum += std::abs(e);
    sq_sum += e * e;
    signed_sum += e;
    ++present;
  }
  s.failure_rate = static_cast<double>(pred.size() - present) / static_cast<double>(pred.size());
  s.n_scored = present;
  if (present == 0) return s;

  const double n = static_cast<double>(present);
  s.mae = abs_sum / n;
  s.rmse = std::sqrt(sq_sum / n);
  const double mean_err = signed_sum / n;
  s.std_dev = std::sqrt(std::max(0.0, sq_sum / n - mean_err * mean_err));
  return s;
}

double bleu1(const std::string& candidate, const std::vector<std::string>& references) {
  const auto cand = metric_tokens(candidate);
  if (cand.empty() || references.empty()) return 0.0;

  std::map<std::string, double> max_ref_counts;
  std::size_t best_ref_len = 0;
  double best_len_dist = -1.0;
  for (const auto& ref : references) {
    const auto rt = metric_tokens(ref);
    for (auto& [g, c] : count_map(rt)) max_ref_counts[g] = std::max(max_ref_counts[g], c);
    const double dist = std::abs(static_cast<double>(rt.size()) - static_cast<double>(cand.size()));
    if (best_len_dist < 0 || dist < best_len_dist ||
        (dist == best_len_dist && rt.size() < best_ref_len)) {
      best_len_dist = dist;
      best_ref_len = rt.size();
    }
  }

  double clipped = 0.0;
  for (auto& [g, c] : count_map(cand))
    clipped += std::min(c, max_ref_counts.count(g) ? max_ref_counts[g] : 0.0);

  const double precision = clipped / static_cast<double>(cand.size());
  const double ratio = 1.0 - static_cast<double>(best_ref_len) / static_cast<double>(cand.size());
  const double bp = std::exp(std::min(0.0, ratio));
  return precision * bp;
}

double meteor_simplified(const std::string& candidate, const std::vector<std::string>& references) {
  const auto cand = metric_tokens(candidate);
  if (cand.empty() || references.empty()) return 0.0;

  constexpr double kAlpha = 0.9;
  constexpr double kGamma = 0.5;
  constexpr double kTheta = 3.0;

  double best = 0.0;
  for (const auto& ref : references) {
    const auto rt = metric_tokens(ref);
    if (rt.empty()) continue;

    // Greedy left-to-right alignment: each candidate token takes the first
    // unmatched identical reference token.
    std::vector<bool> used(rt.size(), false);
    std::vector<std::ptrdiff_t> align(cand.size(), -1);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      for (std::size_t j = 0; j < rt.size(); ++j) {
        if (!used[j] && rt[j] == cand[i]) {
          used[j] = true;
          align[i] = static_cast<std::ptrdiff_t>(j);
          ++matches;
          break;
        }
      }
    }
    if (matches == 0) continue;

    // Chunks: maximal runs matched contiguously and in order on both sides.
    std::size_t chunks = 0;
    std::ptrdiff_t prev_ref = -2;
    bool prev_matched = false;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (align[i] < 0) { prev_matched = false; continue; }
      if (!prev_matched || align[i] != prev_ref + 1) ++chunks;
      prev_ref = align[i];
      prev_matched = true;
    }

    const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double r = static_cast<double>(matches) / static_cast<double>(rt.size());
    const double f = (p * r) / (kAlpha * p + (1.0 - kAlpha) * r);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = kGamma * std::pow(frag, kTheta);
    best = std::max(best, f * (1.0 - penalty));
  }
  return best;
}

double cider(const std::vector<std::string>& candidates,
             const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("cider: candidates and references sizes differ");
  if (candidates.size() < 2)
    throw std::invalid_argument("cider: needs a corpus of >= 2 items for document frequencies");
  for (const auto& refs : references)
    if (refs.empty()) throw std::invalid_argument("cider: every item needs at least one reference");

  constexpr std::size_t kMaxOrder = 4;
  const std::size_t num_items = candidates.size();
  const double log_n = std::log(static_cast<double>(num_items));

  // Document frequency per order: in how many items' reference sets the n-gram occurs.
  std::vector<std::map<std::string, double>> df(kMaxOrder);
  for (const auto& refs : references) {
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      std::map<std::string, bool> seen;
      for (const auto& ref : refs)
        for (auto& g : ngrams(metric_tokens(ref), n + 1)) seen[g] = true;
      for (auto& [g, _] : seen) df[n][g] += 1.0;
    }
  }

  auto tfidf = [&](const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::string, double> vec;
    for (auto& [g, c] : count_map(ngrams(toks, n + 1))) {
      const double d = df[n].count(g) ? df[n].at(g) : 0.0;
      vec[g] = c * (log_n - std::log(std::max(1.0, d)));
    }
    return vec;
  };
  auto cosine = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (auto& [g, v] : a) {
      na += v * v;
      auto it = b.find(g);
      if (it != b.end()) dot += v * it->second;
    }
    for (auto& [g, v] : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  double corpus_sum = 0.0;
  for (std::size_t i = 0; i < num_items; ++i) {
    const auto cand_toks = metric_tokens(candidates[i]);
    double item_score = 0.0;
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      const auto cand_vec = tfidf(cand_toks, n);
      double ref_sum = 0.0;
      for (const auto& ref : references[i])
        ref_sum += cosine(cand_vec, tfidf(metric_tokens(ref), n));
      item_score += ref_sum / static_cast<double>(references[i].size());
    }
    corpus_sum += item_score / static_cast<double>(kMaxOrder);
  }
  return 10.0 * corpus_sum / static_cast<double>(num_items);
}

EvalReport evaluate_predictions(const std::vector<std::string>& generated,
                                const std::vector<std::string>& references,
                                const std::vector<long long>& truths) {
  if (generated.size() != references.size() || generated.size() != truths.size())
    throw std::invalid_argument("evaluate_predictions: input sizes differ");

  EvalReport report;
  report.n = generated.size();
  if (generated.empty()) { report.extraction_failure_rate = 0.0; return report; }

  std::vector<std::optional<long long>> preds;
  preds.reserve(generated.size());
  for (const auto& g : generated) {
    const Extraction e = extract_number(g);
    preds.push_back(e.value);
  }
  const NumericSummary num = numeric_metrics(preds, truths);
  report.mae = num.mae;
  report.rmse = num.rmse;
  report.std_dev = num.std_dev;
  report.extraction_failure_rate = num.failure_rate;

  double bleu_sum = 0.0, meteor_sum = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    bleu_sum += bleu1(generated[i], {references[i]});
    meteor_sum += meteor_simplified(generated[i], {references[i]});
  }
  report.bleu1 = bleu_sum / static_cast<double>(generated.size());
  report.meteor = meteor_sum / static_cast<double>(generated.size());

  if (generated.size() >= 2) {
    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back({r});
    const double raw = cider(generated, refs);
    report.cider_raw = raw;
    report.cider = raw / 10.0;
  }
  return report;
}

namespace {
nlohmann::json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}
std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}
std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mae"] = opt_json(mae);
  j["rmse"] = opt_json(rmse);
  j["std"] = opt_json(std_dev);
  j["extraction_failure_rate"] = extraction_failure_rate;
  j["bleu1"] = bleu1;
  j["meteor"] = meteor;
  j["cider"] = opt_json(cider);
  j["cider_raw"] = opt_json(cider_raw);
  j["n"] = n;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  EvalReport r;
  r.mae = opt_from(j, "mae");
  r.rmse = opt_from(j, "rmse");
  r.std_dev = opt_from(j, "std");
  r.extraction_failure_rate = j.at("extraction_failure_rate").get<double>();
  r.bleu1 = j.at("bleu1").get<double>();
  r.meteor = j.at("meteor").get<double>();
  r.cider = opt_from(j, "cider");
  r.cider_raw = opt_from(j, "cider_raw");
  r.n = j.at("n").get<std::size_t>();
  return r;
}

std::string EvalReport::csv_header() {
  return "mae,rmse,std,extraction_failure_rate,bleu1,meteor,cider,cider_raw,n";
}

std::string EvalReport::to_csv_row() const {
  return opt_csv(mae) + "," + opt_csv(rmse) + "," + opt_csv(std_dev) + "," +
         format_double(extraction_failure_rate) + "," + format_double(bleu1) + "," +
         format_double(meteor) + "," + opt_csv(cider) + "," + opt_csv(cider_raw) + "," +
         std::to_string(n);
}

}  // namespace pllm
