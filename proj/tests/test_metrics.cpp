#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pllm/metrics.hpp"

using namespace pllm;

namespace reference {

// Brute-force TF-IDF/cosine CIDEr, written independently of the library
// implementation: explicit n-gram lists, idf tables, and union cosines.
std::vector<std::string> grams_of(const std::vector<std::string>& toks, int n) {
  std::vector<std::string> out;
  for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i) {
    std::string g;
    for (int k = 0; k < n; ++k) g += (k ? "\x1f" : "") + toks[static_cast<size_t>(i + k)];
    out.push_back(g);
  }
  return out;
}

double cider_brute_force(const std::vector<std::string>& cands,
                         const std::vector<std::vector<std::string>>& refs) {
  const int num = static_cast<int>(cands.size());
  double total = 0.0;
  for (int n = 1; n <= 4; ++n) {
    // document frequency over reference sets
    std::map<std::string, int> df;
    for (const auto& ref_set : refs) {
      std::set<std::string> seen;
      for (const auto& r : ref_set)
        for (const auto& g : grams_of(metric_tokens(r), n)) seen.insert(g);
      for (const auto& g : seen) df[g] += 1;
    }
    auto weight = [&](const std::string& g, double count) {
      const double d = df.count(g) ? df[g] : 0;
      return count * (std::log(static_cast<double>(num)) - std::log(std::max(1.0, d)));
    };
    auto vec_of = [&](const std::string& s) {
      std::map<std::string, double> counts;
      for (const auto& g : grams_of(metric_tokens(s), n)) counts[g] += 1.0;
      std::map<std::string, double> v;
      for (const auto& [g, c] : counts) v[g] = weight(g, c);
      return v;
    };

    double n_sum = 0.0;
    for (int i = 0; i < num; ++i) {
      const auto cv = vec_of(cands[static_cast<size_t>(i)]);
      double per_ref = 0.0;
      for (const auto& r : refs[static_cast<size_t>(i)]) {
        const auto rv = vec_of(r);
        std::set<std::string> keys;
        for (const auto& [g, w] : cv) keys.insert(g);
        for (const auto& [g, w] : rv) keys.insert(g);
        double dot = 0, nc = 0, nr = 0;
        for (const auto& g : keys) {
          const double a = cv.count(g) ? cv.at(g) : 0.0;
          const double b = rv.count(g) ? rv.at(g) : 0.0;
          dot += a * b;
          nc += a * a;
          nr += b * b;
        }
        per_ref += (nc > 0 && nr > 0) ? dot / (std::sqrt(nc) * std::sqrt(nr)) : 0.0;
      }
      n_sum += per_ref / static_cast<double>(refs[static_cast<size_t>(i)].size());
    }
    total += n_sum / static_cast<double>(num);
  }
  return 10.0 * total / 4.0;
}

}  // namespace reference

TEST_CASE("extraction: number words") {
  const auto e = extract_number("the man in the video performs two pull-ups");
  REQUIRE(e.value.has_value());
  CHECK(*e.value == 2);
  CHECK(e.kind == ExtractionKind::word);
  CHECK(e.span_begin == 30);
  CHECK(e.span_end == 33);
}

TEST_CASE("extraction: digits") {
  const auto e = extract_number("heart rate is 75 beats per minute");
  REQUIRE(e.value.has_value());
  CHECK(*e.value == 75);
  CHECK(e.kind == ExtractionKind::digit);
  CHECK(e.span_begin == 14);
  CHECK(e.span_end == 16);
}

TEST_CASE("extraction: absence") {
  const auto e = extract_number("the boy does multiple pull-ups");
  CHECK(!e.value.has_value());
  CHECK(e.kind == ExtractionKind::none);
}

TEST_CASE("extraction: first match wins and compounds parse") {
  auto e = extract_number("twenty-one jumps, then 3 more");
  REQUIRE(e.value.has_value());
  CHECK(*e.value == 21);
  CHECK(e.kind == ExtractionKind::word);

  CHECK(*extract_number("twenty one jumps").value == 21);
  CHECK(*extract_number("one hundred twenty-three beats").value == 123);
  CHECK(*extract_number("three hundred and five").value == 305);
  CHECK(*extract_number("nine hundred ninety-nine").value == 999);
  CHECK(*extract_number("about ten or so").value == 10);
  CHECK(*extract_number("zero repetitions").value == 0);
  // article-like "one" is still a number
  CHECK(*extract_number("one of the clips").value == 1);
  // uppercase input is lowercased first
  CHECK(*extract_number("Seventeen laps").value == 17);
}

TEST_CASE("numeric metrics: worked examples") {
  {
    const auto s = numeric_metrics({3, 5}, {2, 7});
    CHECK(*s.mae == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(*s.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(s.failure_rate == 0.0);
  }
  {
    const auto s = numeric_metrics({4, 9, 12}, {4, 9, 12});
    CHECK(*s.mae == 0.0);
    CHECK(*s.rmse == 0.0);
    CHECK(*s.std_dev == 0.0);
  }
  {
    const auto s = numeric_metrics({std::nullopt, 4}, {2, 4});
    CHECK(*s.mae == 0.0);
    CHECK(s.failure_rate == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    const auto s = numeric_metrics({std::nullopt, std::nullopt}, {2, 4});
    CHECK(!s.mae.has_value());
    CHECK(!s.rmse.has_value());
    CHECK(s.failure_rate == 1.0);
  }
}

TEST_CASE("numeric metrics: rmse >= mae and joint-permutation invariance") {
  std::mt19937 gen(123);
  std::uniform_int_distribution<int> val(0, 30);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 40);
    std::vector<std::optional<long long>> pred;
    std::vector<long long> truth;
    for (int i = 0; i < n; ++i) {
      pred.push_back(gen() % 5 == 0 ? std::nullopt : std::optional<long long>(val(gen)));
      truth.push_back(val(gen));
    }
    const auto s = numeric_metrics(pred, truth);
    if (s.mae) {
      CHECK(*s.rmse >= *s.mae);
      CHECK(*s.mae >= 0.0);
    }

    std::vector<size_t> perm(static_cast<size_t>(n));
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<std::optional<long long>> pred2;
    std::vector<long long> truth2;
    for (size_t i : perm) {
      pred2.push_back(pred[i]);
      truth2.push_back(truth[i]);
    }
    const auto s2 = numeric_metrics(pred2, truth2);
    CHECK(s.failure_rate == s2.failure_rate);
    if (s.mae) {
      CHECK(*s.mae == doctest::Approx(*s2.mae).epsilon(1e-12));
      CHECK(*s.rmse == doctest::Approx(*s2.rmse).epsilon(1e-12));
      CHECK(*s.std_dev == doctest::Approx(*s2.std_dev).epsilon(1e-12));
    }
  }
}

TEST_CASE("bleu1: identity, clipped precision, brevity penalty") {
  CHECK(bleu1("the man performs two pull-ups", {"the man performs two pull-ups"}) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // 4 of 5 unigrams match, lengths equal so no brevity penalty
  CHECK(bleu1("the man does two pull-ups", {"the man performs two pull-ups"}) ==
        doctest::Approx(0.8).epsilon(1e-12));

  // short candidate, full precision, penalty exp(1 - r/c)
  const double expected = std::exp(1.0 - 4.0 / 2.0);
  CHECK(bleu1("the man", {"the man does squats"}) == doctest::Approx(expected).epsilon(1e-12));

  CHECK(bleu1("", {"anything"}) == 0.0);
  CHECK(bleu1("completely different words", {"the man does squats"}) == 0.0);
}

TEST_CASE("bleu1 and meteor stay in range and ignore trailing whitespace") {
  const std::vector<std::string> cands = {"the person does five squats",
                                          "a heart rate of eighty beats",
                                          "nothing in common here"};
  const std::vector<std::string> refs = {"the person completes five squats",
                                         "the heart rate is eighty beats per minute",
                                         "totally disjoint reference text"};
  for (size_t i = 0; i < cands.size(); ++i) {
    const double b = bleu1(cands[i], {refs[i]});
    const double m = meteor_simplified(cands[i], {refs[i]});
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    CHECK(bleu1(cands[i] + "   \n", {refs[i] + "\t"}) == doctest::Approx(b).epsilon(1e-12));
    CHECK(meteor_simplified(cands[i] + "  ", {refs[i] + " \n"}) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("meteor: closed forms") {
  // identical, n tokens: F = 1, chunks = 1, penalty = 0.5 / n^3
  const std::string five = "alpha bravo charlie delta echo";
  CHECK(meteor_simplified(five, {five}) == doctest::Approx(1.0 - 0.5 / 125.0).epsilon(1e-12));

  CHECK(meteor_simplified("alpha bravo", {"charlie delta"}) == 0.0);

  // same bag of words fully reversed: chunks == matches == 4, penalty = 0.5
  CHECK(meteor_simplified("delta charlie bravo alpha", {"alpha bravo charlie delta"}) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cider: self-similarity bound and zero overlap") {
  const std::vector<std::string> cands = {"the person performs five squats today",
                                          "the clip shows nine jumping jacks",
                                          "a heart rate of eighty beats"};
  std::vector<std::vector<std::string>> refs;
  for (const auto& c : cands) refs.push_back({c});
  CHECK(cider(cands, refs) == doctest::Approx(10.0).epsilon(1e-12));

  const std::vector<std::string> disjoint = {"entirely unrelated caption text here",
                                             "nothing matches any boundary at all",
                                             "zero overlap with those phrases"};
  CHECK(cider(disjoint, refs) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS(cider({"one sentence"}, {{"one sentence"}}));
}

TEST_CASE("cider: matches the brute-force tf-idf reference on a toy corpus") {
  const std::vector<std::string> cands = {
      "the man performs two pull-ups in the video",
      "the heart rate is seventy beats per minute",
      "a person does twelve squats in the clip"};
  const std::vector<std::vector<std::string>> refs = {
      {"the man in the video performs two pull-ups"},
      {"the measured heart rate is seventy beats per minute"},
      {"the person completes twelve squats in this clip"}};
  const double expected = reference::cider_brute_force(cands, refs);
  CHECK(cider(cands, refs) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected > 0.0);
  CHECK(expected < 10.0);
}

TEST_CASE("evaluate_predictions: perfect model bound and report round-trip") {
  const std::vector<std::string> answers = {"the person performs five squats",
                                            "the heart rate is eighty beats per minute",
                                            "the word is repeated three times"};
  const std::vector<long long> truths = {5, 80, 3};
  const EvalReport r = evaluate_predictions(answers, answers, truths);
  CHECK(*r.mae == 0.0);
  CHECK(*r.rmse == 0.0);
  CHECK(r.bleu1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.extraction_failure_rate == 0.0);
  CHECK(*r.cider_raw == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(r.n == 3);

  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(*back.mae == *r.mae);
  CHECK(back.bleu1 == r.bleu1);
  CHECK(back.n == r.n);
  CHECK(*back.cider == *r.cider);
}

TEST_CASE("evaluate_predictions: unextractable answers are counted, not fatal") {
  const std::vector<std::string> generated = {"does multiple pull-ups", "no digits here"};
  const std::vector<std::string> refs = {"performs two pull-ups", "the rate is eighty"};
  const EvalReport r = evaluate_predictions(generated, refs, {2, 80});
  CHECK(r.extraction_failure_rate == 1.0);
  CHECK(!r.mae.has_value());
  CHECK(!r.rmse.has_value());
}
