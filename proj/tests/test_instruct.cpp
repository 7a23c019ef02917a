#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "pllm/instruct.hpp"
#include "pllm/io_util.hpp"
#include "pllm/metrics.hpp"
#include "pllm/numbers.hpp"
#include "pllm/signal.hpp"

using namespace pllm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string make_sequence_file(i64 length, double dt, double period, const std::string& name) {
  SequenceConfig c;
  c.length = length;
  c.channels = 2;
  c.dt_s = dt;
  c.period_s = period;
  c.seed = 99;
  const std::string path = temp_path(name);
  save_sequence(generate_sequence(c), path);
  return path;
}

}  // namespace

TEST_CASE("bundled pools and templates") {
  CHECK(word_pool().size() == 1000);
  CHECK(word_pool_version() == std::string("wordpool-v1"));
  for (const auto& w : word_pool()) CHECK(!is_number_word(w));
  CHECK(action_pool().size() >= 10);
  for (Task t : {Task::text_repeat, Task::macro_count, Task::micro_rate}) {
    CHECK(question_templates(t).size() == 10);
    CHECK(answer_templates(t).size() == 10);
  }
  // the core question phrasing is template 0
  CHECK(question_templates(Task::text_repeat)[0].find("How many times is the word") !=
        std::string::npos);
  CHECK(answer_templates(Task::macro_count)[0].find("performs {count} {action}") !=
        std::string::npos);
}

TEST_CASE("text_repeat pairs embed the n-fold repetition and a recoverable count") {
  const auto pairs = gen_text_repeat_qa(7, 500);
  REQUIRE(pairs.size() == 500);
  for (const auto& p : pairs) {
    CHECK(p.task == Task::text_repeat);
    CHECK(p.key_count >= 2);
    CHECK(p.key_count <= 20);
    CHECK(p.template_ids.question >= 0);
    CHECK(p.template_ids.question < 10);
    CHECK(p.template_ids.answer >= 0);
    CHECK(p.template_ids.answer < 10);
    CHECK(!p.modality_ref.has_value());

    std::string repeated = p.keyword;
    for (long long k = 1; k < p.key_count; ++k) repeated += " " + p.keyword;
    CHECK(p.question.find(repeated) != std::string::npos);
    // no accidental extra repetition
    CHECK(p.question.find(repeated + " " + p.keyword) == std::string::npos);

    const auto e = extract_number(p.answer);
    REQUIRE(e.value.has_value());
    CHECK(*e.value == p.key_count);
    CHECK(p.answer.find(p.keyword) != std::string::npos);
  }
}

TEST_CASE("n is drawn only from {2..20} and roughly uniformly") {
  const auto pairs = gen_text_repeat_qa(11, 10000);
  std::map<long long, int> counts;
  for (const auto& p : pairs) counts[p.key_count]++;
  for (const auto& [n, c] : counts) {
    CHECK(n >= 2);
    CHECK(n <= 20);
  }
  CHECK(counts.size() == 19);
  const double uniform = 10000.0 / 19.0;
  for (const auto& [n, c] : counts) {
    CHECK(c > uniform * 0.7);
    CHECK(c < uniform * 1.3);
  }
}

TEST_CASE("same seed gives byte-identical jsonl") {
  const auto a = gen_text_repeat_qa(13, 200);
  const auto b = gen_text_repeat_qa(13, 200);
  const std::string pa = temp_path("pllm_pairs_a.jsonl");
  const std::string pb = temp_path("pllm_pairs_b.jsonl");
  write_jsonl(a, pa);
  write_jsonl(b, pb);
  CHECK(read_text_file(pa) == read_text_file(pb));
  // prefix stability: pair i does not depend on corpus size
  const auto longer = gen_text_repeat_qa(13, 300);
  for (size_t i = 0; i < a.size(); ++i) CHECK(longer[i] == a[i]);
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("jsonl round-trip and error paths") {
  const auto pairs = gen_text_repeat_qa(3, 100);
  const std::string path = temp_path("pllm_roundtrip.jsonl");
  write_jsonl(pairs, path);
  const auto back = read_jsonl(path);
  REQUIRE(back.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == pairs[i]);

  // truncated last line
  std::string text = read_text_file(path);
  text.resize(text.size() - 25);
  write_text_file(path, text);
  try {
    read_jsonl(path);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":100:") != std::string::npos);
  }

  // empty corpus round-trips to an empty list
  write_jsonl({}, path);
  CHECK(read_text_file(path).empty());
  CHECK(read_jsonl(path).empty());
  std::remove(path.c_str());
}

TEST_CASE("holdout mode keeps test words out of the training pool") {
  TextRepeatOptions train_opts;
  train_opts.holdout = true;
  train_opts.split = Split::train;
  TextRepeatOptions test_opts;
  test_opts.holdout = true;
  test_opts.split = Split::test;

  std::set<std::string> train_words, test_words;
  for (const auto& p : gen_text_repeat_qa(5, 3000, train_opts)) train_words.insert(p.keyword);
  for (const auto& p : gen_text_repeat_qa(5, 3000, test_opts)) test_words.insert(p.keyword);
  CHECK(!train_words.empty());
  CHECK(!test_words.empty());
  for (const auto& w : test_words) CHECK(train_words.count(w) == 0);
}

TEST_CASE("splits draw from disjoint streams") {
  TextRepeatOptions val_opts;
  val_opts.split = Split::val;
  const auto train = gen_text_repeat_qa(21, 50);
  const auto val = gen_text_repeat_qa(21, 50, val_opts);
  bool any_diff = false;
  for (size_t i = 0; i < train.size(); ++i) any_diff |= (train[i].question != val[i].question);
  CHECK(any_diff);
  CHECK(train[0].id.find("train") != std::string::npos);
  CHECK(val[0].id.find("val") != std::string::npos);
}

TEST_CASE("macro_count pairs: caption answer with action and count") {
  const std::string seq = make_sequence_file(20, 0.5, 5.0, "pllm_macro.pseq");  // 2 periods
  const GroundTruth truth = derive_ground_truth(load_sequence(seq));
  REQUIRE(truth.repetition_count == 2);

  bool saw_word_style = false, saw_digit_style = false;
  for (u64 seed = 0; seed < 40; ++seed) {
    const QAPair p = gen_modal_qa(seq, truth, Task::macro_count, seed);
    CHECK(p.task == Task::macro_count);
    CHECK(p.key_count == 2);
    CHECK(p.modality_ref == seq);
    CHECK(p.question.find(p.keyword) != std::string::npos);
    CHECK(p.answer.find(p.keyword) != std::string::npos);
    const auto e = extract_number(p.answer);
    REQUIRE(e.value.has_value());
    CHECK(*e.value == 2);
    if (p.answer.find("two") != std::string::npos) saw_word_style = true;
    if (p.answer.find('2') != std::string::npos) saw_digit_style = true;
  }
  CHECK(saw_word_style);
  CHECK(saw_digit_style);
  std::remove(seq.c_str());
}

TEST_CASE("micro_rate pairs: rate with per-minute phrase") {
  const std::string seq = make_sequence_file(20, 0.2, 0.8, "pllm_micro.pseq");  // 75 bpm
  const GroundTruth truth = derive_ground_truth(load_sequence(seq));
  REQUIRE(truth.rate_per_minute == doctest::Approx(75.0));

  const QAPair p = gen_modal_qa(seq, truth, Task::micro_rate, 3);
  CHECK(p.key_count == 75);
  CHECK(p.answer.find("per minute") != std::string::npos);
  const auto e = extract_number(p.answer);
  REQUIRE(e.value.has_value());
  CHECK(*e.value == 75);
  std::remove(seq.c_str());
}

TEST_CASE("zero repetitions are stated, not skipped") {
  const std::string seq = make_sequence_file(10, 0.1, 100.0, "pllm_zero.pseq");
  const GroundTruth truth = derive_ground_truth(load_sequence(seq));
  REQUIRE(truth.repetition_count == 0);
  const QAPair p = gen_modal_qa(seq, truth, Task::macro_count, 7);
  CHECK(p.key_count == 0);
  const auto e = extract_number(p.answer);
  REQUIRE(e.value.has_value());
  CHECK(*e.value == 0);
  std::remove(seq.c_str());
}

TEST_CASE("gen_modal_qa rejects a missing sequence file") {
  GroundTruth truth{3, 30.0};
  CHECK_THROWS(gen_modal_qa(temp_path("pllm_does_not_exist.pseq"), truth, Task::macro_count, 1));
}

TEST_CASE("extraction closure across tasks") {
  for (const auto& p : gen_text_repeat_qa(31, 4000)) {
    const auto e = extract_number(p.answer);
    REQUIRE(e.value.has_value());
    CHECK(*e.value == p.key_count);
  }
  const std::string macro_seq = make_sequence_file(20, 0.5, 10.0 / 7.0, "pllm_cl_macro.pseq");
  const GroundTruth macro_truth = derive_ground_truth(load_sequence(macro_seq));
  for (u64 s = 0; s < 200; ++s) {
    const QAPair p = gen_modal_qa(macro_seq, macro_truth, Task::macro_count, s);
    REQUIRE(extract_number(p.answer).value.has_value());
    CHECK(*extract_number(p.answer).value == p.key_count);
  }
  const std::string micro_seq = make_sequence_file(20, 0.2, 60.0 / 137.0, "pllm_cl_micro.pseq");
  const GroundTruth micro_truth = derive_ground_truth(load_sequence(micro_seq));
  for (u64 s = 0; s < 200; ++s) {
    const QAPair p = gen_modal_qa(micro_seq, micro_truth, Task::micro_rate, s);
    REQUIRE(extract_number(p.answer).value.has_value());
    CHECK(*extract_number(p.answer).value == p.key_count);
  }
  std::remove(macro_seq.c_str());
  std::remove(micro_seq.c_str());
}

TEST_CASE("number rendering covers digits and words up to 999") {
  CHECK(render_number(7, NumberStyle::digits) == "7");
  CHECK(render_number(7, NumberStyle::words) == "seven");
  CHECK(render_number(21, NumberStyle::words) == "twenty-one");
  CHECK(render_number(100, NumberStyle::words) == "one hundred");
  CHECK(render_number(345, NumberStyle::words) == "three hundred forty-five");
  CHECK(render_number(0, NumberStyle::words) == "zero");
  // out of the word table: falls back to digits
  CHECK(render_number(1000, NumberStyle::words) == "1000");
}
