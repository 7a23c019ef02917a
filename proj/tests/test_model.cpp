#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pllm/checkpoint.hpp"
#include "pllm/curriculum.hpp"
#include "pllm/instruct.hpp"
#include "pllm/model.hpp"
#include "pllm/optim.hpp"
#include "pllm/rng.hpp"
#include "pllm/vocab.hpp"
#include "reference_forward.hpp"

using namespace pllm;

namespace {

ModelConfig tiny_config(int vocab, int layers = 1) {
  ModelConfig c;
  c.vocab = vocab;
  c.dim = 8;
  c.layers = layers;
  c.heads = 2;
  c.ffn = 16;
  c.feat_dim = 3;
  c.context = 32;
  return c;
}

Batch random_batch(const ModelConfig& c, u64 seed, bool with_features) {
  Rng rng(seed);
  Batch b;
  const int S = 9;
  for (int ex = 0; ex < 2; ++ex) {
    std::vector<int> ids, targets;
    std::vector<std::uint8_t> mask;
    const bool modal = with_features && ex == 0;
    for (int t = 0; t < S; ++t) {
      int id;
      if (modal && t >= 1 && t <= 3) {
        id = Vocab::kModal;
      } else {
        id = Vocab::kNumReserved +
             static_cast<int>(rng.next_below(static_cast<u64>(c.vocab - Vocab::kNumReserved)));
      }
      ids.push_back(id);
      targets.push_back(Vocab::kNumReserved +
                        static_cast<int>(rng.next_below(static_cast<u64>(c.vocab - Vocab::kNumReserved))));
      mask.push_back(t >= S / 2 ? 1 : 0);
    }
    b.ids.push_back(ids);
    b.targets.push_back(targets);
    b.mask.push_back(mask);
    if (modal) {
      Mat f(3, c.feat_dim);
      for (i64 r = 0; r < f.rows(); ++r)
        for (i64 cc = 0; cc < f.cols(); ++cc) f(r, cc) = rng.next_gaussian(0.0, 1.0);
      b.features.push_back(f);
    } else {
      b.features.push_back(std::nullopt);
    }
  }
  return b;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenizer: repeats, round-trip, unknowns") {
  Vocab v = Vocab::build({"How many times is the word period repeated ?", "three times ."});
  const auto ids = tokenize("period period period", v);
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == ids[1]);
  CHECK(ids[1] == ids[2]);
  CHECK(ids[0] != Vocab::kUnk);

  const std::string q = "How many times is the word period repeated ?";
  CHECK(detokenize(tokenize(q, v), v) == q);

  const auto unk = tokenize("zeppelin", v);
  REQUIRE(unk.size() == 1);
  CHECK(unk[0] == Vocab::kUnk);
  CHECK(detokenize(unk, v) == "<unk>");

  // punctuation splits, hyphenated words stay whole
  const auto toks = split_tokens("performs 12 pull-ups!");
  REQUIRE(toks.size() == 4);
  CHECK(toks[2] == "pull-ups");
  CHECK(toks[3] == "!");
}

TEST_CASE("zero output projection gives uniform logits and ln V loss") {
  auto c = tiny_config(20);
  auto params = init_params(c, 1);
  params.w_out.setZero();
  params.b_out.setZero();

  auto batch = random_batch(c, 2, false);
  const auto fwd = forward(params, batch);
  for (const auto& ex : fwd.examples) CHECK(ex.logits.cwiseAbs().maxCoeff() == 0.0);

  const auto bw = loss_and_backward(params, batch, fwd);
  CHECK(bw.loss == doctest::Approx(std::log(20.0)).epsilon(1e-12));
}

TEST_CASE("text-only path is independent of the modality projector") {
  auto c = tiny_config(24);
  auto params = init_params(c, 3);
  auto batch = random_batch(c, 4, false);
  const auto before = forward(params, batch);
  params.w_proj.array() += 123.0;
  const auto after = forward(params, batch);
  for (size_t ex = 0; ex < before.examples.size(); ++ex)
    CHECK((before.examples[ex].logits - after.examples[ex].logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches the scalar reference implementation") {
  for (int layers : {1, 2}) {
    auto c = tiny_config(20, layers);
    auto params = init_params(c, 5 + static_cast<u64>(layers));
    auto batch = random_batch(c, 6, true);
    const auto fwd = forward(params, batch);
    for (size_t ex = 0; ex < batch.ids.size(); ++ex) {
      const auto ref =
          reference::forward_logits(params, batch.ids[ex], batch.features[ex]);
      for (int t = 0; t < static_cast<int>(batch.ids[ex].size()); ++t)
        for (int j = 0; j < c.vocab; ++j)
          CHECK(std::abs(fwd.examples[ex].logits(t, j) - ref[static_cast<size_t>(t)][static_cast<size_t>(j)]) <= 1e-6);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  auto c = tiny_config(20);
  auto params = init_params(c, 7);
  auto batch = random_batch(c, 8, true);

  const auto fwd = forward(params, batch);
  auto bw = loss_and_backward(params, batch, fwd);

  const double h = 1e-5;
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(bw.grads);
  for (size_t r = 0; r < p_refs.size(); ++r) {
    INFO("tensor ", p_refs[r].name);
    for (i64 k = 0; k < p_refs[r].size(); ++k) {
      const double saved = p_refs[r].data[k];
      p_refs[r].data[k] = saved + h;
      const double up = loss_only(params, batch);
      p_refs[r].data[k] = saved - h;
      const double down = loss_only(params, batch);
      p_refs[r].data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g_refs[r].data[k];
      const double tol = std::max(1e-6, 1e-4 * std::max(std::abs(numeric), std::abs(analytic)));
      CHECK(std::abs(numeric - analytic) <= tol);
    }
  }
}

TEST_CASE("causality: perturbing a later token leaves earlier logits untouched") {
  auto c = tiny_config(24, 2);
  auto params = init_params(c, 9);
  auto batch = random_batch(c, 10, false);
  const auto base = forward(params, batch);

  const int flip_t = 6;
  auto perturbed = batch;
  perturbed.ids[0][flip_t] =
      perturbed.ids[0][flip_t] == Vocab::kNumReserved ? Vocab::kNumReserved + 1 : Vocab::kNumReserved;
  const auto changed = forward(params, perturbed);
  for (int t = 0; t < flip_t; ++t)
    for (int j = 0; j < c.vocab; ++j)
      CHECK(base.examples[0].logits(t, j) == changed.examples[0].logits(t, j));
  // and the perturbed position itself does change
  CHECK((base.examples[0].logits.row(flip_t) - changed.examples[0].logits.row(flip_t))
            .cwiseAbs()
            .maxCoeff() > 0.0);
}

TEST_CASE("projector linearity: scaling features scales spliced embeddings exactly") {
  auto c = tiny_config(24);
  auto params = init_params(c, 11);
  auto batch = random_batch(c, 12, true);
  const auto base = forward(params, batch);

  auto scaled = batch;
  *scaled.features[0] *= 3.0;
  const auto after = forward(params, scaled);
  for (int t = 1; t <= 3; ++t)  // modal slots
    for (int j = 0; j < c.dim; ++j)
      CHECK(after.examples[0].embed(t, j) == doctest::Approx(3.0 * base.examples[0].embed(t, j)).epsilon(1e-12));
}

TEST_CASE("loss masking: masked-out targets contribute nothing") {
  auto c = tiny_config(20);
  auto params = init_params(c, 13);
  auto batch = random_batch(c, 14, false);

  const auto fwd = forward(params, batch);
  const auto bw = loss_and_backward(params, batch, fwd);

  auto tweaked = batch;
  for (size_t ex = 0; ex < tweaked.ids.size(); ++ex)
    for (size_t t = 0; t < tweaked.targets[ex].size(); ++t)
      if (!tweaked.mask[ex][t]) tweaked.targets[ex][t] = Vocab::kPad;

  const auto fwd2 = forward(params, tweaked);
  const auto bw2 = loss_and_backward(params, tweaked, fwd2);
  CHECK(bw.loss == bw2.loss);
  auto a = tensor_refs(const_cast<ModelParams&>(bw.grads));
  auto b = tensor_refs(const_cast<ModelParams&>(bw2.grads));
  for (size_t r = 0; r < a.size(); ++r)
    for (i64 k = 0; k < a[r].size(); ++k) CHECK(a[r].data[k] == b[r].data[k]);
}

TEST_CASE("empty mask is rejected, over-length input is rejected") {
  auto c = tiny_config(20);
  auto params = init_params(c, 15);
  auto batch = random_batch(c, 16, false);
  for (auto& m : batch.mask[0]) m = 0;
  const auto fwd = forward(params, batch);
  CHECK_THROWS_AS(loss_and_backward(params, batch, fwd), std::invalid_argument);

  Batch longb;
  longb.ids.push_back(std::vector<int>(static_cast<size_t>(c.context) + 1, Vocab::kBos));
  longb.features.push_back(std::nullopt);
  CHECK_THROWS_WITH_AS(forward(params, longb),
                       doctest::Contains("exceeds context window"), std::invalid_argument);
}

TEST_CASE("greedy generation is deterministic and honors max_new") {
  auto c = tiny_config(24, 2);
  auto params = init_params(c, 17);
  const std::vector<int> prompt = {Vocab::kBos, 7, 8, 9, Vocab::kSep};
  CHECK(generate(params, prompt, std::nullopt, 0).empty());
  const auto a = generate(params, prompt, std::nullopt, 12);
  const auto b = generate(params, prompt, std::nullopt, 12);
  CHECK(a == b);
  CHECK(a.size() <= 12);
}

TEST_CASE("memorization oracle: 200 adam steps overfit one pair and reproduce it") {
  const auto pairs = gen_text_repeat_qa(42, 1);
  const QAPair& pair = pairs[0];

  Vocab vocab = Vocab::build({pair.question, pair.answer});
  ModelConfig c;
  c.vocab = vocab.size();
  auto params = init_params(c, 123);

  const Batch batch = encode_example(pair, vocab, std::nullopt, c.context);
  OptimConfig oc;
  oc.kind = OptimKind::adam;
  oc.lr = 0.001;
  OptimState optim = make_optim(c, oc);

  double loss = 1e9;
  for (int step = 0; step < 200; ++step) {
    const auto fwd = forward(params, batch);
    auto bw = loss_and_backward(params, batch, fwd);
    loss = bw.loss;
    optim_step(params, bw.grads, optim);
  }
  CHECK(loss < 0.01);

  const auto prompt = encode_prompt(pair, vocab, 0);
  const auto out = generate(params, prompt, std::nullopt, 32);
  CHECK(detokenize(out, vocab) == detokenize(tokenize(pair.answer, vocab), vocab));
}

TEST_CASE("parameter count is a pure function of the config") {
  auto c = tiny_config(20, 2);
  const i64 n = param_count(c);
  auto params = init_params(c, 19);
  i64 total = 0;
  for (auto& r : tensor_refs(params)) total += r.size();
  CHECK(total == n);
  CHECK(n == param_count(tiny_config(20, 2)));
  CHECK(param_count(tiny_config(21, 2)) > n);
}

TEST_CASE("checkpoint save/load round-trips bit-exactly in f64") {
  auto c = tiny_config(26, 2);
  Model m;
  m.vocab = Vocab::build({"alpha bravo charlie delta echo foxtrot golf hotel india juliet"});
  c.vocab = m.vocab.size();
  m.params = init_params(c, 21);

  const std::string path = temp_path("pllm_ckpt_test.pllm");
  save_model(m, path);
  Model back = load_model(path);
  CHECK(back.params.config == m.params.config);
  CHECK(back.vocab.size() == m.vocab.size());
  CHECK(back.vocab.token(Vocab::kNumReserved) == m.vocab.token(Vocab::kNumReserved));
  auto a = tensor_refs(m.params);
  auto b = tensor_refs(back.params);
  for (size_t r = 0; r < a.size(); ++r)
    for (i64 k = 0; k < a[r].size(); ++k) CHECK(a[r].data[k] == b[r].data[k]);

  // f32 checkpoints load with reduced precision
  save_model(m, path, CheckpointDtype::f32);
  Model lossy = load_model(path);
  auto l = tensor_refs(lossy.params);
  for (size_t r = 0; r < a.size(); ++r)
    for (i64 k = 0; k < a[r].size(); ++k)
      CHECK(std::abs(l[r].data[k] - a[r].data[k]) <= 1e-6);
  std::remove(path.c_str());
}

TEST_CASE("non-finite parameters are detected and named") {
  auto c = tiny_config(20);
  auto params = init_params(c, 23);
  CHECK(!find_non_finite(params).has_value());
  params.layers[0].wq(3, 3) = std::numeric_limits<double>::quiet_NaN();
  auto bad = find_non_finite(params);
  REQUIRE(bad.has_value());
  CHECK(*bad == "layer0.wq");
}
