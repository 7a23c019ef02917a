#include "pllm/curriculum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "pllm/io_util.hpp"
#include "pllm/rng.hpp"
#include "pllm/signal.hpp"

namespace pllm {

namespace {

constexpr u64 kShuffleStream = 0x73687566ULL;
constexpr u64 kReplayStream = 0x72706c79ULL;

std::string resolve_ref(const std::string& corpus_dir, const std::string& ref) {
  std::filesystem::path p(ref);
  if (p.is_absolute() || corpus_dir.empty()) return ref;
  return (std::filesystem::path(corpus_dir) / p).string();
}

struct StageData {
  std::vector<Batch> examples;  // one single-example batch per pair
};

StageData load_stage_data(const StageSpec& stage, const Vocab& vocab, const ModelConfig& config) {
  const auto pairs = read_jsonl(stage.corpus);
  if (pairs.empty())
    throw std::runtime_error("stage " + stage.name + ": corpus is empty: " + stage.corpus);
  const std::string dir = parent_dir(stage.corpus);

  StageData data;
  data.examples.reserve(pairs.size());
  for (const auto& pair : pairs) {
    const auto features = load_features(pair, dir, config.feat_dim);
    data.examples.push_back(encode_example(pair, vocab, features, config.context));
  }
  return data;
}

// Seeded permutation of [0, n); a pure function of (seed, epoch) so data
// order is independent of how iterations are divided into stages.
std::vector<i64> epoch_permutation(u64 seed, i64 epoch, i64 n) {
  std::vector<i64> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::mix(seed, kShuffleStream, static_cast<u64>(epoch)));
  for (i64 i = n - 1; i > 0; --i) {
    const i64 j = static_cast<i64>(rng.next_below(static_cast<u64>(i) + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

class ExamplePicker {
 public:
  ExamplePicker(u64 seed, i64 corpus_size) : seed_(seed), n_(corpus_size) {}

  i64 pick(u64 global_iter) {
    const i64 epoch = static_cast<i64>(global_iter) / n_;
    const i64 pos = static_cast<i64>(global_iter) % n_;
    if (epoch != cached_epoch_) {
      perm_ = epoch_permutation(seed_, epoch, n_);
      cached_epoch_ = epoch;
    }
    return perm_[static_cast<size_t>(pos)];
  }

 private:
  u64 seed_;
  i64 n_;
  i64 cached_epoch_ = -1;
  std::vector<i64> perm_;
};

void validate_stages(const std::vector<StageSpec>& stages) {
  if (stages.empty()) throw std::invalid_argument("run_curriculum: no stages");
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].iterations < 1)
      throw std::invalid_argument("stage " + stages[i].name + ": iterations must be >= 1");
    if (i > 0 && task_rank(stages[i].task) < task_rank(stages[i - 1].task))
      throw std::invalid_argument(
          "stage order violates the difficulty rank text_repeat < macro_count < micro_rate: " +
          stages[i - 1].name + " -> " + stages[i].name);
  }
}

std::string stage_checkpoint_path(const std::string& run_dir, size_t index,
                                  const std::string& name) {
  return join_path(run_dir, "stage_" + std::to_string(index + 1) + "_" + name + ".pllm");
}

}  // namespace

Batch encode_example(const QAPair& pair, const Vocab& vocab, const std::optional<Mat>& features,
                     int context) {
  std::vector<int> full;
  full.push_back(Vocab::kBos);
  if (features) {
    for (i64 f = 0; f < features->rows(); ++f) full.push_back(Vocab::kModal);
  }
  for (int id : tokenize(pair.question, vocab)) full.push_back(id);
  const size_t sep_index = full.size();
  full.push_back(Vocab::kSep);
  for (int id : tokenize(pair.answer, vocab)) full.push_back(id);
  full.push_back(Vocab::kEos);

  if (static_cast<int>(full.size()) > context + 1)
    throw std::invalid_argument("example " + pair.id + " is longer than the context window (" +
                                std::to_string(full.size() - 1) + " tokens)");

  const size_t n = full.size() - 1;
  Batch batch;
  batch.ids.push_back(std::vector<int>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n)));
  batch.targets.push_back(std::vector<int>(full.begin() + 1, full.end()));
  std::vector<std::uint8_t> mask(n, 0);
  for (size_t t = 0; t < n; ++t) mask[t] = (t + 1 > sep_index) ? 1 : 0;
  batch.mask.push_back(std::move(mask));
  batch.features.push_back(features);
  return batch;
}

std::vector<int> encode_prompt(const QAPair& pair, const Vocab& vocab, i64 n_modal) {
  std::vector<int> prompt;
  prompt.push_back(Vocab::kBos);
  for (i64 f = 0; f < n_modal; ++f) prompt.push_back(Vocab::kModal);
  for (int id : tokenize(pair.question, vocab)) prompt.push_back(id);
  prompt.push_back(Vocab::kSep);
  return prompt;
}

std::optional<Mat> load_features(const QAPair& pair, const std::string& corpus_dir, int feat_dim) {
  if (!pair.modality_ref) return std::nullopt;
  const std::string path = resolve_ref(corpus_dir, *pair.modality_ref);
  if (!file_exists(path))
    throw std::runtime_error("missing sequence file " + path + " referenced by " + pair.id);
  const PeriodicSequence seq = load_sequence(path);
  return to_frame_features(seq, feat_dim);
}

void RunLog::write_loss_csv(const std::string& path) const {
  AtomicFileWriter w(path);
  w.write_text("stage,iter,loss\n");
  for (const auto& row : losses)
    w.write_text(row.stage + "," + std::to_string(row.iter) + "," + format_double(row.loss) + "\n");
  w.commit();
}

std::string RunLog::summary_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["iterations"] = losses.size();
  nlohmann::json evals_json = nlohmann::json::array();
  for (const auto& e : evals) {
    nlohmann::json entry;
    entry["stage"] = e.stage;
    entry["corpus"] = e.corpus_name;
    entry["report"] = nlohmann::json::parse(e.report.to_json());
    evals_json.push_back(entry);
  }
  j["evals"] = evals_json;
  return j.dump(2);
}

std::vector<double> smooth_losses(const std::vector<double>& losses, i64 window) {
  if (window < 1) throw std::invalid_argument("smooth_losses: window must be >= 1");
  std::vector<double> out(losses.size());
  double acc = 0.0;
  for (size_t i = 0; i < losses.size(); ++i) {
    acc += losses[i];
    if (i >= static_cast<size_t>(window)) acc -= losses[i - static_cast<size_t>(window)];
    const i64 denom = std::min<i64>(window, static_cast<i64>(i) + 1);
    out[i] = acc / static_cast<double>(denom);
  }
  return out;
}

std::pair<Model, RunLog> run_curriculum(const std::vector<StageSpec>& stages, Model model,
                                        const TrainOptions& opts) {
  validate_stages(stages);
  if (opts.grad_accum < 1) throw std::invalid_argument("run_curriculum: grad_accum must be >= 1");

  const auto t_start = std::chrono::steady_clock::now();

  // Load and encode everything up front so corpus errors surface before any
  // training happens.
  std::vector<StageData> stage_data;
  stage_data.reserve(stages.size());
  for (const auto& stage : stages)
    stage_data.push_back(load_stage_data(stage, model.vocab, model.params.config));

  i64 total_iterations = 0;
  for (const auto& s : stages) total_iterations += s.iterations;

  RunLog log;
  log.seed = opts.seed;

  TrainerState state;
  state.optim = make_optim(model.params.config, opts.optim);
  size_t start_stage = 0;
  u64 start_iter_in_stage = 0;
  if (opts.resume) {
    if (opts.run_dir.empty())
      throw std::invalid_argument("run_curriculum: resume requires run_dir");
    Model resumed = load_model(join_path(opts.run_dir, "latest.pllm"));
    state = load_trainer_state(join_path(opts.run_dir, "latest.ptrn"), resumed.params.config);
    model = std::move(resumed);
    start_stage = static_cast<size_t>(state.stage_index);
    start_iter_in_stage = state.iter_in_stage;
  }

  const bool write_artifacts = !opts.run_dir.empty();
  if (write_artifacts) ensure_dir(opts.run_dir);

  std::string rlo_csv;
  auto dump_weights = [&](const std::string& stage_name, i64 iter, const Vec& w) {
    if (rlo_csv.empty()) {
      rlo_csv = "stage,iter";
      for (i64 i = 0; i < w.size(); ++i) rlo_csv += ",c" + std::to_string(i);
      rlo_csv += "\n";
    }
    rlo_csv += stage_name + "," + std::to_string(iter);
    for (i64 i = 0; i < w.size(); ++i) rlo_csv += "," + format_double(w(i));
    rlo_csv += "\n";
  };

  auto save_latest = [&] {
    if (!write_artifacts) return;
    save_model(model, join_path(opts.run_dir, "latest.pllm"));
    save_trainer_state(state, join_path(opts.run_dir, "latest.ptrn"));
  };

  for (size_t si = start_stage; si < stages.size(); ++si) {
    const StageSpec& stage = stages[si];
    const StageData& data = stage_data[si];
    const i64 corpus_size = static_cast<i64>(data.examples.size());
    ExamplePicker picker(opts.seed, corpus_size);

    RloConfig rlo = stage.rlo;
    if (rlo.max_iter <= 0)
      rlo.max_iter = rlo.iter_scope == IterScope::per_stage ? stage.iterations : total_iterations;

    i64 earlier_total = 0;
    for (size_t k = 0; k < si; ++k) earlier_total += static_cast<i64>(stage_data[k].examples.size());

    for (i64 iter = static_cast<i64>(si == start_stage ? start_iter_in_stage : 0);
         iter < stage.iterations; ++iter) {
      ModelParams grads = zeros_like(model.params.config);
      double loss_sum = 0.0;
      const ForwardResult* last_fwd = nullptr;
      ForwardResult fwd;
      for (int micro = 0; micro < opts.grad_accum; ++micro) {
        const Batch* batch = nullptr;
        if (opts.replay && si > 0 && earlier_total > 0) {
          Rng replay_rng(Rng::mix(opts.seed, kReplayStream, state.global_iter));
          if (replay_rng.next_unit() < 0.2) {
            i64 idx = static_cast<i64>(replay_rng.next_below(static_cast<u64>(earlier_total)));
            for (size_t k = 0; k < si; ++k) {
              const i64 sz = static_cast<i64>(stage_data[k].examples.size());
              if (idx < sz) { batch = &stage_data[k].examples[static_cast<size_t>(idx)]; break; }
              idx -= sz;
            }
          }
        }
        if (!batch) batch = &data.examples[static_cast<size_t>(picker.pick(state.global_iter))];
        ++state.global_iter;

        fwd = forward(model.params, *batch);
        BackwardResult bw = loss_and_backward(model.params, *batch, fwd);
        loss_sum += bw.loss;
        auto g_refs = tensor_refs(grads);
        auto b_refs = tensor_refs(bw.grads);
        for (size_t r = 0; r < g_refs.size(); ++r)
          for (i64 k = 0; k < g_refs[r].size(); ++k) g_refs[r].data[k] += b_refs[r].data[k];
        last_fwd = &fwd;
      }
      if (opts.grad_accum > 1) {
        const double inv = 1.0 / static_cast<double>(opts.grad_accum);
        for (auto& r : tensor_refs(grads))
          for (i64 k = 0; k < r.size(); ++k) r.data[k] *= inv;
      }
      const double loss = loss_sum / static_cast<double>(opts.grad_accum);
      if (!std::isfinite(loss))
        throw std::runtime_error("stage " + stage.name + " iteration " + std::to_string(iter) +
                                 ": non-finite loss; aborting with last checkpoint retained");

      if (rlo.enabled) {
        const i64 iter_num = rlo.iter_scope == IterScope::per_stage
                                 ? iter
                                 : static_cast<i64>(state.global_iter / opts.grad_accum) - 1;
        ChannelStats stats;
        if (rlo.stat_source == StatSource::grad_abs_mean) {
          stats = channel_stats(resolve_rlo_target(grads, rlo.target));
        } else {
          stats = channel_stats(last_fwd->examples.back().hidden.transpose());
        }
        const Vec weights = omega(stats, std::min(iter_num, rlo.max_iter), rlo);
        apply_rlo(grads, weights, rlo);
        if (opts.dump_rlo_weights) dump_weights(stage.name, iter, weights);
      }

      optim_step(model.params, grads, state.optim);
      log.losses.push_back({stage.name, iter, loss});
      state.stage_index = si;
      state.iter_in_stage = static_cast<u64>(iter) + 1;

      if (opts.checkpoint_every > 0 && (iter + 1) % opts.checkpoint_every == 0) save_latest();
    }

    if (write_artifacts) {
      save_model(model, stage_checkpoint_path(opts.run_dir, si, stage.name));
      state.stage_index = si + 1;
      state.iter_in_stage = 0;
      save_latest();
    } else {
      state.stage_index = si + 1;
      state.iter_in_stage = 0;
    }

    for (const auto& [name, path] : stage.eval_corpora) {
      StageEval ev;
      ev.stage = stage.name;
      ev.corpus_name = name;
      ev.report = evaluate(model, path, stage.task, opts.max_new);
      log.evals.push_back(std::move(ev));
    }
  }

  if (write_artifacts) {
    save_model(model, join_path(opts.run_dir, "final.pllm"));
    if (opts.dump_rlo_weights && !rlo_csv.empty())
      write_text_file(join_path(opts.run_dir, "rlo_weights.csv"), rlo_csv);
  }

  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(model), std::move(log)};
}

EvalDetail evaluate_detail(const Model& model, const std::string& corpus_path, Task task,
                           int max_new) {
  const auto pairs = read_jsonl(corpus_path);
  const std::string dir = parent_dir(corpus_path);

  EvalDetail detail;
  detail.items.reserve(pairs.size());
  std::vector<std::string> generated, references;
  std::vector<long long> truths;
  size_t exact = 0;
  for (const auto& pair : pairs) {
    if (pair.task != task)
      throw std::runtime_error("corpus " + corpus_path + " contains task " +
                               std::string(to_string(pair.task)) + ", expected " + to_string(task));
    const auto features = load_features(pair, dir, model.params.config.feat_dim);
    const auto prompt = encode_prompt(pair, model.vocab, features ? features->rows() : 0);
    const auto out_ids = generate(model.params, prompt, features, max_new);
    EvalItem item;
    item.id = pair.id;
    item.generated = detokenize(out_ids, model.vocab);
    item.reference = pair.answer;
    item.truth = pair.key_count;
    item.extracted = extract_number(item.generated).value;
    if (item.extracted && *item.extracted == item.truth) ++exact;
    generated.push_back(item.generated);
    references.push_back(item.reference);
    truths.push_back(item.truth);
    detail.items.push_back(std::move(item));
  }
  detail.report = evaluate_predictions(generated, references, truths);
  detail.exact_match_rate =
      pairs.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(pairs.size());
  return detail;
}

EvalReport evaluate(const Model& model, const std::string& corpus_path, Task task, int max_new) {
  return evaluate_detail(model, corpus_path, task, max_new).report;
}

EvalDetail evaluate_with(const std::function<std::string(const QAPair&)>& answerer,
                         const std::vector<QAPair>& pairs) {
  EvalDetail detail;
  std::vector<std::string> generated, references;
  std::vector<long long> truths;
  size_t exact = 0;
  for (const auto& pair : pairs) {
    EvalItem item;
    item.id = pair.id;
    item.generated = answerer(pair);
    item.reference = pair.answer;
    item.truth = pair.key_count;
    item.extracted = extract_number(item.generated).value;
    if (item.extracted && *item.extracted == item.truth) ++exact;
    generated.push_back(item.generated);
    references.push_back(item.reference);
    truths.push_back(item.truth);
    detail.items.push_back(std::move(item));
  }
  detail.report = evaluate_predictions(generated, references, truths);
  detail.exact_match_rate =
      pairs.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(pairs.size());
  return detail;
}

double retention_delta(const RunLog& log, const std::string& stage_a, const std::string& stage_b) {
  auto find_eval = [&log](const std::string& stage, const std::string& corpus) -> const StageEval* {
    for (const auto& e : log.evals)
      if (e.stage == stage && e.corpus_name == corpus) return &e;
    return nullptr;
  };

  for (const auto& e : log.evals) {
    if (e.stage != stage_a) continue;
    const StageEval* after_b = find_eval(stage_b, e.corpus_name);
    if (!after_b) continue;
    if (!e.report.mae || !after_b->report.mae)
      throw std::runtime_error("retention_delta: MAE missing for corpus " + e.corpus_name);
    return *after_b->report.mae - *e.report.mae;
  }
  throw std::runtime_error("retention_delta: stages " + stage_a + " and " + stage_b +
                           " share no evaluated corpus");
}

}  // namespace pllm
