#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pllm/checkpoint.hpp"
#include "pllm/instruct.hpp"
#include "pllm/metrics.hpp"
#include "pllm/model.hpp"
#include "pllm/optim.hpp"
#include "pllm/rlo.hpp"

namespace pllm {

struct StageSpec {
  std::string name;
  Task task = Task::text_repeat;
  std::string corpus;  // JSONL path
  i64 iterations = 1;
  // Evaluated at the end of this stage; include earlier stages' test sets
  // here to measure retention.
  std::vector<std::pair<std::string, std::string>> eval_corpora;  // (name, path)
  RloConfig rlo;
};

struct LossRow {
  std::string stage;
  i64 iter = 0;  // within-stage, contiguous from 0
  double loss = 0.0;
};

struct StageEval {
  std::string stage;
  std::string corpus_name;
  EvalReport report;
};

struct RunLog {
  std::vector<LossRow> losses;
  std::vector<StageEval> evals;
  double wall_seconds = 0.0;
  u64 seed = 0;
  std::string config_echo;

  void write_loss_csv(const std::string& path) const;
  std::string summary_json() const;
};

struct TrainOptions {
  u64 seed = 0;
  OptimConfig optim;
  int grad_accum = 1;
  bool replay = false;  // mix earlier-stage examples into later stages
  std::string run_dir;  // checkpoints written when non-empty
  int max_new = 32;     // decoding budget for stage-end evaluations
  i64 checkpoint_every = 0;  // extra rolling checkpoints every N iterations
  bool dump_rlo_weights = false;
  bool resume = false;  // continue from run_dir/latest.{pllm,ptrn}
};

// Sequential easy-to-hard training: validates stage order against the task
// difficulty rank, trains each stage with masked NLL, applies RLO channel
// weighting when enabled, checkpoints at stage boundaries, and evaluates the
// declared corpora at each boundary.
std::pair<Model, RunLog> run_curriculum(const std::vector<StageSpec>& stages, Model model,
                                        const TrainOptions& opts);

struct EvalItem {
  std::string id;
  std::string generated;
  std::string reference;
  long long truth = 0;
  std::optional<long long> extracted;
};

struct EvalDetail {
  EvalReport report;
  std::vector<EvalItem> items;
  double exact_match_rate = 0.0;  // extracted present and equal to truth
};

EvalDetail evaluate_detail(const Model& model, const std::string& corpus_path, Task task,
                           int max_new = 32);
EvalReport evaluate(const Model& model, const std::string& corpus_path, Task task,
                    int max_new = 32);

// Same protocol with an injected answerer instead of model decoding.
EvalDetail evaluate_with(const std::function<std::string(const QAPair&)>& answerer,
                         const std::vector<QAPair>& pairs);

// MAE on stage_a's test corpus measured after stage_b minus after stage_a;
// positive values mean forgetting. The corpus is the first eval corpus the
// two stages share.
double retention_delta(const RunLog& log, const std::string& stage_a, const std::string& stage_b);

// Trailing moving average; entry i averages the window ending at i.
std::vector<double> smooth_losses(const std::vector<double>& losses, i64 window);

// Encoding used for both training and decoding prompts:
//   <bos> [<modal> x F] question <sep> answer <eos>
// with loss on the answer tokens and <eos>.
Batch encode_example(const QAPair& pair, const Vocab& vocab, const std::optional<Mat>& features,
                     int context);
std::vector<int> encode_prompt(const QAPair& pair, const Vocab& vocab, i64 n_modal);

// Loads the referenced sequence and expands it to frame features; paths
// resolve relative to the corpus directory.
std::optional<Mat> load_features(const QAPair& pair, const std::string& corpus_dir, int feat_dim);

}  // namespace pllm
