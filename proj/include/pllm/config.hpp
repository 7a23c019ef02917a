#pragma once

#include <map>
#include <string>
#include <vector>

#include "pllm/curriculum.hpp"
#include "pllm/model.hpp"
#include "pllm/optim.hpp"
#include "pllm/rlo.hpp"

namespace pllm {

// One declarative key=value file describes a training run: model dimensions,
// optimizer, RLO settings, and the ordered stage list. Unknown keys are
// rejected by name. Relative corpus paths resolve against the file's
// directory.
struct TrainRunConfig {
  u64 seed = 0;
  std::string out_dir;
  ModelConfig model;  // vocab is filled from the corpora at train time
  OptimConfig optim;
  RloConfig rlo;  // defaults; stages may override
  int grad_accum = 1;
  bool replay = false;
  int max_new = 32;
  i64 checkpoint_every = 0;
  bool dump_rlo_weights = false;
  std::vector<StageSpec> stages;

  // Normalized echo; parsing it back reproduces the same config.
  std::string echo() const;
};

TrainRunConfig parse_train_config_file(const std::string& path);
TrainRunConfig parse_train_config_text(const std::string& text, const std::string& base_dir);

}  // namespace pllm
