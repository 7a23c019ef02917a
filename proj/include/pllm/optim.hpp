#pragma once

#include <optional>
#include <string>

#include "pllm/model.hpp"

namespace pllm {

enum class OptimKind { sgd, adam };

const char* to_string(OptimKind k);
std::optional<OptimKind> optim_kind_from_string(const std::string& s);

struct OptimConfig {
  OptimKind kind = OptimKind::adam;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  OptimConfig config;
  ModelParams m;  // first moments (Adam)
  ModelParams v;  // second moments (Adam)
  i64 step_count = 0;
};

OptimState make_optim(const ModelConfig& model_config, const OptimConfig& config);

// One update. SGD: theta -= lr * g. Adam: bias-corrected moments. Refuses
// non-finite gradients, naming the offending tensor.
void optim_step(ModelParams& params, ModelParams& grads, OptimState& state);

}  // namespace pllm
