#include "pllm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pllm {

const char* to_string(OptimKind k) { return k == OptimKind::sgd ? "sgd" : "adam"; }

std::optional<OptimKind> optim_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimKind::sgd;
  if (s == "adam") return OptimKind::adam;
  return std::nullopt;
}

OptimState make_optim(const ModelConfig& model_config, const OptimConfig& config) {
  OptimState s;
  s.config = config;
  s.m = zeros_like(model_config);
  s.v = zeros_like(model_config);
  return s;
}

void optim_step(ModelParams& params, ModelParams& grads, OptimState& state) {
  if (auto bad = find_non_finite(grads))
    throw std::runtime_error("optimizer step refused: non-finite gradient in tensor " + *bad);

  const auto& cfg = state.config;
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(grads);

  if (cfg.kind == OptimKind::sgd) {
    for (size_t i = 0; i < p_refs.size(); ++i) {
      double* p = p_refs[i].data;
      const double* g = g_refs[i].data;
      for (i64 k = 0; k < p_refs[i].size(); ++k) p[k] -= cfg.lr * g[k];
    }
    ++state.step_count;
    return;
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  auto m_refs = tensor_refs(state.m);
  auto v_refs = tensor_refs(state.v);
  for (size_t i = 0; i < p_refs.size(); ++i) {
    double* p = p_refs[i].data;
    const double* g = g_refs[i].data;
    double* m = m_refs[i].data;
    double* v = v_refs[i].data;
    for (i64 k = 0; k < p_refs[i].size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace pllm
