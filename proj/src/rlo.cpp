#include "pllm/rlo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pllm {

const char* to_string(ThresholdMode m) {
  return m == ThresholdMode::mean ? "mean" : "median";
}
const char* to_string(StatSource s) {
  return s == StatSource::grad_abs_mean ? "grad_abs_mean" : "activation_abs_mean";
}
const char* to_string(IterScope s) { return s == IterScope::per_stage ? "per_stage" : "global"; }

std::optional<ThresholdMode> threshold_mode_from_string(const std::string& s) {
  if (s == "mean") return ThresholdMode::mean;
  if (s == "median") return ThresholdMode::median;
  return std::nullopt;
}
std::optional<StatSource> stat_source_from_string(const std::string& s) {
  if (s == "grad_abs_mean") return StatSource::grad_abs_mean;
  if (s == "activation_abs_mean") return StatSource::activation_abs_mean;
  return std::nullopt;
}
std::optional<IterScope> iter_scope_from_string(const std::string& s) {
  if (s == "per_stage") return IterScope::per_stage;
  if (s == "global") return IterScope::global;
  return std::nullopt;
}

ChannelStats channel_stats(const Mat& tensor) {
  if (tensor.rows() < 1 || tensor.cols() < 1)
    throw std::invalid_argument("channel_stats: empty tensor");
  ChannelStats s;
  s.per_channel_mean = tensor.array().abs().rowwise().mean();
  s.global_mean = s.per_channel_mean.mean();
  return s;
}

Vec omega(const ChannelStats& stats, i64 iter_num, const RloConfig& cfg) {
  if (cfg.beta <= 0.0) throw std::invalid_argument("omega: beta must be > 0");
  if (cfg.max_iter < 1) throw std::invalid_argument("omega: max_iter must be >= 1");
  if (iter_num < 0 || iter_num > cfg.max_iter)
    throw std::invalid_argument("omega: iter_num must lie in [0, max_iter]");

  double threshold = stats.global_mean;
  if (cfg.threshold_mode == ThresholdMode::median) {
    std::vector<double> v(stats.per_channel_mean.data(),
                          stats.per_channel_mean.data() + stats.per_channel_mean.size());
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    threshold = (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }

  const double boost =
      1.0 + cfg.beta * std::exp(static_cast<double>(iter_num) / static_cast<double>(cfg.max_iter));
  Vec w(stats.per_channel_mean.size());
  for (i64 i = 0; i < w.size(); ++i)
    w(i) = stats.per_channel_mean(i) < threshold ? boost : 1.0;
  return w;
}

Mat& resolve_rlo_target(ModelParams& p, const std::string& target) {
  if (target == "output_head" || target == "w_out") return p.w_out;
  if (target == "w_proj") return p.w_proj;
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    if (target == pre + "wo") return p.layers[i].wo;
    if (target == pre + "w_ff2") return p.layers[i].w_ff2;
  }
  throw std::invalid_argument("rlo: unknown target tensor: " + target);
}

void apply_rlo(ModelParams& grads, const Vec& weights, const RloConfig& cfg) {
  Mat& t = resolve_rlo_target(grads, cfg.target);
  if (weights.size() != t.rows())
    throw std::invalid_argument("apply_rlo: weight count " + std::to_string(weights.size()) +
                                " does not match channel count " + std::to_string(t.rows()));
  for (i64 r = 0; r < t.rows(); ++r) t.row(r) *= weights(r);
}

}  // namespace pllm
