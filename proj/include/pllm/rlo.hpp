#pragma once

#include <optional>
#include <string>

#include "pllm/common.hpp"
#include "pllm/model.hpp"

namespace pllm {

enum class ThresholdMode { mean, median };
enum class StatSource { grad_abs_mean, activation_abs_mean };
enum class IterScope { per_stage, global };

const char* to_string(ThresholdMode m);
const char* to_string(StatSource s);
const char* to_string(IterScope s);
std::optional<ThresholdMode> threshold_mode_from_string(const std::string& s);
std::optional<StatSource> stat_source_from_string(const std::string& s);
std::optional<IterScope> iter_scope_from_string(const std::string& s);

struct RloConfig {
  bool enabled = false;
  double beta = 0.05;
  i64 max_iter = 1;  // the trainer substitutes the stage length when <= 0
  ThresholdMode threshold_mode = ThresholdMode::mean;
  StatSource stat_source = StatSource::grad_abs_mean;
  IterScope iter_scope = IterScope::per_stage;
  std::string target = "output_head";  // channel-weighted tensor selector
};

struct ChannelStats {
  Vec per_channel_mean;  // mean |value| over each channel's entries
  double global_mean = 0.0;
};

// Rows of the [C x W] tensor are the feature channels.
ChannelStats channel_stats(const Mat& tensor);

// Channel weights: 1 + beta * e^(iter_num/max_iter) for channels whose mean
// statistic falls strictly below the threshold (global mean or median of the
// per-channel means), 1 otherwise. Requires 0 <= iter_num <= max_iter.
Vec omega(const ChannelStats& stats, i64 iter_num, const RloConfig& cfg);

// Scales row i of every targeted gradient tensor by weights[i]; everything
// else passes through untouched. Targets resolve against tensor_refs names,
// with "output_head" as an alias for w_out.
void apply_rlo(ModelParams& grads, const Vec& weights, const RloConfig& cfg);

// The tensor the weights index, e.g. grads.w_out for "output_head".
Mat& resolve_rlo_target(ModelParams& p, const std::string& target);

}  // namespace pllm
