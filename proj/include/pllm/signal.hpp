#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pllm/common.hpp"

namespace pllm {

enum class Waveform { cosine, square, triangle };
enum class SemanticKind { none, linear_drift, random_walk };

const char* to_string(Waveform w);
const char* to_string(SemanticKind k);
std::optional<Waveform> waveform_from_string(const std::string& s);
std::optional<SemanticKind> semantic_from_string(const std::string& s);

struct SequenceConfig {
  i64 length = 1;       // L, time steps
  i64 channels = 1;     // D
  double period_s = 1.0;
  double dt_s = 1.0;
  double amplitude = 1.0;      // periodic amplitude
  double semantic_amp = 0.0;   // semantic amplitude
  double drift_slope = 0.5;    // per second, for linear_drift
  Waveform waveform = Waveform::cosine;
  SemanticKind semantic = SemanticKind::none;
  double noise_sigma = 0.0;
  u64 seed = 0;
};

// Discretized x(t) = K * p(w t) + N * s(t) + noise, sampled L times with step
// dt over D channels. Channel 0 carries phase 0; the remaining channels get
// seeded phase offsets.
struct PeriodicSequence {
  SequenceConfig config;
  double omega = 0.0;  // 2*pi / period
  std::vector<double> samples;  // row-major [L x D]

  double at(i64 t, i64 d) const { return samples[static_cast<size_t>(t * config.channels + d)]; }
};

struct GroundTruth {
  i64 repetition_count = 0;    // completed periods in the sampled window
  double rate_per_minute = 0;  // 60 / period
};

PeriodicSequence generate_sequence(const SequenceConfig& config);

GroundTruth derive_ground_truth(const PeriodicSequence& seq);

// Expands every time step into a feat_dim descriptor: the first min(D, feat_dim)
// columns are the raw channel samples, the rest are fixed seeded random
// projections of the sample row. Linear in the samples.
Mat to_frame_features(const PeriodicSequence& seq, int feat_dim);

// Columnar binary format: magic "PSEQ1", version, header (L, D, dt, T plus the
// generator settings), then L*D little-endian f64 samples in row-major order.
void save_sequence(const PeriodicSequence& seq, const std::string& path);
PeriodicSequence load_sequence(const std::string& path);

void save_sequence_csv(const PeriodicSequence& seq, const std::string& path);

}  // namespace pllm
