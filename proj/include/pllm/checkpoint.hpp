#pragma once

#include <string>

#include "pllm/model.hpp"
#include "pllm/optim.hpp"

namespace pllm {

enum class CheckpointDtype : std::uint8_t { f32 = 0, f64 = 1 };

// Checkpoint layout: magic "PLLM1", version, dtype, config block (V, d,
// layers, heads, ffn, feat_dim, context), vocab table, then all tensors in
// declared order as little-endian floats of the stated width. f64 is the
// default so save/load round-trips are bit-exact; f32 halves the size.
void save_model(const Model& model, const std::string& path,
                CheckpointDtype dtype = CheckpointDtype::f64);
Model load_model(const std::string& path);

// Trainer resume state sidecar ("PTRN1"): optimizer moments and counters so
// a resumed run replays the exact trajectory of an uninterrupted one.
struct TrainerState {
  OptimState optim;
  u64 global_iter = 0;     // data-order cursor across the whole run
  u64 stage_index = 0;     // stage currently being trained
  u64 iter_in_stage = 0;   // completed iterations within that stage
};

void save_trainer_state(const TrainerState& state, const std::string& path);
TrainerState load_trainer_state(const std::string& path, const ModelConfig& config);

}  // namespace pllm
