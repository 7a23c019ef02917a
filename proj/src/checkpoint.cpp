#include "pllm/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

#include "pllm/io_util.hpp"

namespace pllm {

namespace {

constexpr char kModelMagic[5] = {'P', 'L', 'L', 'M', '1'};
constexpr char kTrainerMagic[5] = {'P', 'T', 'R', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void write_config(AtomicFileWriter& w, const ModelConfig& c) {
  w.write_u32(static_cast<std::uint32_t>(c.vocab));
  w.write_u32(static_cast<std::uint32_t>(c.dim));
  w.write_u32(static_cast<std::uint32_t>(c.layers));
  w.write_u32(static_cast<std::uint32_t>(c.heads));
  w.write_u32(static_cast<std::uint32_t>(c.ffn));
  w.write_u32(static_cast<std::uint32_t>(c.feat_dim));
  w.write_u32(static_cast<std::uint32_t>(c.context));
}

ModelConfig read_config(FileReader& r) {
  ModelConfig c;
  c.vocab = static_cast<int>(r.read_u32());
  c.dim = static_cast<int>(r.read_u32());
  c.layers = static_cast<int>(r.read_u32());
  c.heads = static_cast<int>(r.read_u32());
  c.ffn = static_cast<int>(r.read_u32());
  c.feat_dim = static_cast<int>(r.read_u32());
  c.context = static_cast<int>(r.read_u32());
  return c;
}

void write_tensors(AtomicFileWriter& w, ModelParams& p, CheckpointDtype dtype) {
  for (auto& ref : tensor_refs(p)) {
    if (dtype == CheckpointDtype::f64) {
      w.write_bytes(ref.data, static_cast<size_t>(ref.size()) * sizeof(double));
    } else {
      for (i64 i = 0; i < ref.size(); ++i) w.write_f32(static_cast<float>(ref.data[i]));
    }
  }
}

void read_tensors(FileReader& r, ModelParams& p, CheckpointDtype dtype) {
  for (auto& ref : tensor_refs(p)) {
    if (dtype == CheckpointDtype::f64) {
      r.read_bytes(ref.data, static_cast<size_t>(ref.size()) * sizeof(double));
    } else {
      for (i64 i = 0; i < ref.size(); ++i) ref.data[i] = static_cast<double>(r.read_f32());
    }
  }
}

}  // namespace

void save_model(const Model& model, const std::string& path, CheckpointDtype dtype) {
  AtomicFileWriter w(path);
  w.write_bytes(kModelMagic, sizeof(kModelMagic));
  w.write_u32(kVersion);
  std::uint8_t dt = static_cast<std::uint8_t>(dtype);
  w.write_bytes(&dt, 1);
  write_config(w, model.params.config);

  w.write_u32(static_cast<std::uint32_t>(model.vocab.size()));
  for (const auto& tok : model.vocab.tokens()) {
    w.write_u32(static_cast<std::uint32_t>(tok.size()));
    w.write_bytes(tok.data(), tok.size());
  }

  ModelParams& p = const_cast<ModelParams&>(model.params);
  write_tensors(w, p, dtype);
  w.commit();
}

Model load_model(const std::string& path) {
  FileReader r(path);
  char magic[5];
  r.read_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path + ": not a PLLM1 checkpoint");
  const std::uint32_t version = r.read_u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  std::uint8_t dt = 0;
  r.read_bytes(&dt, 1);
  if (dt > 1) throw std::runtime_error(path + ": unknown checkpoint dtype");
  const ModelConfig config = read_config(r);

  const std::uint32_t vocab_count = r.read_u32();
  if (static_cast<int>(vocab_count) != config.vocab)
    throw std::runtime_error(path + ": vocab table size does not match config");
  std::vector<std::string> tokens(vocab_count);
  for (auto& tok : tokens) {
    const std::uint32_t len = r.read_u32();
    tok.resize(len);
    if (len > 0) r.read_bytes(tok.data(), len);
  }

  Model model;
  model.vocab = Vocab::from_tokens(std::move(tokens));
  model.params = zeros_like(config);
  read_tensors(r, model.params, static_cast<CheckpointDtype>(dt));
  return model;
}

void save_trainer_state(const TrainerState& state, const std::string& path) {
  AtomicFileWriter w(path);
  w.write_bytes(kTrainerMagic, sizeof(kTrainerMagic));
  w.write_u32(kVersion);
  w.write_u32(static_cast<std::uint32_t>(state.optim.config.kind));
  w.write_f64(state.optim.config.lr);
  w.write_f64(state.optim.config.beta1);
  w.write_f64(state.optim.config.beta2);
  w.write_f64(state.optim.config.eps);
  w.write_u64(static_cast<u64>(state.optim.step_count));
  ModelParams& m = const_cast<ModelParams&>(state.optim.m);
  ModelParams& v = const_cast<ModelParams&>(state.optim.v);
  write_tensors(w, m, CheckpointDtype::f64);
  write_tensors(w, v, CheckpointDtype::f64);
  w.write_u64(state.global_iter);
  w.write_u64(state.stage_index);
  w.write_u64(state.iter_in_stage);
  w.commit();
}

TrainerState load_trainer_state(const std::string& path, const ModelConfig& config) {
  FileReader r(path);
  char magic[5];
  r.read_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kTrainerMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path + ": not a PTRN1 trainer-state file");
  const std::uint32_t version = r.read_u32();
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported trainer-state version");

  TrainerState s;
  OptimConfig oc;
  oc.kind = static_cast<OptimKind>(r.read_u32());
  oc.lr = r.read_f64();
  oc.beta1 = r.read_f64();
  oc.beta2 = r.read_f64();
  oc.eps = r.read_f64();
  s.optim = make_optim(config, oc);
  s.optim.step_count = static_cast<i64>(r.read_u64());
  read_tensors(r, s.optim.m, CheckpointDtype::f64);
  read_tensors(r, s.optim.v, CheckpointDtype::f64);
  s.global_iter = r.read_u64();
  s.stage_index = r.read_u64();
  s.iter_in_stage = r.read_u64();
  return s;
}

}  // namespace pllm
