#include "pllm/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pllm/io_util.hpp"

namespace pllm {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw std::runtime_error("config key '" + key + "': " + why);
}

i64 parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const i64 v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    bad_key(key, "expected an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    bad_key(key, "expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_key(key, "expected true/false, got '" + value + "'");
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return p;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

bool apply_rlo_key(RloConfig& rlo, const std::string& key, const std::string& field,
                   const std::string& value) {
  if (field == "enabled") { rlo.enabled = parse_bool(key, value); return true; }
  if (field == "beta") {
    rlo.beta = parse_double(key, value);
    if (rlo.beta <= 0.0) bad_key(key, "beta must be > 0");
    return true;
  }
  if (field == "max_iter") { rlo.max_iter = parse_int(key, value); return true; }
  if (field == "threshold_mode") {
    const auto m = threshold_mode_from_string(value);
    if (!m) bad_key(key, "expected mean|median");
    rlo.threshold_mode = *m;
    return true;
  }
  if (field == "stat_source") {
    const auto s = stat_source_from_string(value);
    if (!s) bad_key(key, "expected grad_abs_mean|activation_abs_mean");
    rlo.stat_source = *s;
    return true;
  }
  if (field == "iter_scope") {
    const auto s = iter_scope_from_string(value);
    if (!s) bad_key(key, "expected per_stage|global");
    rlo.iter_scope = *s;
    return true;
  }
  if (field == "target") { rlo.target = value; return true; }
  return false;
}

struct StageDraft {
  StageSpec spec;
  bool has_rlo_override = false;
  std::map<std::string, std::string> rlo_fields;
  bool seen = false;
};

}  // namespace

TrainRunConfig parse_train_config_file(const std::string& path) {
  return parse_train_config_text(read_text_file(path), parent_dir(path));
}

TrainRunConfig parse_train_config_text(const std::string& text, const std::string& base_dir) {
  TrainRunConfig cfg;
  std::map<i64, StageDraft> stage_drafts;

  std::istringstream in(text);
  std::string line;
  i64 line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");

    if (key == "seed") { cfg.seed = static_cast<u64>(parse_int(key, value)); continue; }
    if (key == "out") { cfg.out_dir = resolve_path(base_dir, value); continue; }
    if (key == "model.dim") { cfg.model.dim = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "model.layers") { cfg.model.layers = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "model.heads") { cfg.model.heads = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "model.ffn") { cfg.model.ffn = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "model.feat_dim") { cfg.model.feat_dim = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "model.context") { cfg.model.context = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "optim.kind") {
      const auto k = optim_kind_from_string(value);
      if (!k) bad_key(key, "expected sgd|adam");
      cfg.optim.kind = *k;
      continue;
    }
    if (key == "optim.lr") {
      cfg.optim.lr = parse_double(key, value);
      if (cfg.optim.lr <= 0.0) bad_key(key, "learning rate must be > 0");
      continue;
    }
    if (key == "train.grad_accum") { cfg.grad_accum = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "train.replay") { cfg.replay = parse_bool(key, value); continue; }
    if (key == "train.max_new") { cfg.max_new = static_cast<int>(parse_int(key, value)); continue; }
    if (key == "train.checkpoint_every") { cfg.checkpoint_every = parse_int(key, value); continue; }
    if (key == "rlo.dump_weights") { cfg.dump_rlo_weights = parse_bool(key, value); continue; }
    if (key.rfind("rlo.", 0) == 0) {
      if (apply_rlo_key(cfg.rlo, key, key.substr(4), value)) continue;
      bad_key(key, "unknown rlo setting");
    }
    if (key.rfind("stage.", 0) == 0) {
      const auto rest = key.substr(6);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) bad_key(key, "expected stage.<index>.<field>");
      const i64 index = parse_int(key, rest.substr(0, dot));
      if (index < 1) bad_key(key, "stage indices start at 1");
      const std::string field = rest.substr(dot + 1);
      StageDraft& draft = stage_drafts[index];
      draft.seen = true;
      if (field == "name") { draft.spec.name = value; continue; }
      if (field == "task") {
        const auto t = task_from_string(value);
        if (!t) bad_key(key, "expected text_repeat|macro_count|micro_rate");
        draft.spec.task = *t;
        continue;
      }
      if (field == "corpus") { draft.spec.corpus = resolve_path(base_dir, value); continue; }
      if (field == "iterations") { draft.spec.iterations = parse_int(key, value); continue; }
      if (field == "eval") {
        std::istringstream items(value);
        std::string item;
        while (std::getline(items, item, ',')) {
          item = trim(item);
          if (item.empty()) continue;
          const auto colon = item.find(':');
          if (colon == std::string::npos) bad_key(key, "expected name:path[,name:path...]");
          draft.spec.eval_corpora.emplace_back(trim(item.substr(0, colon)),
                                               resolve_path(base_dir, trim(item.substr(colon + 1))));
        }
        continue;
      }
      if (field.rfind("rlo.", 0) == 0) {
        draft.has_rlo_override = true;
        draft.rlo_fields[field.substr(4)] = value;
        continue;
      }
      bad_key(key, "unknown stage field '" + field + "'");
    }
    throw std::runtime_error("unknown config key '" + key + "'");
  }

  i64 expected = 1;
  for (auto& [index, draft] : stage_drafts) {
    if (index != expected)
      throw std::runtime_error("config stages must be numbered contiguously from 1; missing stage." +
                               std::to_string(expected));
    ++expected;
    if (draft.spec.name.empty()) draft.spec.name = "stage" + std::to_string(index);
    if (draft.spec.corpus.empty())
      throw std::runtime_error("stage." + std::to_string(index) + ".corpus is required");
    draft.spec.rlo = cfg.rlo;
    for (const auto& [field, value] : draft.rlo_fields) {
      const std::string key = "stage." + std::to_string(index) + ".rlo." + field;
      if (!apply_rlo_key(draft.spec.rlo, key, field, value)) bad_key(key, "unknown rlo setting");
    }
    cfg.stages.push_back(draft.spec);
  }
  return cfg;
}

std::string TrainRunConfig::echo() const {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("seed", std::to_string(seed));
  if (!out_dir.empty()) kv("out", out_dir);
  kv("model.dim", std::to_string(model.dim));
  kv("model.layers", std::to_string(model.layers));
  kv("model.heads", std::to_string(model.heads));
  kv("model.ffn", std::to_string(model.ffn));
  kv("model.feat_dim", std::to_string(model.feat_dim));
  kv("model.context", std::to_string(model.context));
  kv("optim.kind", to_string(optim.kind));
  kv("optim.lr", format_double(optim.lr));
  kv("train.grad_accum", std::to_string(grad_accum));
  kv("train.replay", replay ? "true" : "false");
  kv("train.max_new", std::to_string(max_new));
  kv("train.checkpoint_every", std::to_string(checkpoint_every));
  kv("rlo.enabled", rlo.enabled ? "true" : "false");
  kv("rlo.beta", format_double(rlo.beta));
  kv("rlo.max_iter", std::to_string(rlo.max_iter));
  kv("rlo.threshold_mode", to_string(rlo.threshold_mode));
  kv("rlo.stat_source", to_string(rlo.stat_source));
  kv("rlo.iter_scope", to_string(rlo.iter_scope));
  kv("rlo.target", rlo.target);
  kv("rlo.dump_weights", dump_rlo_weights ? "true" : "false");
  for (size_t i = 0; i < stages.size(); ++i) {
    const std::string pre = "stage." + std::to_string(i + 1) + ".";
    const StageSpec& s = stages[i];
    kv(pre + "name", s.name);
    kv(pre + "task", to_string(s.task));
    kv(pre + "corpus", s.corpus);
    kv(pre + "iterations", std::to_string(s.iterations));
    if (!s.eval_corpora.empty()) {
      std::string evals;
      for (const auto& [name, path] : s.eval_corpora) {
        if (!evals.empty()) evals += ",";
        evals += name + ":" + path;
      }
      kv(pre + "eval", evals);
    }
    kv(pre + "rlo.enabled", s.rlo.enabled ? "true" : "false");
    kv(pre + "rlo.beta", format_double(s.rlo.beta));
    kv(pre + "rlo.max_iter", std::to_string(s.rlo.max_iter));
    kv(pre + "rlo.threshold_mode", to_string(s.rlo.threshold_mode));
    kv(pre + "rlo.stat_source", to_string(s.rlo.stat_source));
    kv(pre + "rlo.iter_scope", to_string(s.rlo.iter_scope));
    kv(pre + "rlo.target", s.rlo.target);
  }
  return out;
}

}  // namespace pllm
