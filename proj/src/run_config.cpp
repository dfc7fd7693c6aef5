// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "imfa/errors.hpp"

namespace imfa {

using Json = nlohmann::json;

namespace {

template <typename T>
void read_field(const Json& j, const char* key, T& out, std::set<std::string>& seen) {
  auto it = j.find(key);
  if (it == j.end()) return;
  seen.insert(key);
  try {
    out = it->get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) throw ConfigError("unknown config field '" + where + it.key() + "'");
  }
}

}  // namespace

StageConfig RunConfig::effective_stage() const {
  StageConfig s = stage;
  if (iter_enc_only) s.mode = PipelineMode::kIterativeEncoding;
  if (disable_rep_keypoints) s.rep_keypoints = false;
  if (disable_ada_scale) s.ada_scale = false;
  if (disable_dynamic_ffn) s.dynamic_ffn = false;
  return s;
}

void RunConfig::validate() const {
  effective_stage().validate();
  const auto& o = optimizer;
  if (!(o.lr_backbone >= 0) || !(o.lr_main > 0)) throw ConfigError("learning rates must be non-negative (main positive)");
  if (!(o.weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (o.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (o.steps == 0) throw ConfigError("steps must be positive");
  if (!(o.clip_norm >= 0)) throw ConfigError("clip_norm must be non-negative");
  if (!(o.beta1 >= 0 && o.beta1 < 1 && o.beta2 >= 0 && o.beta2 < 1 && o.eps > 0)) {
    throw ConfigError("Adam betas must lie in [0, 1) and eps must be positive");
  }
}

Json to_json(const RunConfig& c) {
  const auto& s = c.stage;
  const auto& o = c.optimizer;
  return Json{
      {"num_stages", s.num_stages},
      {"queries", s.queries},
      {"sampling_ratio", s.sampling_ratio},
      {"keypoints", s.keypoints},
      {"scales", s.scales},
      {"heads", s.heads},
      {"d", s.d},
      {"classes", s.classes},
      {"mode", to_string(s.mode)},
      {"sampled_keys_only", s.sampled_keys_only},
      {"optimizer",
       {{"lr_backbone", o.lr_backbone},
        {"lr_main", o.lr_main},
        {"weight_decay", o.weight_decay},
        {"steps", o.steps},
        {"lr_drop_step", o.lr_drop_step},
        {"batch_size", o.batch_size},
        {"clip_norm", o.clip_norm},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"eps", o.eps}}},
      {"dataset", c.dataset},
      {"seed", c.seed},
      {"flip", c.flip},
      {"iter_enc_only", c.iter_enc_only},
      {"disable_rep_keypoints", c.disable_rep_keypoints},
      {"disable_ada_scale", c.disable_ada_scale},
      {"disable_dynamic_ffn", c.disable_dynamic_ffn},
  };
}

RunConfig run_config_from_json(const Json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  std::set<std::string> seen;
  auto& s = c.stage;
  read_field(j, "num_stages", s.num_stages, seen);
  read_field(j, "queries", s.queries, seen);
  read_field(j, "sampling_ratio", s.sampling_ratio, seen);
  read_field(j, "keypoints", s.keypoints, seen);
  read_field(j, "scales", s.scales, seen);
  read_field(j, "heads", s.heads, seen);
  read_field(j, "d", s.d, seen);
  read_field(j, "classes", s.classes, seen);
  std::string mode = to_string(s.mode);
  read_field(j, "mode", mode, seen);
  s.mode = parse_pipeline_mode(mode);
  read_field(j, "sampled_keys_only", s.sampled_keys_only, seen);
  read_field(j, "dataset", c.dataset, seen);
  read_field(j, "seed", c.seed, seen);
  read_field(j, "flip", c.flip, seen);
  read_field(j, "iter_enc_only", c.iter_enc_only, seen);
  read_field(j, "disable_rep_keypoints", c.disable_rep_keypoints, seen);
  read_field(j, "disable_ada_scale", c.disable_ada_scale, seen);
  read_field(j, "disable_dynamic_ffn", c.disable_dynamic_ffn, seen);
  if (auto it = j.find("optimizer"); it != j.end()) {
    seen.insert("optimizer");
    if (!it->is_object()) throw ConfigError("config field 'optimizer' must be an object");
    std::set<std::string> oseen;
    auto& o = c.optimizer;
    read_field(*it, "lr_backbone", o.lr_backbone, oseen);
    read_field(*it, "lr_main", o.lr_main, oseen);
    read_field(*it, "weight_decay", o.weight_decay, oseen);
    read_field(*it, "steps", o.steps, oseen);
    read_field(*it, "lr_drop_step", o.lr_drop_step, oseen);
    read_field(*it, "batch_size", o.batch_size, oseen);
    read_field(*it, "clip_norm", o.clip_norm, oseen);
    read_field(*it, "beta1", o.beta1, oseen);
    read_field(*it, "beta2", o.beta2, oseen);
    read_field(*it, "eps", o.eps, oseen);
    reject_unknown(*it, oseen, "optimizer.");
  }
  reject_unknown(j, seen, "");
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

std::size_t configured_threads() {
  const char* env = std::getenv("IMFA_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw ConfigError(std::string("IMFA_THREADS must be 1..1024, got '") + env + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace imfa
