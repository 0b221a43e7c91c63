#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace bctn {

struct ModelConfig {
  int h = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int J = 2;  // reasoning blocks per thinker
  int max_len = 64;
  float dropout = 0.1f;
};

struct FusionConfig {
  float alpha = 0.8f;
  float beta = 0.2f;
};

struct TrainSection {
  float lr = 1e-3f;
  int batch = 32;
  int epochs = 30;
  uint64_t seed = 1;
  bool freeze_reverse = true;
};

struct DecodeConfig {
  int max_len = 20;
  int beam = 1;  // 1 == greedy
};

struct AblateConfig {
  bool gate_enabled = true;
  bool reverse_enabled = true;
};

struct RunConfig {
  ModelConfig model;
  FusionConfig fusion;
  TrainSection train;
  DecodeConfig decode;
  AblateConfig ablate;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);

  // Applies one "section.key=value" override (CLI flags win over file).
  void apply_override(const std::string& assignment);
};

}  // namespace bctn
