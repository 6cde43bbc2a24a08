#pragma once

#include <string>

#include <json.hpp>

#include "structmark/codec.hpp"
#include "structmark/finetune.hpp"
#include "structmark/genmodel.hpp"
#include "structmark/struct_io.hpp"

namespace structmark::config {

struct AttacksConfig {
  double noise_sigma = 0.2;
  double crop_keep = 0.5;
  int finetune_steps = 0;  // 0 selects one epoch's worth of Adam steps
  double finetune_lr = 1e-4;
};

struct EvalConfig {
  int n_samples = 128;
  int sample_len = 56;
  size_t ident_users = 1000000;
  int ident_probes = 1000;
  double ident_p_bit_error = 0.02;
};

struct WaterLoraConfig {
  int rank = 16;
  double alpha = 1.0;
};

struct RunConfig {
  structio::CorpusConfig corpus;
  codec::PretrainConfig codec;
  gen::GenConfig genmodel;
  WaterLoraConfig waterlora;
  tune::FinetuneConfig finetune;
  AttacksConfig attacks;
  EvalConfig eval;
  std::string config_hash;  // of the canonical merged JSON
};

RunConfig default_config();

// Merges user JSON over defaults. Unknown keys are rejected by name.
RunConfig parse_config(const nlohmann::json& user);
RunConfig load_config_file(const std::string& path);

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
std::string hash_of_config(const RunConfig& cfg);

}  // namespace structmark::config
