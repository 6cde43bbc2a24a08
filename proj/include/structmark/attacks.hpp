#pragma once

#include <optional>
#include <string>
#include <vector>

#include "structmark/codec.hpp"
#include "structmark/config.hpp"
#include "structmark/evalkit.hpp"
#include "structmark/genmodel.hpp"
#include "structmark/waterlora.hpp"

namespace structmark::attacks {

struct AttackSpec {
  enum class Kind { kNone, kCrop, kRigid, kNoise, kFinetuneErase, kMultiMessage };
  Kind kind = Kind::kNone;
  double keep = 0.5;   // crop
  double sigma = 0.2;  // noise, A
  int steps = 0;       // finetune erase: Adam steps; 0 selects one epoch
  std::optional<WatermarkCode> second_code;  // multi-message; drawn when absent
  uint64_t seed = 0;
};

const char* attack_condition(AttackSpec::Kind kind);

// Structure-level attacks; multi-message layers a second watermark with the
// frozen Stage-1 encoder.
structio::Structure attack_structure(const structio::Structure& s,
                                     const AttackSpec& spec,
                                     const codec::EncoderNet* stage1_encoder);

// Adaptive erase: continue epsilon-matching training of the WaterLoRA
// parameters on clean data with no watermark loss. Base stays frozen.
void attack_model_finetune(const gen::EpsNet& base, lora::AdapterSet& adapters,
                           const structio::Dataset& clean,
                           const gen::DiffusionSchedule& sched, int steps,
                           const net::AdamConfig& adam_cfg, int max_batch,
                           uint64_t seed);

struct AttackRow {
  std::string condition;
  double bitacc = 0.0;
  int n_samples = 0;
};

std::vector<AttackRow> run_attack_suite(
    const gen::EpsNet& base, lora::AdapterSet& adapters,
    const codec::DecoderNet& decoder, const codec::EncoderNet& encoder,
    const gen::DiffusionSchedule& sched, const structio::Dataset& clean,
    const std::vector<AttackSpec>& specs, int n_samples, int sample_len,
    uint64_t seed, const config::AttacksConfig& acfg);

// default Table-style suite: none, crop, rigid, noise, finetune, multi-message
std::vector<AttackSpec> default_suite(const config::AttacksConfig& acfg, uint64_t seed);

}  // namespace structmark::attacks
