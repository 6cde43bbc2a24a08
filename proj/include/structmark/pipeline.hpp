#pragma once

#include <string>

#include "structmark/checkpoint.hpp"
#include "structmark/codec.hpp"
#include "structmark/config.hpp"
#include "structmark/genmodel.hpp"
#include "structmark/waterlora.hpp"

namespace structmark::pipeline {

// All trained state of one run. Checkpoint namespaces: encoder, decoder,
// base, waterlora (waterlora optional before Stage 2).
struct Bundle {
  config::RunConfig cfg;
  codec::EncoderNet encoder;
  codec::DecoderNet decoder;
  gen::EpsNet base;
  gen::DiffusionSchedule schedule;
  lora::AdapterSet adapters;
  bool has_adapters = false;
};

codec::CodecConfig codec_config(const config::RunConfig& cfg);
gen::GenConfig gen_config(const config::RunConfig& cfg);

// Freshly initialized bundle (weights as constructed, deterministic in seed).
Bundle init_bundle(const config::RunConfig& cfg, uint64_t seed);

ckpt::Checkpoint make_checkpoint(const Bundle& b, uint64_t seed);
Bundle bundle_from_checkpoint(const ckpt::Checkpoint& c);

structio::Dataset load_corpus(const std::string& manifest_path);
void save_corpus(const structio::Dataset& d, const std::string& manifest_path);

}  // namespace structmark::pipeline
