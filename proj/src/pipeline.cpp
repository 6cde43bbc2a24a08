#include "structmark/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace structmark::pipeline {

codec::CodecConfig codec_config(const config::RunConfig& cfg) {
  codec::CodecConfig cc;
  cc.code_len = cfg.codec.code_len;
  cc.delta_max = cfg.codec.delta_max;
  cc.trunk = cfg.codec.trunk;
  return cc;
}

gen::GenConfig gen_config(const config::RunConfig& cfg) { return cfg.genmodel; }

Bundle init_bundle(const config::RunConfig& cfg, uint64_t seed) {
  Bundle b;
  b.cfg = cfg;
  const auto cc = codec_config(cfg);
  b.encoder = codec::EncoderNet(cc, hash_mix({seed, 0x11ULL}));
  b.decoder = codec::DecoderNet(cc, hash_mix({seed, 0x22ULL}));
  b.base = gen::EpsNet(gen_config(cfg), hash_mix({seed, 0xb45eULL}));
  b.schedule = gen::DiffusionSchedule::linear(cfg.genmodel.T, cfg.genmodel.beta_start,
                                              cfg.genmodel.beta_end);
  b.adapters = lora::make_adapters(b.base.linear_layers(), cfg.waterlora.rank,
                                   cfg.codec.code_len, cfg.waterlora.alpha,
                                   hash_mix({seed, 0x10adULL}));
  b.has_adapters = false;
  return b;
}

ckpt::Checkpoint make_checkpoint(const Bundle& b, uint64_t seed) {
  ckpt::Checkpoint c;
  c.created = ckpt::default_created_stamp();
  c.config_hash = b.cfg.config_hash;
  c.seed = seed;
  c.config = config::config_to_json(b.cfg);

  auto collect_const = [](auto params) {
    std::vector<const net::Parameter*> out;
    for (auto* p : params) out.push_back(p);
    return out;
  };
  c.add_namespace("base", collect_const(const_cast<gen::EpsNet&>(b.base).params()));
  c.add_namespace("encoder",
                  collect_const(const_cast<codec::EncoderNet&>(b.encoder).params()));
  c.add_namespace("decoder",
                  collect_const(const_cast<codec::DecoderNet&>(b.decoder).params()));
  if (b.has_adapters)
    c.add_namespace("waterlora",
                    collect_const(const_cast<lora::AdapterSet&>(b.adapters).params()));
  return c;
}

Bundle bundle_from_checkpoint(const ckpt::Checkpoint& c) {
  const config::RunConfig cfg = config::parse_config(nlohmann::json::parse(c.config.dump()));
  Bundle b = init_bundle(cfg, 0);
  c.restore_namespace("base", b.base.params());
  c.restore_namespace("encoder", b.encoder.params());
  c.restore_namespace("decoder", b.decoder.params());
  if (c.has_namespace("waterlora")) {
    c.restore_namespace("waterlora", b.adapters.params());
    b.has_adapters = true;
  }
  return b;
}

structio::Dataset load_corpus(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw Error("cannot open corpus manifest " + manifest_path);
  std::stringstream ss;
  ss << f.rdbuf();
  const auto dir = std::filesystem::path(manifest_path).parent_path().string();
  return structio::dataset_from_manifest(ss.str(), dir.empty() ? "." : dir);
}

void save_corpus(const structio::Dataset& d, const std::string& manifest_path) {
  std::ofstream f(manifest_path);
  if (!f) throw Error("cannot write corpus manifest " + manifest_path);
  f << structio::manifest_to_json(d);
}

}  // namespace structmark::pipeline
