#include "structmark/config.hpp"

#include <fstream>
#include <sstream>

#include "structmark/common.hpp"

namespace structmark::config {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig default_config() {
  RunConfig c;
  c.genmodel.epochs = 30;
  c.config_hash = hash_of_config(c);
  return c;
}

namespace {

ordered_json trunk_json(const net::TrunkConfig& t) {
  ordered_json j;
  j["width"] = t.width;
  j["blocks"] = t.blocks;
  j["heads"] = t.heads;
  j["mlp_hidden"] = t.mlp_hidden;
  j["k_neighbors"] = 2 * t.features.k_half;
  return j;
}

void trunk_from_json(const json& j, net::TrunkConfig& t) {
  t.width = j.at("width").get<int>();
  t.blocks = j.at("blocks").get<int>();
  t.heads = j.at("heads").get<int>();
  t.mlp_hidden = j.at("mlp_hidden").get<int>();
  const int k = j.at("k_neighbors").get<int>();
  if (k < 2) throw std::invalid_argument("config: k_neighbors must be >= 2");
  t.features.k_half = k / 2;
}

void reject_unknown_keys(const json& user, const json& schema,
                         const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    if (!schema.contains(key))
      throw std::invalid_argument("config: unknown key '" + prefix + key + "'");
    if (value.is_object() && schema.at(key).is_object())
      reject_unknown_keys(value, schema.at(key), prefix + key + ".");
  }
}

json merged(const json& defaults, const json& user) {
  json out = defaults;
  out.merge_patch(user);
  return out;
}

}  // namespace

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  {
    ordered_json b;
    b["n_structures"] = c.corpus.n_structures;
    b["min_len"] = c.corpus.min_len;
    b["max_len"] = c.corpus.max_len;
    b["topology"] = structio::topology_name(c.corpus.topology);
    b["train_fraction"] = c.corpus.train_fraction;
    b["val_fraction"] = c.corpus.val_fraction;
    j["corpus"] = std::move(b);
  }
  {
    ordered_json b;
    b["code_len"] = c.codec.code_len;
    b["gamma"] = c.codec.gamma;
    b["epochs"] = c.codec.epochs;
    b["lr"] = c.codec.adam.lr;
    b["max_batch"] = c.codec.max_batch;
    b["delta_max"] = c.codec.delta_max;
    b["aug_identity_prob"] = c.codec.aug_identity_prob;
    b["trunk"] = trunk_json(c.codec.trunk);
    j["codec"] = std::move(b);
  }
  {
    ordered_json b;
    b["T"] = c.genmodel.T;
    b["beta_start"] = c.genmodel.beta_start;
    b["beta_end"] = c.genmodel.beta_end;
    b["coord_scale"] = c.genmodel.coord_scale;
    b["time_dim"] = c.genmodel.time_dim;
    b["epochs"] = c.genmodel.epochs;
    b["lr"] = c.genmodel.adam.lr;
    b["max_batch"] = c.genmodel.max_batch;
    b["trunk"] = trunk_json(c.genmodel.trunk);
    j["genmodel"] = std::move(b);
  }
  {
    ordered_json b;
    b["rank"] = c.waterlora.rank;
    b["alpha"] = c.waterlora.alpha;
    j["waterlora"] = std::move(b);
  }
  {
    ordered_json b;
    b["eta"] = c.finetune.eta;
    b["epochs"] = c.finetune.epochs;
    b["lr"] = c.finetune.adam.lr;
    b["max_batch"] = c.finetune.max_batch;
    b["consistency_mode"] = tune::consistency_mode_name(c.finetune.consistency_mode);
    b["eval_samples"] = c.finetune.eval_samples;
    b["eval_len"] = c.finetune.eval_len;
    j["finetune"] = std::move(b);
  }
  {
    ordered_json b;
    b["noise_sigma"] = c.attacks.noise_sigma;
    b["crop_keep"] = c.attacks.crop_keep;
    b["finetune_steps"] = c.attacks.finetune_steps;
    b["finetune_lr"] = c.attacks.finetune_lr;
    j["attacks"] = std::move(b);
  }
  {
    ordered_json b;
    b["n_samples"] = c.eval.n_samples;
    b["sample_len"] = c.eval.sample_len;
    b["ident_users"] = c.eval.ident_users;
    b["ident_probes"] = c.eval.ident_probes;
    b["ident_p_bit_error"] = c.eval.ident_p_bit_error;
    j["eval"] = std::move(b);
  }
  return j;
}

std::string hash_of_config(const RunConfig& cfg) {
  // canonical form: sorted keys, no whitespace
  const json plain = json::parse(config_to_json(cfg).dump());
  return sha256_hex(plain.dump());
}

RunConfig parse_config(const json& user) {
  RunConfig defaults_cfg;
  defaults_cfg.genmodel.epochs = 30;
  const json schema = json::parse(config_to_json(defaults_cfg).dump());
  reject_unknown_keys(user, schema, "");
  const json j = merged(schema, user);

  RunConfig c;
  {
    const auto& b = j.at("corpus");
    c.corpus.n_structures = b.at("n_structures").get<int>();
    c.corpus.min_len = b.at("min_len").get<int>();
    c.corpus.max_len = b.at("max_len").get<int>();
    c.corpus.topology = structio::topology_from_name(b.at("topology").get<std::string>());
    c.corpus.train_fraction = b.at("train_fraction").get<double>();
    c.corpus.val_fraction = b.at("val_fraction").get<double>();
  }
  {
    const auto& b = j.at("codec");
    c.codec.code_len = b.at("code_len").get<int>();
    if (!WatermarkCode::supported_length(static_cast<size_t>(c.codec.code_len)))
      throw std::invalid_argument("config: codec.code_len must be 4, 8, 16 or 32");
    c.codec.gamma = b.at("gamma").get<double>();
    c.codec.epochs = b.at("epochs").get<int>();
    c.codec.adam.lr = b.at("lr").get<double>();
    c.codec.max_batch = b.at("max_batch").get<int>();
    c.codec.delta_max = b.at("delta_max").get<double>();
    c.codec.aug_identity_prob = b.at("aug_identity_prob").get<double>();
    trunk_from_json(b.at("trunk"), c.codec.trunk);
  }
  {
    const auto& b = j.at("genmodel");
    c.genmodel.T = b.at("T").get<int>();
    c.genmodel.beta_start = b.at("beta_start").get<double>();
    c.genmodel.beta_end = b.at("beta_end").get<double>();
    c.genmodel.coord_scale = b.at("coord_scale").get<double>();
    c.genmodel.time_dim = b.at("time_dim").get<int>();
    c.genmodel.epochs = b.at("epochs").get<int>();
    c.genmodel.adam.lr = b.at("lr").get<double>();
    c.genmodel.max_batch = b.at("max_batch").get<int>();
    trunk_from_json(b.at("trunk"), c.genmodel.trunk);
  }
  {
    const auto& b = j.at("waterlora");
    c.waterlora.rank = b.at("rank").get<int>();
    c.waterlora.alpha = b.at("alpha").get<double>();
  }
  {
    const auto& b = j.at("finetune");
    c.finetune.eta = b.at("eta").get<double>();
    c.finetune.epochs = b.at("epochs").get<int>();
    c.finetune.adam.lr = b.at("lr").get<double>();
    c.finetune.max_batch = b.at("max_batch").get<int>();
    const auto mode = b.at("consistency_mode").get<std::string>();
    if (mode == "same_argument")
      c.finetune.consistency_mode = tune::FinetuneConfig::ConsistencyMode::kSameArgument;
    else if (mode == "paper_literal")
      c.finetune.consistency_mode = tune::FinetuneConfig::ConsistencyMode::kPaperLiteral;
    else
      throw std::invalid_argument("config: unknown finetune.consistency_mode '" + mode + "'");
    c.finetune.eval_samples = b.at("eval_samples").get<int>();
    c.finetune.eval_len = b.at("eval_len").get<int>();
    c.finetune.rank = c.waterlora.rank;
    c.finetune.alpha = c.waterlora.alpha;
  }
  {
    const auto& b = j.at("attacks");
    c.attacks.noise_sigma = b.at("noise_sigma").get<double>();
    c.attacks.crop_keep = b.at("crop_keep").get<double>();
    c.attacks.finetune_steps = b.at("finetune_steps").get<int>();
    c.attacks.finetune_lr = b.at("finetune_lr").get<double>();
  }
  {
    const auto& b = j.at("eval");
    c.eval.n_samples = b.at("n_samples").get<int>();
    c.eval.sample_len = b.at("sample_len").get<int>();
    c.eval.ident_users = b.at("ident_users").get<size_t>();
    c.eval.ident_probes = b.at("ident_probes").get<int>();
    c.eval.ident_p_bit_error = b.at("ident_p_bit_error").get<double>();
  }
  c.config_hash = hash_of_config(c);
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace structmark::config
