#include "structmark/finetune.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "structmark/evalkit.hpp"

namespace structmark::tune {

using net::LayerMode;
using net::Tape;
using net::Tensor;

const char* consistency_mode_name(FinetuneConfig::ConsistencyMode m) {
  return m == FinetuneConfig::ConsistencyMode::kSameArgument ? "same_argument"
                                                             : "paper_literal";
}

double retrieval_weight(int t, int T) {
  return static_cast<double>(T - t) / static_cast<double>(T);
}

namespace {

Tensor scaled_centered_coords(const structio::Structure& s, double scale) {
  Tensor x = net::coords_tensor(s);
  gen::center_rows(x);
  for (double& v : x.data) v /= scale;
  return x;
}

Tensor code_targets(const WatermarkCode& m) {
  Tensor t({static_cast<int>(m.size())});
  t.data = m.as01();
  return t;
}

}  // namespace

LossParts finetune_loss(const std::vector<FinetuneItem>& batch,
                        const FinetuneModels& models, const FinetuneConfig& cfg,
                        bool train) {
  if (batch.empty()) throw std::invalid_argument("finetune_loss: empty batch");
  const auto& sched = *models.schedule;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossParts parts;

  for (const auto& item : batch) {
    const Tensor x0 = scaled_centered_coords(*item.x0, models.base->cfg.coord_scale);
    const Tensor x_t = gen::forward_noise(x0, item.t, item.noise, sched);
    const Tensor eps_ref = models.reference->predict(x_t, item.t);

    lora::LoraContext ctx;
    ctx.adapters = models.adapters;
    ctx.code = item.code;
    ctx.train_adapters = train;
    const LayerMode wrapped_mode{/*trainable=*/false, &ctx};
    const LayerMode decoder_mode{/*trainable=*/train, nullptr};

    Tape t;
    const Tape::Id xt_id = t.constant(x_t);
    const Tape::Id eps_hat = models.base->forward(t, xt_id, item.t, wrapped_mode);

    const double a = std::sqrt(sched.abar(item.t));
    const double b = std::sqrt(1.0 - sched.abar(item.t));
    const Tape::Id xhat = t.scale(t.add_scaled(xt_id, eps_hat, -b), 1.0 / a);

    Tape::Id lc;
    if (cfg.consistency_mode == FinetuneConfig::ConsistencyMode::kSameArgument) {
      lc = t.mse_rows(eps_hat, t.constant(eps_ref));
    } else {
      const Tape::Id eps_at_xhat = models.base->forward(t, xhat, item.t, wrapped_mode);
      lc = t.mse_rows(eps_at_xhat, t.constant(eps_ref));
    }

    const Tape::Id xhat_angstrom = t.scale(xhat, models.base->cfg.coord_scale);
    const Tape::Id logits =
        models.decoder->forward_logits(t, xhat_angstrom, decoder_mode);
    const Tape::Id lm = t.bce_with_logits(logits, code_targets(item.code));

    const double w = retrieval_weight(item.t, sched.T);
    const Tape::Id total =
        t.weighted_sum({{lc, inv_b}, {lm, cfg.eta * w * inv_b}});
    if (train) t.backward(total);

    parts.consistency += inv_b * t.val(lc).data[0];
    parts.retrieval += inv_b * t.val(lm).data[0];
    parts.total += t.val(total).data[0];
  }
  return parts;
}

FinetuneResult run_finetune(const gen::EpsNet& base, codec::DecoderNet& decoder,
                            const structio::Dataset& d,
                            const gen::DiffusionSchedule& sched,
                            const FinetuneConfig& cfg) {
  FinetuneResult res;
  res.reference = base;  // frozen deep copy taken before fine-tuning
  res.adapters = lora::make_adapters(const_cast<gen::EpsNet&>(base).linear_layers(),
                                     cfg.rank, static_cast<int>(decoder.cfg.code_len),
                                     cfg.alpha, hash_mix({cfg.seed, 0x10adULL}));

  FinetuneModels models;
  models.base = &base;
  models.reference = &res.reference;
  models.adapters = &res.adapters;
  models.decoder = &decoder;
  models.schedule = &sched;

  std::vector<net::Parameter*> params = res.adapters.params();
  for (auto* p : decoder.params()) params.push_back(p);
  net::Adam adam(params, cfg.adam);

  const auto batches = structio::batch_by_length(d, cfg.max_batch, structio::Split::kTrain);
  const structio::DatasetEntry* base_ptr = d.entries.data();
  const int code_len = decoder.cfg.code_len;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = Rng(hash_mix({cfg.seed, 0xf7b0ULL, static_cast<uint64_t>(epoch)}))
                     .permutation(static_cast<uint32_t>(batches.size()));
    double ep_lc = 0.0, ep_lm = 0.0;
    size_t n_items = 0;

    for (const uint32_t bi : order) {
      const auto& batch = batches[bi];
      std::vector<FinetuneItem> items;
      items.reserve(batch.items.size());
      for (const auto* entry : batch.items) {
        const uint64_t item_index = static_cast<uint64_t>(entry - base_ptr);
        Rng rng(hash_mix({cfg.seed, static_cast<uint64_t>(epoch), item_index}));
        FinetuneItem item;
        item.x0 = &entry->structure;
        item.code = WatermarkCode::random(code_len, rng);
        item.t = 1 + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(sched.T)));
        const int n = static_cast<int>(entry->structure.size());
        item.noise = Tensor({n, 3});
        for (double& v : item.noise.data) v = rng.normal();
        gen::center_rows(item.noise);
        items.push_back(std::move(item));
      }
      const LossParts parts = finetune_loss(items, models, cfg, /*train=*/true);
      adam.step();
      ep_lc += parts.consistency * items.size();
      ep_lm += parts.retrieval * items.size();
      n_items += items.size();
    }

    FinetuneEpochLog log;
    log.epoch = epoch;
    log.consistency_loss = n_items ? ep_lc / static_cast<double>(n_items) : 0.0;
    log.retrieval_loss = n_items ? ep_lm / static_cast<double>(n_items) : 0.0;
    log.eta = cfg.eta;
    log.weight_mode = "linear_decreasing";

    const auto probe = evalkit::sampled_bitacc(
        base, res.adapters, decoder, sched, cfg.eval_samples, cfg.eval_len,
        hash_mix({cfg.seed, 0x9ea5ULL, static_cast<uint64_t>(epoch)}));
    log.sample_bitacc = probe;
    log.sample_rmsd = evalkit::consistency_rmsd(
        base, res.adapters, sched, cfg.eval_samples, cfg.eval_len,
        hash_mix({cfg.seed, 0xc0deULL, static_cast<uint64_t>(epoch)}), code_len);
    res.log.push_back(log);
  }
  return res;
}

std::string finetune_log_jsonl(const std::vector<FinetuneEpochLog>& log) {
  std::ostringstream os;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["consistency_loss"] = e.consistency_loss;
    j["retrieval_loss"] = e.retrieval_loss;
    j["eta"] = e.eta;
    j["weight_mode"] = e.weight_mode;
    j["sample_bitacc"] = e.sample_bitacc;
    j["sample_rmsd"] = e.sample_rmsd;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace structmark::tune
