#include "structmark/attacks.hpp"

#include <cmath>
#include <stdexcept>

namespace structmark::attacks {

using net::LayerMode;
using net::Tape;
using net::Tensor;

const char* attack_condition(AttackSpec::Kind kind) {
  switch (kind) {
    case AttackSpec::Kind::kNone: return "no_attack";
    case AttackSpec::Kind::kCrop: return "crop";
    case AttackSpec::Kind::kRigid: return "rigid";
    case AttackSpec::Kind::kNoise: return "noise";
    case AttackSpec::Kind::kFinetuneErase: return "finetune";
    case AttackSpec::Kind::kMultiMessage: return "multi_message";
  }
  return "unknown";
}

structio::Structure attack_structure(const structio::Structure& s,
                                     const AttackSpec& spec,
                                     const codec::EncoderNet* stage1_encoder) {
  switch (spec.kind) {
    case AttackSpec::Kind::kNone:
      return s;
    case AttackSpec::Kind::kCrop: {
      codec::AugmentationSpec a;
      a.kind = codec::AugmentationSpec::Kind::kCrop;
      a.keep_fraction = spec.keep;
      a.seed = spec.seed;
      return codec::augment(s, a);
    }
    case AttackSpec::Kind::kRigid: {
      codec::AugmentationSpec a;
      a.kind = codec::AugmentationSpec::Kind::kRigid;
      a.seed = spec.seed;
      return codec::augment(s, a);
    }
    case AttackSpec::Kind::kNoise: {
      codec::AugmentationSpec a;
      a.kind = codec::AugmentationSpec::Kind::kGaussianNoise;
      a.sigma = spec.sigma;
      a.seed = spec.seed;
      return codec::augment(s, a);
    }
    case AttackSpec::Kind::kMultiMessage: {
      if (!stage1_encoder)
        throw std::invalid_argument("multi-message attack needs the Stage-1 encoder");
      WatermarkCode second;
      if (spec.second_code) {
        second = *spec.second_code;
      } else {
        Rng rng(hash_mix({0x2a3cULL, spec.seed}));
        second = WatermarkCode::random(stage1_encoder->cfg.code_len, rng);
      }
      return stage1_encoder->encode(s, second);
    }
    case AttackSpec::Kind::kFinetuneErase:
      throw std::invalid_argument("finetune erase is a model-level attack");
  }
  return s;
}

void attack_model_finetune(const gen::EpsNet& base, lora::AdapterSet& adapters,
                           const structio::Dataset& clean,
                           const gen::DiffusionSchedule& sched, int steps,
                           const net::AdamConfig& adam_cfg, int max_batch,
                           uint64_t seed) {
  if (steps <= 0) return;  // steps = 0: model unchanged
  net::Adam adam(adapters.params(), adam_cfg);
  const auto batches = structio::batch_by_length(clean, max_batch, structio::Split::kTrain);
  if (batches.empty()) throw std::invalid_argument("attack: empty clean corpus");
  const int code_len = adapters.code_len;

  int done = 0;
  for (int pass = 0; done < steps; ++pass) {
    auto order = Rng(hash_mix({seed, 0xa77aULL, static_cast<uint64_t>(pass)}))
                     .permutation(static_cast<uint32_t>(batches.size()));
    for (const uint32_t bi : order) {
      if (done >= steps) break;
      const auto& batch = batches[bi];
      const double inv_b = 1.0 / static_cast<double>(batch.items.size());
      for (size_t ii = 0; ii < batch.items.size(); ++ii) {
        const auto* entry = batch.items[ii];
        Rng rng(hash_mix({seed, static_cast<uint64_t>(done),
                          static_cast<uint64_t>(ii)}));
        // the attacker exercises the shipped mechanism with its own codes
        lora::LoraContext ctx;
        ctx.adapters = &adapters;
        ctx.code = WatermarkCode::random(code_len, rng);
        ctx.train_adapters = true;

        Tensor x0 = net::coords_tensor(entry->structure);
        gen::center_rows(x0);
        for (double& v : x0.data) v /= base.cfg.coord_scale;
        const int n = static_cast<int>(entry->structure.size());
        const int t_step = 1 + static_cast<int>(rng.uniform_int(
                                   static_cast<uint32_t>(sched.T)));
        Tensor noise({n, 3});
        for (double& v : noise.data) v = rng.normal();
        gen::center_rows(noise);
        const Tensor x_t = gen::forward_noise(x0, t_step, noise, sched);

        Tape t;
        const LayerMode mode{/*trainable=*/false, &ctx};
        const Tape::Id eps = base.forward(t, t.constant(x_t), t_step, mode);
        const Tape::Id loss = t.mse_rows(eps, t.constant(noise));
        const Tape::Id total = t.weighted_sum({{loss, inv_b}});
        t.backward(total);
      }
      adam.step();
      ++done;
    }
  }
}

std::vector<AttackSpec> default_suite(const config::AttacksConfig& acfg, uint64_t seed) {
  std::vector<AttackSpec> specs(6);
  specs[0].kind = AttackSpec::Kind::kNone;
  specs[1].kind = AttackSpec::Kind::kCrop;
  specs[1].keep = acfg.crop_keep;
  specs[2].kind = AttackSpec::Kind::kRigid;
  specs[3].kind = AttackSpec::Kind::kNoise;
  specs[3].sigma = acfg.noise_sigma;
  specs[4].kind = AttackSpec::Kind::kFinetuneErase;
  specs[4].steps = acfg.finetune_steps;
  specs[5].kind = AttackSpec::Kind::kMultiMessage;
  for (size_t i = 0; i < specs.size(); ++i)
    specs[i].seed = hash_mix({seed, 0xa00dULL, static_cast<uint64_t>(i)});
  return specs;
}

std::vector<AttackRow> run_attack_suite(
    const gen::EpsNet& base, lora::AdapterSet& adapters,
    const codec::DecoderNet& decoder, const codec::EncoderNet& encoder,
    const gen::DiffusionSchedule& sched, const structio::Dataset& clean,
    const std::vector<AttackSpec>& specs, int n_samples, int sample_len,
    uint64_t seed, const config::AttacksConfig& acfg) {
  std::vector<AttackRow> rows;
  rows.reserve(specs.size());

  for (const auto& spec : specs) {
    AttackRow row;
    row.condition = attack_condition(spec.kind);
    row.n_samples = n_samples;

    if (spec.kind == AttackSpec::Kind::kFinetuneErase) {
      lora::AdapterSet attacked = adapters;  // attacker owns a copy
      int steps = spec.steps;
      if (steps <= 0) {
        const auto batches =
            structio::batch_by_length(clean, 64, structio::Split::kTrain);
        steps = static_cast<int>(batches.size());  // one epoch
      }
      net::AdamConfig acfg_adam;
      acfg_adam.lr = acfg.finetune_lr;
      attack_model_finetune(base, attacked, clean, sched, steps, acfg_adam, 64,
                            spec.seed);
      row.bitacc = evalkit::sampled_bitacc(base, attacked, decoder, sched,
                                           n_samples, sample_len, seed);
      rows.push_back(row);
      continue;
    }

    std::vector<double> accs(n_samples, 0.0);
    parallel_for(n_samples, [&](int i) {
      Rng rng(hash_mix({0xacc5ULL, seed, static_cast<uint64_t>(i)}));
      lora::LoraContext ctx;
      ctx.adapters = &adapters;
      ctx.code = WatermarkCode::random(decoder.cfg.code_len, rng);
      auto s = gen::sample(base, sched, sample_len, rng.next_u64(), &ctx);
      AttackSpec per_sample = spec;
      per_sample.seed = hash_mix({spec.seed, static_cast<uint64_t>(i)});
      if (spec.kind == AttackSpec::Kind::kMultiMessage && !per_sample.second_code) {
        // layered code must differ from the original
        Rng crng(hash_mix({0x5ec0ULL, per_sample.seed}));
        WatermarkCode second = WatermarkCode::random(decoder.cfg.code_len, crng);
        while (second == ctx.code)
          second = WatermarkCode::random(decoder.cfg.code_len, crng);
        per_sample.second_code = second;
      }
      const auto attacked = attack_structure(s, per_sample, &encoder);
      accs[i] = evalkit::bit_accuracy(decoder.decode(attacked), ctx.code);
    });
    double mean = 0.0;
    for (double a : accs) mean += a;
    row.bitacc = n_samples ? mean / n_samples : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace structmark::attacks
