#pragma once

#include <string>
#include <vector>

#include "structmark/codec.hpp"
#include "structmark/genmodel.hpp"
#include "structmark/waterlora.hpp"

namespace structmark::tune {

struct FinetuneConfig {
  double eta = 2.0;
  int epochs = 10;
  int max_batch = 64;
  int rank = 16;
  double alpha = 1.0;
  net::AdamConfig adam;
  uint64_t seed = 0;
  // The consistency target is always eps_ref(x_t); the literal mode feeds the
  // fine-tuned model x_hat instead of x_t on the left side.
  enum class ConsistencyMode { kSameArgument, kPaperLiteral };
  ConsistencyMode consistency_mode = ConsistencyMode::kSameArgument;
  int eval_samples = 8;  // per-epoch sampling probes for the log
  int eval_len = 56;
};

const char* consistency_mode_name(FinetuneConfig::ConsistencyMode m);

struct FinetuneModels {
  const gen::EpsNet* base = nullptr;       // frozen, enters tapes as constants
  const gen::EpsNet* reference = nullptr;  // frozen deep copy
  lora::AdapterSet* adapters = nullptr;    // trainable
  codec::DecoderNet* decoder = nullptr;    // trainable
  const gen::DiffusionSchedule* schedule = nullptr;
};

struct FinetuneItem {
  const structio::Structure* x0 = nullptr;
  WatermarkCode code;
  int t = 1;
  net::Tensor noise;  // [n x 3]
};

struct LossParts {
  double consistency = 0.0;
  double retrieval = 0.0;
  double total = 0.0;  // mean of L_c + eta * w(t) * L_m over the batch
};

// One optimization objective evaluation over a batch; gradients reach the
// WaterLoRA parameters and the decoder only (train=true accumulates them).
LossParts finetune_loss(const std::vector<FinetuneItem>& batch,
                        const FinetuneModels& models, const FinetuneConfig& cfg,
                        bool train);

// retrieval-loss time weight (T - t) / T
double retrieval_weight(int t, int T);

struct FinetuneEpochLog {
  int epoch = 0;
  double consistency_loss = 0.0;
  double retrieval_loss = 0.0;
  double eta = 0.0;
  std::string weight_mode;
  double sample_bitacc = 0.0;
  double sample_rmsd = 0.0;
};

struct FinetuneResult {
  lora::AdapterSet adapters;
  gen::EpsNet reference;  // the frozen copy used during the run
  std::vector<FinetuneEpochLog> log;
};

// Stage-2 run: trains adapters + decoder; base and reference stay untouched.
FinetuneResult run_finetune(const gen::EpsNet& base, codec::DecoderNet& decoder,
                            const structio::Dataset& d,
                            const gen::DiffusionSchedule& sched,
                            const FinetuneConfig& cfg);

std::string finetune_log_jsonl(const std::vector<FinetuneEpochLog>& log);

}  // namespace structmark::tune
