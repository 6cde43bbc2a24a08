#pragma once

#include <optional>
#include <string>
#include <vector>

#include "structmark/codec.hpp"
#include "structmark/genmodel.hpp"
#include "structmark/waterlora.hpp"

namespace structmark::evalkit {

// fraction of bits where sign(logit) matches the bit (logit > 0 reads as 1)
double bit_accuracy(const net::Tensor& logits, const WatermarkCode& m);

// exact tail P(Bin(l, 1/2) >= k) via integer binomial sums; 0 <= k <= l <= 64
double binomial_pvalue(int k, int l);

// smallest bit-accuracy threshold whose analytic false-positive rate is <= 1e-3
double default_tau(int l);

struct DetectionResult {
  int matched_bits = 0;
  int total_bits = 0;
  double bitacc = 0.0;
  double p_value = 1.0;
  bool decision = false;
};

DetectionResult detect(const structio::Structure& s, const WatermarkCode& owner,
                       const codec::DecoderNet& decoder,
                       std::optional<double> tau = std::nullopt);

// decision for already-decoded hard bits (used by calibration harnesses)
DetectionResult detect_bits(const WatermarkCode& decoded, const WatermarkCode& owner,
                            std::optional<double> tau = std::nullopt);

struct UserDatabase {
  int code_len = 32;
  std::vector<uint32_t> user_ids;
  std::vector<uint64_t> codes;  // bit i of entry = code bit i

  // N distinct uniform codes, user ids 0..N-1; throws Error when N >= 2^l
  static UserDatabase random(size_t n, int l, uint64_t seed);

  size_t size() const { return user_ids.size(); }
  std::string to_json() const;
  static UserDatabase from_json(const std::string& text);
};

// nearest code by Hamming distance; ties resolved to the lowest user_id
uint32_t identify_code(uint64_t probe, const UserDatabase& db);
uint32_t identify(const structio::Structure& s, const UserDatabase& db,
                  const codec::DecoderNet& decoder);

// protocol oracle: N random users, probe = random member with per-bit flips
double simulate_identification(size_t n_users, int l, double p_bit_error,
                               int trials, uint64_t seed);

// --- sampling probes over a watermarked generator ---

double sampled_bitacc(const gen::EpsNet& base, lora::AdapterSet& adapters,
                      const codec::DecoderNet& decoder,
                      const gen::DiffusionSchedule& sched, int n_samples, int len,
                      uint64_t seed);

// mean Kabsch RMSD between watermarked and reference samples at shared seeds
double consistency_rmsd(const gen::EpsNet& base, lora::AdapterSet& adapters,
                        const gen::DiffusionSchedule& sched, int n_samples, int len,
                        uint64_t seed, int code_len);

// spec-level variant with one fixed context over an explicit seed list
double consistency_rmsd_ctx(const gen::EpsNet& base, lora::LoraContext& ctx,
                            const gen::DiffusionSchedule& sched,
                            const std::vector<uint64_t>& seeds, int len);

// --- report rows ---

struct EvalRow {
  std::string run_id;
  std::string model_tag;
  int l = 0;
  std::string condition;
  std::optional<double> bitacc;
  std::optional<double> rmsd;
  std::optional<double> detection_fpr;
  std::optional<double> ident_accuracy;
  int n_samples = 0;
  uint64_t seed = 0;
};

// CSV with the exact header
// run_id,model_tag,l,condition,bitacc,rmsd,detection_fpr,ident_accuracy,n_samples,seed
std::string eval_report_csv(const std::vector<EvalRow>& rows);

}  // namespace structmark::evalkit
