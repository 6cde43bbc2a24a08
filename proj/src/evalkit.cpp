#include "structmark/evalkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace structmark::evalkit {

using net::Tensor;

double bit_accuracy(const Tensor& logits, const WatermarkCode& m) {
  if (logits.data.size() != m.size())
    throw std::invalid_argument("bit_accuracy: length mismatch");
  size_t hits = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    const bool pred = logits.data[i] > 0.0;
    hits += pred == (m.bits[i] != 0);
  }
  return static_cast<double>(hits) / static_cast<double>(m.size());
}

double binomial_pvalue(int k, int l) {
  if (l < 0 || l > 64 || k < 0 || k > l)
    throw std::invalid_argument("binomial_pvalue: need 0 <= k <= l <= 64");
  // Pascal-row coefficients in exact integer arithmetic
  unsigned __int128 coeff = 1;  // C(l, 0)
  unsigned __int128 tail = 0;
  for (int j = 0; j <= l; ++j) {
    if (j >= k) tail += coeff;
    if (j < l) {
      coeff = coeff * static_cast<unsigned __int128>(l - j) /
              static_cast<unsigned __int128>(j + 1);
    }
  }
  const long double denom = std::ldexp(1.0L, l);
  return static_cast<double>(static_cast<long double>(tail) / denom);
}

double default_tau(int l) {
  for (int k = 0; k <= l; ++k) {
    if (binomial_pvalue(k, l) <= 1e-3)
      return static_cast<double>(k) / static_cast<double>(l);
  }
  return 1.0;
}

DetectionResult detect_bits(const WatermarkCode& decoded, const WatermarkCode& owner,
                            std::optional<double> tau) {
  if (decoded.size() != owner.size())
    throw std::invalid_argument("detect: code length mismatch");
  const int l = static_cast<int>(owner.size());
  const int k = l - static_cast<int>(hamming_distance(decoded, owner));
  DetectionResult r;
  r.matched_bits = k;
  r.total_bits = l;
  r.bitacc = static_cast<double>(k) / l;
  r.p_value = binomial_pvalue(k, l);
  const double threshold = tau.value_or(default_tau(l));
  const int threshold_bits =
      static_cast<int>(std::ceil(threshold * l - 1e-9));
  r.decision = k >= threshold_bits;
  return r;
}

DetectionResult detect(const structio::Structure& s, const WatermarkCode& owner,
                       const codec::DecoderNet& decoder, std::optional<double> tau) {
  return detect_bits(decoder.decode_bits(s), owner, tau);
}

UserDatabase UserDatabase::random(size_t n, int l, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("UserDatabase: need at least one user");
  if (l < 1 || l > 32) throw std::invalid_argument("UserDatabase: code length 1..32");
  const double capacity = std::ldexp(1.0, l);
  if (static_cast<double>(n) >= capacity)
    throw Error("UserDatabase: cannot draw distinct codes, N >= 2^l");

  UserDatabase db;
  db.code_len = l;
  db.user_ids.resize(n);
  db.codes.reserve(n);
  std::unordered_set<uint64_t> seen;
  seen.reserve(n * 2);
  Rng rng(hash_mix({0xdbu, seed}));
  const uint64_t mask = l == 64 ? ~0ULL : ((1ULL << l) - 1);
  for (size_t i = 0; i < n; ++i) {
    db.user_ids[i] = static_cast<uint32_t>(i);
    for (;;) {
      const uint64_t c = rng.next_u64() & mask;
      if (seen.insert(c).second) {
        db.codes.push_back(c);
        break;
      }
    }
  }
  return db;
}

std::string UserDatabase::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (size_t i = 0; i < size(); ++i) {
    nlohmann::ordered_json e;
    e["user_id"] = user_ids[i];
    std::string bits(code_len, '0');
    for (int b = 0; b < code_len; ++b)
      if (codes[i] & (1ULL << b)) bits[b] = '1';
    e["code"] = bits;
    arr.push_back(std::move(e));
  }
  return arr.dump() + "\n";
}

UserDatabase UserDatabase::from_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  UserDatabase db;
  std::unordered_set<uint64_t> seen;
  std::unordered_set<uint32_t> ids;
  for (const auto& e : arr) {
    const auto bits = e.at("code").get<std::string>();
    if (db.user_ids.empty()) db.code_len = static_cast<int>(bits.size());
    if (static_cast<int>(bits.size()) != db.code_len)
      throw Error("UserDatabase: inconsistent code lengths");
    uint64_t c = 0;
    for (size_t b = 0; b < bits.size(); ++b)
      if (bits[b] == '1') c |= (1ULL << b);
    const uint32_t uid = e.at("user_id").get<uint32_t>();
    if (!ids.insert(uid).second) throw Error("UserDatabase: duplicate user_id");
    if (!seen.insert(c).second) throw Error("UserDatabase: duplicate code");
    db.user_ids.push_back(uid);
    db.codes.push_back(c);
  }
  if (db.user_ids.empty()) throw Error("UserDatabase: empty");
  return db;
}

uint32_t identify_code(uint64_t probe, const UserDatabase& db) {
  if (db.size() == 0) throw std::invalid_argument("identify: empty database");
  int best_d = 65;
  uint32_t best_id = 0;
  const size_t n = db.size();
  for (size_t i = 0; i < n; ++i) {
    const int d = std::popcount(probe ^ db.codes[i]);
    if (d < best_d || (d == best_d && db.user_ids[i] < best_id)) {
      best_d = d;
      best_id = db.user_ids[i];
    }
  }
  return best_id;
}

uint32_t identify(const structio::Structure& s, const UserDatabase& db,
                  const codec::DecoderNet& decoder) {
  const WatermarkCode decoded = decoder.decode_bits(s);
  if (static_cast<int>(decoded.size()) != db.code_len)
    throw std::invalid_argument("identify: decoder/database code length mismatch");
  return identify_code(decoded.packed(), db);
}

double simulate_identification(size_t n_users, int l, double p_bit_error,
                               int trials, uint64_t seed) {
  if (n_users < 2) throw std::invalid_argument("simulate_identification: N >= 2");
  if (trials < 1) throw std::invalid_argument("simulate_identification: trials >= 1");
  const UserDatabase db = UserDatabase::random(n_users, l, seed);

  std::vector<uint8_t> success(trials, 0);
  parallel_for(trials, [&](int trial) {
    Rng rng(hash_mix({0x51bULL, seed, static_cast<uint64_t>(trial)}));
    const size_t idx = rng.next_u64() % n_users;
    uint64_t probe = db.codes[idx];
    for (int b = 0; b < l; ++b)
      if (rng.uniform() < p_bit_error) probe ^= (1ULL << b);
    success[trial] = identify_code(probe, db) == db.user_ids[idx];
  });
  size_t hits = 0;
  for (uint8_t s : success) hits += s;
  return static_cast<double>(hits) / static_cast<double>(trials);
}

// --- sampling probes ---

double sampled_bitacc(const gen::EpsNet& base, lora::AdapterSet& adapters,
                      const codec::DecoderNet& decoder,
                      const gen::DiffusionSchedule& sched, int n_samples, int len,
                      uint64_t seed) {
  std::vector<double> accs(n_samples, 0.0);
  parallel_for(n_samples, [&](int i) {
    Rng rng(hash_mix({0xacc5ULL, seed, static_cast<uint64_t>(i)}));
    lora::LoraContext ctx;
    ctx.adapters = &adapters;
    ctx.code = WatermarkCode::random(decoder.cfg.code_len, rng);
    const auto s = gen::sample(base, sched, len, rng.next_u64(), &ctx);
    accs[i] = bit_accuracy(decoder.decode(s), ctx.code);
  });
  double mean = 0.0;
  for (double a : accs) mean += a;
  return n_samples ? mean / n_samples : 0.0;
}

namespace {

bool same_coords(const structio::Structure& a, const structio::Structure& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& p = a.residues[i].ca;
    const auto& q = b.residues[i].ca;
    if (p.x != q.x || p.y != q.y || p.z != q.z) return false;
  }
  return true;
}

}  // namespace

double consistency_rmsd_ctx(const gen::EpsNet& base, lora::LoraContext& ctx,
                            const gen::DiffusionSchedule& sched,
                            const std::vector<uint64_t>& seeds, int len) {
  std::vector<double> rmsds(seeds.size(), 0.0);
  parallel_for(static_cast<int>(seeds.size()), [&](int i) {
    const auto marked = gen::sample(base, sched, len, seeds[i], &ctx);
    const auto reference = gen::sample(base, sched, len, seeds[i], nullptr);
    rmsds[i] = same_coords(marked, reference)
                   ? 0.0
                   : geom::kabsch(marked.coords(), reference.coords()).rmsd;
  });
  double mean = 0.0;
  for (double r : rmsds) mean += r;
  return seeds.empty() ? 0.0 : mean / static_cast<double>(seeds.size());
}

double consistency_rmsd(const gen::EpsNet& base, lora::AdapterSet& adapters,
                        const gen::DiffusionSchedule& sched, int n_samples, int len,
                        uint64_t seed, int code_len) {
  std::vector<double> rmsds(n_samples, 0.0);
  parallel_for(n_samples, [&](int i) {
    Rng rng(hash_mix({0x3053ULL, seed, static_cast<uint64_t>(i)}));
    lora::LoraContext ctx;
    ctx.adapters = &adapters;
    ctx.code = WatermarkCode::random(code_len, rng);
    const uint64_t sample_seed = rng.next_u64();
    const auto marked = gen::sample(base, sched, len, sample_seed, &ctx);
    const auto reference = gen::sample(base, sched, len, sample_seed, nullptr);
    rmsds[i] = same_coords(marked, reference)
                   ? 0.0
                   : geom::kabsch(marked.coords(), reference.coords()).rmsd;
  });
  double mean = 0.0;
  for (double r : rmsds) mean += r;
  return n_samples ? mean / n_samples : 0.0;
}

// --- report rows ---

namespace {
std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}
}  // namespace

std::string eval_report_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "run_id,model_tag,l,condition,bitacc,rmsd,detection_fpr,ident_accuracy,"
        "n_samples,seed\n";
  for (const auto& r : rows) {
    os << r.run_id << ',' << r.model_tag << ',' << r.l << ',' << r.condition
       << ',' << fmt_opt(r.bitacc) << ',' << fmt_opt(r.rmsd) << ','
       << fmt_opt(r.detection_fpr) << ',' << fmt_opt(r.ident_accuracy) << ','
       << r.n_samples << ',' << r.seed << "\n";
  }
  return os.str();
}

}  // namespace structmark::evalkit
