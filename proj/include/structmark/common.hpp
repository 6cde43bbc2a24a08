#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace structmark {

// Domain error distinct from contract violations (std::invalid_argument).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the project flows through this so that
// runs are reproducible bit-for-bit from their seeds on one platform.
// xoshiro256** seeded via splitmix64; normals via Box-Muller with a cached
// spare so the draw sequence is independent of call-site pairing.
// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t x);

// Order-sensitive mix of several seed components, e.g. (seed, epoch, item).
uint64_t hash_mix(std::initializer_list<uint64_t> parts);

class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                     // [0, 1)
  double uniform(double lo, double hi); // [lo, hi)
  uint32_t uniform_int(uint32_t n);     // [0, n), unbiased
  double normal();                      // N(0, 1)
  std::vector<uint32_t> permutation(uint32_t n);

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Evaluation parallelism. Workers map independent items to slots in index
// order; any reduction happens sequentially afterwards, so results do not
// depend on the number of threads. STRUCTMARK_THREADS caps the pool.
// ---------------------------------------------------------------------------

int eval_thread_count();

void parallel_for(int n, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Hashing / hex helpers.
// ---------------------------------------------------------------------------

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& bytes);

}  // namespace structmark
