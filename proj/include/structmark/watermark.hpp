#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "structmark/common.hpp"

namespace structmark {

// Binary message m. Supported capacities: 4, 8, 16, 32 bits.
struct WatermarkCode {
  std::vector<uint8_t> bits;  // each 0 or 1

  WatermarkCode() = default;
  explicit WatermarkCode(std::vector<uint8_t> b);

  static bool supported_length(size_t l) {
    return l == 4 || l == 8 || l == 16 || l == 32;
  }
  static WatermarkCode random(size_t l, Rng& rng);
  static WatermarkCode from_string(const std::string& s);  // e.g. "10110010"

  size_t size() const { return bits.size(); }
  std::string to_string() const;
  uint64_t packed() const;  // bit i -> bit position i

  // code as 0/1 doubles
  std::vector<double> as01() const;
  // code as -1/+1 doubles
  std::vector<double> as_pm1() const;

  bool operator==(const WatermarkCode& o) const { return bits == o.bits; }
};

size_t hamming_distance(const WatermarkCode& a, const WatermarkCode& b);

}  // namespace structmark
