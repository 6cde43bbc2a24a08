#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "structmark/tensor.hpp"

namespace structmark::ckpt {

// Single-file container: 8-byte magic, u64 little-endian manifest length,
// manifest JSON, then a concatenated little-endian f64 block. Loading then
// saving is byte-identical.
struct Checkpoint {
  int format_version = 1;
  std::string created;      // SOURCE_DATE_EPOCH when set, else "unset"
  std::string config_hash;
  uint64_t seed = 0;
  nlohmann::ordered_json config;  // full run configuration for reconstruction

  struct Entry {
    std::string name;  // "<namespace>.<parameter name>"
    net::Tensor tensor;
  };
  std::vector<Entry> entries;

  void add_namespace(const std::string& ns,
                     const std::vector<const net::Parameter*>& params);
  // restores by name into matching parameters; throws Error on missing/shape
  void restore_namespace(const std::string& ns,
                         const std::vector<net::Parameter*>& params) const;
  bool has_namespace(const std::string& ns) const;
  std::vector<std::string> namespaces() const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  std::string sha256() const;  // of the serialized bytes
};

std::string default_created_stamp();

}  // namespace structmark::ckpt
