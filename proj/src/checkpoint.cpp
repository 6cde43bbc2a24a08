#include "structmark/checkpoint.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "structmark/common.hpp"

namespace structmark::ckpt {

static_assert(sizeof(double) == 8, "f64 layout assumed");

namespace {
constexpr char kMagic[9] = "SMCKPT01";

void require_le() {
  const uint16_t probe = 1;
  uint8_t first;
  std::memcpy(&first, &probe, 1);
  if (first != 1) throw Error("checkpoint: little-endian host required");
}
}  // namespace

std::string default_created_stamp() {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) return env;
  return "unset";
}

void Checkpoint::add_namespace(const std::string& ns,
                               const std::vector<const net::Parameter*>& params) {
  for (const auto* p : params)
    entries.push_back({ns + "." + p->name, p->value});
}

bool Checkpoint::has_namespace(const std::string& ns) const {
  const std::string prefix = ns + ".";
  for (const auto& e : entries)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

std::vector<std::string> Checkpoint::namespaces() const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& e : entries) {
    const auto dot = e.name.find('.');
    const std::string ns = e.name.substr(0, dot);
    if (seen.insert(ns).second) out.push_back(ns);
  }
  return out;
}

void Checkpoint::restore_namespace(const std::string& ns,
                                   const std::vector<net::Parameter*>& params) const {
  for (auto* p : params) {
    const std::string key = ns + "." + p->name;
    const Entry* found = nullptr;
    for (const auto& e : entries) {
      if (e.name == key) {
        found = &e;
        break;
      }
    }
    if (!found) throw Error("checkpoint: missing parameter " + key);
    if (found->tensor.shape != p->value.shape)
      throw Error("checkpoint: shape mismatch for " + key);
    p->value = found->tensor;
    p->zero_grad();
  }
}

std::string Checkpoint::serialize() const {
  require_le();
  nlohmann::ordered_json manifest;
  manifest["format_version"] = format_version;
  manifest["created"] = created.empty() ? default_created_stamp() : created;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = seed;
  manifest["namespaces"] = namespaces();
  manifest["dtype"] = "f64";
  manifest["config"] = config;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& e : entries) {
    nlohmann::ordered_json pe;
    pe["name"] = e.name;
    pe["shape"] = e.tensor.shape;
    pe["offset"] = offset;
    params.push_back(std::move(pe));
    offset += e.tensor.data.size() * sizeof(double);
  }
  manifest["params"] = std::move(params);

  const std::string mtext = manifest.dump();
  std::string out;
  out.reserve(16 + mtext.size() + offset);
  out.append(kMagic, 8);
  const uint64_t mlen = mtext.size();
  out.append(reinterpret_cast<const char*>(&mlen), 8);
  out += mtext;
  for (const auto& e : entries) {
    const char* raw = reinterpret_cast<const char*>(e.tensor.data.data());
    out.append(raw, e.tensor.data.size() * sizeof(double));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  require_le();
  if (bytes.size() < 16 || bytes.compare(0, 8, kMagic, 8) != 0)
    throw Error("checkpoint: bad magic");
  uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  if (bytes.size() < 16 + mlen) throw Error("checkpoint: truncated manifest");
  const auto manifest = nlohmann::ordered_json::parse(bytes.substr(16, mlen));

  Checkpoint c;
  c.format_version = manifest.at("format_version").get<int>();
  c.created = manifest.at("created").get<std::string>();
  c.config_hash = manifest.at("config_hash").get<std::string>();
  c.seed = manifest.at("seed").get<uint64_t>();
  c.config = manifest.at("config");
  const size_t block_start = 16 + mlen;
  for (const auto& pe : manifest.at("params")) {
    Entry e;
    e.name = pe.at("name").get<std::string>();
    e.tensor = net::Tensor(pe.at("shape").get<std::vector<int>>());
    const uint64_t off = pe.at("offset").get<uint64_t>();
    const size_t nbytes = e.tensor.data.size() * sizeof(double);
    if (block_start + off + nbytes > bytes.size())
      throw Error("checkpoint: truncated parameter block");
    std::memcpy(e.tensor.data.data(), bytes.data() + block_start + off, nbytes);
    c.entries.push_back(std::move(e));
  }
  return c;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot write " + path);
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::string Checkpoint::sha256() const { return sha256_hex(serialize()); }

}  // namespace structmark::ckpt
