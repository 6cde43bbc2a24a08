#include "structmark/struct_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "structmark/common.hpp"

namespace structmark::structio {

using geom::Vec3;

geom::CoordSet Structure::coords() const {
  geom::CoordSet c;
  c.points.reserve(residues.size());
  for (const auto& r : residues) c.points.push_back(r.ca);
  return c;
}

void Structure::set_coords(const geom::CoordSet& c) {
  if (c.size() != residues.size())
    throw std::invalid_argument("set_coords: length mismatch");
  for (size_t i = 0; i < residues.size(); ++i) residues[i].ca = c.points[i];
}

bool Structure::is_validated() const {
  if (residues.size() < 3) return false;
  for (size_t i = 0; i < residues.size(); ++i) {
    const Vec3& p = residues[i].ca;
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      return false;
    if (i > 0) {
      const double d = (p - residues[i - 1].ca).norm();
      if (d <= 1.0 || d >= 6.0) return false;
    }
  }
  return true;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + name);
}

const char* topology_name(Topology t) {
  switch (t) {
    case Topology::kHelix: return "helix";
    case Topology::kCoil: return "coil";
    case Topology::kMixed: return "mixed";
  }
  return "mixed";
}

Topology topology_from_name(const std::string& name) {
  if (name == "helix") return Topology::kHelix;
  if (name == "coil") return Topology::kCoil;
  if (name == "mixed") return Topology::kMixed;
  throw std::invalid_argument("unknown topology: " + name);
}

std::vector<const DatasetEntry*> Dataset::split(Split s) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

// --- PDB subset ---

namespace {

bool parse_fixed_double(const std::string& line, size_t col0, size_t len,
                        double* out) {
  if (line.size() < col0 + len) return false;
  const std::string field = line.substr(col0, len);
  char* end = nullptr;
  const char* begin = field.c_str();
  const double v = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ') ++end;
  if (*end != '\0') return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

bool parse_fixed_int(const std::string& line, size_t col0, size_t len, int* out) {
  if (line.size() < col0 + len) return false;
  const std::string field = line.substr(col0, len);
  char* end = nullptr;
  const char* begin = field.c_str();
  const long v = std::strtol(begin, &end, 10);
  if (end == begin) return false;
  while (*end == ' ') ++end;
  if (*end != '\0') return false;
  *out = static_cast<int>(v);
  return true;
}

std::string trimmed(std::string s) {
  const auto a = s.find_first_not_of(' ');
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(' ');
  return s.substr(a, b - a + 1);
}

}  // namespace

Structure parse_pdb(const std::string& text) {
  std::istringstream in(text);
  std::string line;

  struct Partial {
    std::optional<Vec3> ca, n, c;
  };
  std::map<int, Partial> by_seq;
  char chain = 0;
  bool saw_ca = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("ENDMDL", 0) == 0) break;  // first model only
    if (line.rfind("ATOM", 0) != 0 || line.size() < 6 ||
        line.compare(0, 6, "ATOM  ") != 0)
      continue;
    if (line.size() < 54) continue;

    const std::string atom_name = trimmed(line.substr(12, 4));
    const char alt_loc = line[16];
    if (alt_loc != ' ' && alt_loc != 'A') continue;
    const char line_chain = line[21];
    if (chain == 0 && atom_name == "CA") chain = line_chain;
    if (chain != 0 && line_chain != chain) continue;

    int seq = 0;
    double x = 0, y = 0, z = 0;
    if (!parse_fixed_int(line, 22, 4, &seq)) continue;
    if (!parse_fixed_double(line, 30, 8, &x) ||
        !parse_fixed_double(line, 38, 8, &y) ||
        !parse_fixed_double(line, 46, 8, &z))
      continue;  // malformed numeric field: reject the record

    Partial& p = by_seq[seq];
    if (atom_name == "CA" && !p.ca) {
      p.ca = Vec3{x, y, z};
      saw_ca = true;
    } else if (atom_name == "N" && !p.n) {
      p.n = Vec3{x, y, z};
    } else if (atom_name == "C" && !p.c) {
      p.c = Vec3{x, y, z};
    }
  }

  if (!saw_ca) throw Error("parse_pdb: no CA atoms");

  Structure s;
  s.chain_id = chain == 0 ? 'A' : chain;
  for (const auto& [seq, partial] : by_seq) {
    if (!partial.ca) continue;
    Residue r;
    r.seq_index = seq;
    r.ca = *partial.ca;
    r.n = partial.n;
    r.c = partial.c;
    s.residues.push_back(r);
  }
  if (s.residues.size() < 3)
    throw Error("parse_pdb: fewer than 3 valid CA residues");
  return s;
}

namespace {

void append_atom(std::string& out, int serial, const char* name4, char chain,
                 int seq, const Vec3& p, const char* element) {
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "ATOM  %5d %4s ALA %c%4d    %8.3f%8.3f%8.3f  1.00  0.00          %2s\n",
                serial, name4, chain, seq, p.x, p.y, p.z, element);
  out += buf;
}

}  // namespace

std::string write_pdb(const Structure& s) {
  if (s.residues.empty()) throw std::invalid_argument("write_pdb: empty structure");
  std::string out;
  out.reserve(s.residues.size() * 81 + 16);
  int serial = 1;
  for (const auto& r : s.residues) {
    if (!std::isfinite(r.ca.x) || !std::isfinite(r.ca.y) || !std::isfinite(r.ca.z))
      throw Error("write_pdb: non-finite coordinate");
    if (r.n) append_atom(out, serial++, " N  ", s.chain_id, r.seq_index, *r.n, " N");
    append_atom(out, serial++, " CA ", s.chain_id, r.seq_index, r.ca, " C");
    if (r.c) append_atom(out, serial++, " C  ", s.chain_id, r.seq_index, *r.c, " C");
  }
  char ter[96];
  std::snprintf(ter, sizeof(ter), "TER   %5d      ALA %c%4d\n", serial,
                s.chain_id, s.residues.back().seq_index);
  out += ter;
  out += "END\n";
  return out;
}

// --- synthetic corpus ---

namespace {

constexpr double kCaSpacing = 3.8;
constexpr double kHelixRise = 1.5;
constexpr double kHelixTurnDeg = 100.0;

// radius making the helix chord length exactly kCaSpacing
double helix_radius() {
  const double theta = kHelixTurnDeg * M_PI / 180.0;
  const double chord_sq = kCaSpacing * kCaSpacing - kHelixRise * kHelixRise;
  return std::sqrt(chord_sq) / (2.0 * std::sin(theta / 2.0));
}

geom::Mat3 random_rotation(Rng& rng) {
  double q[4];
  for (double& qi : q) qi = rng.normal();
  double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (n < 1e-12) {
    q[0] = 1.0;
    n = 1.0;
  }
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  geom::Mat3 r;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);
  return r;
}

Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = v.norm();
    if (n > 1e-6) return {v.x / n, v.y / n, v.z / n};
  }
}

// points of a canonical helix starting at parameter index j0
Vec3 helix_point(double radius, int j, double phase) {
  const double theta = kHelixTurnDeg * M_PI / 180.0;
  return {radius * std::cos(j * theta + phase), radius * std::sin(j * theta + phase),
          j * kHelixRise};
}

void append_helix_segment(std::vector<Vec3>& pts, int count, Rng& rng) {
  const double radius = helix_radius();
  const geom::Mat3 rot = random_rotation(rng);
  const Vec3 base = pts.empty() ? Vec3{} : pts.back();
  const Vec3 h0 = helix_point(radius, 0, 0.0);
  const int start = pts.empty() ? 0 : 1;
  for (int j = start; j < start + count; ++j) {
    const Vec3 rel = helix_point(radius, j, 0.0) - h0;
    pts.push_back(base + rot * rel);
  }
}

void append_walk_segment(std::vector<Vec3>& pts, int count, Rng& rng,
                         Vec3* dir_state) {
  if (pts.empty()) pts.push_back(Vec3{});
  for (int j = 0; j < count; ++j) {
    const Vec3 g{rng.normal(), rng.normal(), rng.normal()};
    Vec3 d = *dir_state * 1.5 + g;
    const double n = d.norm();
    if (n < 1e-9) d = random_unit(rng);
    else d = {d.x / n, d.y / n, d.z / n};
    *dir_state = d;
    pts.push_back(pts.back() + d * kCaSpacing);
  }
}

}  // namespace

Structure gen_synthetic(uint64_t seed, int n_residues, Topology topology) {
  if (n_residues < 8 || n_residues > 512)
    throw std::invalid_argument("gen_synthetic: n_residues must be in [8, 512]");
  Rng rng(hash_mix({0x57a7u, seed, static_cast<uint64_t>(n_residues),
                    static_cast<uint64_t>(topology)}));

  std::vector<Vec3> pts;
  pts.reserve(n_residues);
  Vec3 dir = random_unit(rng);

  switch (topology) {
    case Topology::kHelix:
      append_helix_segment(pts, n_residues, rng);
      break;
    case Topology::kCoil:
      append_walk_segment(pts, n_residues - 1, rng, &dir);
      break;
    case Topology::kMixed: {
      bool helix_next = true;
      while (static_cast<int>(pts.size()) < n_residues) {
        const int remaining = n_residues - static_cast<int>(pts.size());
        if (helix_next) {
          const int len = std::min(remaining, 6 + static_cast<int>(rng.uniform_int(7)));
          append_helix_segment(pts, len, rng);
        } else {
          const int len = std::min(remaining, 2 + static_cast<int>(rng.uniform_int(3)));
          append_walk_segment(pts, len, rng, &dir);
        }
        helix_next = !helix_next;
      }
      break;
    }
  }
  pts.resize(n_residues);

  Structure s;
  s.chain_id = 'A';
  s.residues.resize(n_residues);
  for (int i = 0; i < n_residues; ++i) {
    s.residues[i].seq_index = i + 1;
    s.residues[i].ca = pts[i];
  }
  return s;
}

Dataset gen_corpus(const CorpusConfig& cfg) {
  if (cfg.n_structures < 1) throw std::invalid_argument("gen_corpus: empty corpus");
  if (cfg.min_len > cfg.max_len || cfg.min_len < 8 || cfg.max_len > 512)
    throw std::invalid_argument("gen_corpus: bad length range");

  Rng rng(hash_mix({0xc057u, cfg.seed}));
  Dataset d;
  d.entries.reserve(cfg.n_structures);
  for (int i = 0; i < cfg.n_structures; ++i) {
    DatasetEntry e;
    const uint64_t entry_seed = hash_mix({cfg.seed, static_cast<uint64_t>(i)});
    const int len = cfg.min_len + static_cast<int>(rng.uniform_int(
                                      static_cast<uint32_t>(cfg.max_len - cfg.min_len + 1)));
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06d", i);
    e.id = id;
    e.structure = gen_synthetic(entry_seed, len, cfg.topology);
    e.provenance = Provenance::kSynthetic;
    e.synthetic_seed = entry_seed;
    e.topology = cfg.topology;
    d.entries.push_back(std::move(e));
  }

  const auto perm = Rng(hash_mix({0x5bb7u, cfg.seed})).permutation(cfg.n_structures);
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * cfg.n_structures));
  const int n_val = static_cast<int>(std::lround(cfg.val_fraction * cfg.n_structures));
  for (int rank = 0; rank < cfg.n_structures; ++rank) {
    Split s = Split::kTest;
    if (rank < n_train) s = Split::kTrain;
    else if (rank < n_train + n_val) s = Split::kVal;
    d.entries[perm[rank]].split = s;
  }
  return d;
}

Dataset filter_corpus(const Dataset& d, int min_len, int max_len) {
  Dataset out;
  for (const auto& e : d.entries) {
    const int n = static_cast<int>(e.structure.size());
    if (n >= min_len && n <= max_len) out.entries.push_back(e);
  }
  return out;
}

std::vector<Batch> batch_by_length(const Dataset& d, int max_batch,
                                   std::optional<Split> only) {
  if (max_batch < 1) throw std::invalid_argument("batch_by_length: max_batch must be >= 1");
  std::map<size_t, std::vector<const DatasetEntry*>> groups;
  for (const auto& e : d.entries) {
    if (only && e.split != *only) continue;
    groups[e.structure.size()].push_back(&e);
  }
  std::vector<Batch> batches;
  for (const auto& [len, items] : groups) {
    for (size_t off = 0; off < items.size(); off += max_batch) {
      Batch b;
      b.length = len;
      const size_t end = std::min(items.size(), off + max_batch);
      b.items.assign(items.begin() + off, items.begin() + end);
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

// --- manifest ---

std::string manifest_to_json(const Dataset& d) {
  nlohmann::ordered_json root;
  root["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : d.entries) {
    nlohmann::ordered_json je;
    je["id"] = e.id;
    je["length"] = e.structure.size();
    je["split"] = split_name(e.split);
    if (e.provenance == Provenance::kSynthetic) {
      je["synthetic_seed"] = e.synthetic_seed.value_or(0);
      je["topology"] = topology_name(e.topology.value_or(Topology::kMixed));
    } else {
      je["path"] = e.path.value_or("");
    }
    if (e.resolution) je["resolution"] = *e.resolution;
    root["entries"].push_back(std::move(je));
  }
  return root.dump(2) + "\n";
}

Dataset dataset_from_manifest(const std::string& json_text,
                              const std::string& base_dir) {
  const auto root = nlohmann::json::parse(json_text);
  Dataset d;
  for (const auto& je : root.at("entries")) {
    DatasetEntry e;
    e.id = je.at("id").get<std::string>();
    e.split = split_from_name(je.at("split").get<std::string>());
    const int len = je.at("length").get<int>();
    if (je.contains("synthetic_seed")) {
      e.provenance = Provenance::kSynthetic;
      e.synthetic_seed = je.at("synthetic_seed").get<uint64_t>();
      e.topology = topology_from_name(je.at("topology").get<std::string>());
      e.structure = gen_synthetic(*e.synthetic_seed, len, *e.topology);
    } else {
      e.provenance = Provenance::kPdb;
      e.path = je.at("path").get<std::string>();
      std::ifstream f(base_dir + "/" + *e.path);
      if (!f) throw Error("dataset_from_manifest: cannot open " + *e.path);
      std::stringstream ss;
      ss << f.rdbuf();
      e.structure = parse_pdb(ss.str());
    }
    if (je.contains("resolution")) e.resolution = je.at("resolution").get<double>();
    d.entries.push_back(std::move(e));
  }
  return d;
}

}  // namespace structmark::structio
