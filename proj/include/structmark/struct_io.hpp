#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "structmark/geom.hpp"

namespace structmark::structio {

struct Residue {
  int seq_index = 0;
  geom::Vec3 ca;
  std::optional<geom::Vec3> n;
  std::optional<geom::Vec3> c;
};

// Single-chain Calpha trace (optionally N/C backbone atoms).
struct Structure {
  char chain_id = 'A';
  std::vector<Residue> residues;

  size_t size() const { return residues.size(); }
  geom::CoordSet coords() const;
  void set_coords(const geom::CoordSet& c);

  // n >= 3, finite coordinates, consecutive Calpha spacing in (1, 6) A
  bool is_validated() const;
};

enum class Split { kTrain, kVal, kTest };
enum class Provenance { kPdb, kSynthetic };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

enum class Topology { kHelix, kCoil, kMixed };
const char* topology_name(Topology t);
Topology topology_from_name(const std::string& name);

struct DatasetEntry {
  std::string id;
  Structure structure;
  Split split = Split::kTrain;
  Provenance provenance = Provenance::kSynthetic;
  // round-trip metadata for the manifest
  std::optional<uint64_t> synthetic_seed;
  std::optional<Topology> topology;
  std::optional<std::string> path;
  std::optional<double> resolution;  // recorded when available, never enforced
};

struct Dataset {
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split(Split s) const;
};

struct Batch {
  std::vector<const DatasetEntry*> items;
  size_t length = 0;  // residue count shared by all members
};

// --- PDB subset (ATOM/TER/END, fixed columns) ---

Structure parse_pdb(const std::string& text);
std::string write_pdb(const Structure& s);

// --- synthetic corpus ---

// Calpha chain with exact 3.8 A spacing; helix uses ideal alpha-helix
// geometry (rise 1.5 A, ~100 deg/residue). Deterministic in seed.
Structure gen_synthetic(uint64_t seed, int n_residues, Topology topology);

struct CorpusConfig {
  int n_structures = 2000;
  int min_len = 48;
  int max_len = 64;
  Topology topology = Topology::kMixed;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  uint64_t seed = 0;
};

Dataset gen_corpus(const CorpusConfig& cfg);

Dataset filter_corpus(const Dataset& d, int min_len, int max_len);

std::vector<Batch> batch_by_length(const Dataset& d, int max_batch,
                                   std::optional<Split> only = std::nullopt);

// --- manifest (one JSON document listing entries) ---

std::string manifest_to_json(const Dataset& d);
Dataset dataset_from_manifest(const std::string& json_text,
                              const std::string& base_dir);

}  // namespace structmark::structio
