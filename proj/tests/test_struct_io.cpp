#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "structmark/common.hpp"
#include "structmark/struct_io.hpp"

using namespace structmark;
using namespace structmark::structio;

namespace {

// count lines in a fixture that are CA ATOM records (the "script" oracle)
int count_ca_lines(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.rfind("ATOM  ", 0) == 0 && line.size() >= 16 &&
        line.substr(12, 4) == " CA ")
      ++n;
  }
  return n;
}

const char* kMinimalPdb =
    "ATOM      1  CA  ALA A   1       1.000   2.000   3.000  1.00  0.00           C\n"
    "ATOM      2  CA  ALA A   2       4.500   2.000   3.000  1.00  0.00           C\n"
    "ATOM      3  CA  ALA A   3       4.500   5.700   3.000  1.00  0.00           C\n"
    "END\n";

// glycine-rich fragment: mixed N/CA/C records, one altLoc to skip
const char* kGlyFragment =
    "ATOM      1  N   GLY A  10      11.104   6.134  -6.504  1.00  0.00           N\n"
    "ATOM      2  CA  GLY A  10      11.639   6.071  -5.147  1.00  0.00           C\n"
    "ATOM      3  C   GLY A  10      11.245   7.321  -4.364  1.00  0.00           C\n"
    "ATOM      4  N   GLY A  11      10.174   7.210  -3.585  1.00  0.00           N\n"
    "ATOM      5  CA  GLY A  11       9.687   8.344  -2.790  1.00  0.00           C\n"
    "ATOM      6  CA BGLY A  11       9.999   9.999  -9.999  1.00  0.00           C\n"
    "ATOM      7  C   GLY A  11      10.598   8.620  -1.602  1.00  0.00           C\n"
    "ATOM      8  N   GLY A  12      11.245   9.774  -1.608  1.00  0.00           N\n"
    "ATOM      9  CA  GLY A  12      12.142  10.134  -0.514  1.00  0.00           C\n"
    "ATOM     10  CA  GLY A  13      13.405   9.316  -0.341  1.00  0.00           C\n"
    "ATOM     11  CA  GLY A  14      14.119   9.333   1.010  1.00  0.00           C\n"
    "TER\n"
    "END\n";

}  // namespace

TEST_CASE("parse_pdb reads fixed columns") {
  const Structure s = parse_pdb(kMinimalPdb);
  REQUIRE(s.size() == 3);
  CHECK(s.chain_id == 'A');
  CHECK(s.residues[0].ca.x == doctest::Approx(1.0));
  CHECK(s.residues[0].ca.y == doctest::Approx(2.0));
  CHECK(s.residues[0].ca.z == doctest::Approx(3.0));
  CHECK(s.residues[1].ca.x == doctest::Approx(4.5));
  CHECK(s.residues[2].ca.y == doctest::Approx(5.7));
  CHECK(s.residues[0].seq_index == 1);
  CHECK(s.residues[2].seq_index == 3);
}

TEST_CASE("parse_pdb rejects inputs without CA atoms") {
  const char* hetatm_only =
      "HETATM    1  O   HOH A   1       0.000   0.000   0.000  1.00  0.00           O\n"
      "END\n";
  CHECK_THROWS_WITH_AS(parse_pdb(hetatm_only), doctest::Contains("no CA atoms"),
                       Error);
}

TEST_CASE("parse_pdb on glycine-rich fragment matches line-count oracle") {
  const Structure s = parse_pdb(kGlyFragment);
  // the altLoc 'B' record is skipped and does not create a residue
  CHECK(static_cast<int>(s.size()) == count_ca_lines(kGlyFragment) - 1);
  CHECK(s.residues[0].n.has_value());
  CHECK(s.residues[0].c.has_value());
  CHECK(!s.residues[4].n.has_value());
  // altLoc 'A'/' ' only: residue 11 keeps the first CA
  CHECK(s.residues[1].ca.x == doctest::Approx(9.687));
}

TEST_CASE("parse_pdb rejects malformed numeric fields per record") {
  // second record has a bad x field; structure keeps 4 good residues
  const std::string text =
      "ATOM      1  CA  ALA A   1       1.000   2.000   3.000  1.00  0.00           C\n"
      "ATOM      2  CA  ALA A   2       x.bad   2.000   3.000  1.00  0.00           C\n"
      "ATOM      3  CA  ALA A   3       4.500   5.700   3.000  1.00  0.00           C\n"
      "ATOM      4  CA  ALA A   4       6.500   5.700   3.000  1.00  0.00           C\n"
      "ATOM      5  CA  ALA A   5       8.500   5.700   3.000  1.00  0.00           C\n";
  const Structure s = parse_pdb(text);
  CHECK(s.size() == 4);

  // fewer than 3 valid residues -> structure rejected
  const std::string too_few =
      "ATOM      1  CA  ALA A   1       1.000   2.000   3.000  1.00  0.00           C\n"
      "ATOM      2  CA  ALA A   2       x.bad   2.000   3.000  1.00  0.00           C\n"
      "ATOM      3  CA  ALA A   3       4.500   5.700   3.000  1.00  0.00           C\n";
  CHECK_THROWS_AS(parse_pdb(too_few), Error);
}

TEST_CASE("write_pdb round trip at PDB precision") {
  const Structure s = gen_synthetic(3, 24, Topology::kMixed);
  const std::string text = write_pdb(s);
  const Structure back = parse_pdb(text);
  REQUIRE(back.size() == s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    CHECK(std::abs(back.residues[i].ca.x - s.residues[i].ca.x) <= 0.001);
    CHECK(std::abs(back.residues[i].ca.y - s.residues[i].ca.y) <= 0.001);
    CHECK(std::abs(back.residues[i].ca.z - s.residues[i].ca.z) <= 0.001);
    CHECK(back.residues[i].seq_index == s.residues[i].seq_index);
  }
}

TEST_CASE("write_pdb emits CA-only records and trailer") {
  const Structure s = gen_synthetic(5, 100, Topology::kCoil);
  const std::string text = write_pdb(s);
  std::istringstream in(text);
  std::string line;
  int atoms = 0, ters = 0, ends = 0;
  while (std::getline(in, line)) {
    if (line.rfind("ATOM  ", 0) == 0) {
      ++atoms;
      CHECK(line.substr(12, 4) == " CA ");
    } else if (line.rfind("TER", 0) == 0) {
      ++ters;
    } else if (line.rfind("END", 0) == 0) {
      ++ends;
    }
  }
  CHECK(atoms == 100);
  CHECK(ters == 1);
  CHECK(ends == 1);
}

TEST_CASE("parse-write-parse is idempotent") {
  const Structure s = parse_pdb(kGlyFragment);
  const Structure s2 = parse_pdb(write_pdb(s));
  const Structure s3 = parse_pdb(write_pdb(s2));
  REQUIRE(s2.size() == s3.size());
  for (size_t i = 0; i < s2.size(); ++i) {
    CHECK(s2.residues[i].ca.x == s3.residues[i].ca.x);
    CHECK(s2.residues[i].ca.y == s3.residues[i].ca.y);
    CHECK(s2.residues[i].ca.z == s3.residues[i].ca.z);
  }
}

TEST_CASE("gen_synthetic geometry") {
  SUBCASE("exact spacing and determinism") {
    for (auto topo : {Topology::kHelix, Topology::kCoil, Topology::kMixed}) {
      const Structure s = gen_synthetic(11, 48, topo);
      REQUIRE(s.size() == 48);
      for (size_t i = 1; i < s.size(); ++i) {
        const double d = (s.residues[i].ca - s.residues[i - 1].ca).norm();
        CHECK(std::abs(d - 3.8) < 1e-9);
      }
      CHECK(s.is_validated());
      const Structure again = gen_synthetic(11, 48, topo);
      for (size_t i = 0; i < s.size(); ++i) {
        CHECK(s.residues[i].ca.x == again.residues[i].ca.x);
        CHECK(s.residues[i].ca.y == again.residues[i].ca.y);
        CHECK(s.residues[i].ca.z == again.residues[i].ca.z);
      }
    }
  }

  SUBCASE("helix radius matches cylinder fit") {
    // oracle: principal axis via coordinate covariance, radius = mean
    // distance of points to that axis
    const Structure s = gen_synthetic(21, 20, Topology::kHelix);
    geom::Vec3 mean{};
    for (const auto& r : s.residues) mean += r.ca;
    mean = mean * (1.0 / s.size());
    double cov[3][3] = {};
    for (const auto& r : s.residues) {
      const geom::Vec3 d = r.ca - mean;
      const double v[3] = {d.x, d.y, d.z};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) cov[a][b] += v[a] * v[b];
    }
    // power iteration for the dominant eigenvector (helix axis)
    geom::Vec3 axis{1, 1, 1};
    for (int it = 0; it < 200; ++it) {
      geom::Vec3 next{
          cov[0][0] * axis.x + cov[0][1] * axis.y + cov[0][2] * axis.z,
          cov[1][0] * axis.x + cov[1][1] * axis.y + cov[1][2] * axis.z,
          cov[2][0] * axis.x + cov[2][1] * axis.y + cov[2][2] * axis.z};
      axis = next.normalized();
    }
    double radius = 0.0;
    for (const auto& r : s.residues) {
      const geom::Vec3 d = r.ca - mean;
      const geom::Vec3 perp = d - axis * d.dot(axis);
      radius += perp.norm();
    }
    radius /= s.size();
    CHECK(std::abs(radius - 2.3) < 0.3);
  }

  SUBCASE("bounds") {
    CHECK_THROWS_AS(gen_synthetic(1, 7, Topology::kCoil), std::invalid_argument);
    CHECK_THROWS_AS(gen_synthetic(1, 513, Topology::kCoil), std::invalid_argument);
  }
}

TEST_CASE("filter_corpus boundaries") {
  Dataset d;
  for (int len : {59, 60, 512, 513}) {
    DatasetEntry e;
    e.id = "len" + std::to_string(len);
    e.structure = gen_synthetic(static_cast<uint64_t>(len), std::min(len, 512),
                                Topology::kCoil);
    if (len == 513) {
      e.structure.residues.push_back(e.structure.residues.back());
      e.structure.residues.back().seq_index += 1;
      e.structure.residues.back().ca.x += 3.8;
    }
    d.entries.push_back(e);
  }
  const Dataset kept = filter_corpus(d, 60, 512);
  REQUIRE(kept.entries.size() == 2);
  CHECK(kept.entries[0].structure.size() == 60);
  CHECK(kept.entries[1].structure.size() == 512);

  CHECK(filter_corpus(Dataset{}, 60, 512).entries.empty());
  CHECK(filter_corpus(d, 100, 50).entries.empty());
}

TEST_CASE("batch_by_length partitions") {
  Dataset d;
  auto add = [&](Dataset& ds, int len, int count, const char* tag) {
    for (int i = 0; i < count; ++i) {
      DatasetEntry e;
      e.id = std::string(tag) + std::to_string(len) + "_" + std::to_string(i);
      e.structure = gen_synthetic(hash_mix({uint64_t(len), uint64_t(i)}), len,
                                  Topology::kCoil);
      e.split = Split::kTrain;
      ds.entries.push_back(e);
    }
  };
  add(d, 50, 3, "s");
  add(d, 60, 2, "s");
  const auto batches = batch_by_length(d, 64);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].items.size() == 3);
  CHECK(batches[1].items.size() == 2);

  Dataset big;
  add(big, 40, 130, "b");
  const auto chunks = batch_by_length(big, 64);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].items.size() == 64);
  CHECK(chunks[1].items.size() == 64);
  CHECK(chunks[2].items.size() == 2);

  // partition property: every structure exactly once
  std::set<const DatasetEntry*> seen;
  size_t total = 0;
  for (const auto& b : chunks) {
    for (const auto* e : b.items) {
      CHECK(seen.insert(e).second);
      ++total;
      CHECK(e->structure.size() == b.length);
    }
  }
  CHECK(total == big.entries.size());

  CHECK_THROWS_AS(batch_by_length(big, 0), std::invalid_argument);
}

TEST_CASE("corpus generation and manifest round trip") {
  CorpusConfig cfg;
  cfg.n_structures = 40;
  cfg.min_len = 12;
  cfg.max_len = 16;
  cfg.seed = 5;
  const Dataset d = gen_corpus(cfg);
  REQUIRE(d.entries.size() == 40);
  size_t train = 0, val = 0, test = 0;
  for (const auto& e : d.entries) {
    if (e.split == Split::kTrain) ++train;
    if (e.split == Split::kVal) ++val;
    if (e.split == Split::kTest) ++test;
    CHECK(e.structure.is_validated());
  }
  CHECK(train == 32);
  CHECK(val == 4);
  CHECK(test == 4);

  const std::string manifest = manifest_to_json(d);
  const Dataset back = dataset_from_manifest(manifest, ".");
  REQUIRE(back.entries.size() == d.entries.size());
  for (size_t i = 0; i < d.entries.size(); ++i) {
    CHECK(back.entries[i].id == d.entries[i].id);
    CHECK(back.entries[i].split == d.entries[i].split);
    REQUIRE(back.entries[i].structure.size() == d.entries[i].structure.size());
    for (size_t r = 0; r < d.entries[i].structure.size(); ++r) {
      CHECK(back.entries[i].structure.residues[r].ca.x ==
            d.entries[i].structure.residues[r].ca.x);
    }
  }
}
