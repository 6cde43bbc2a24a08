#include "structmark/codec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace structmark {

// --- WatermarkCode ---

WatermarkCode::WatermarkCode(std::vector<uint8_t> b) : bits(std::move(b)) {
  if (!supported_length(bits.size()))
    throw std::invalid_argument("WatermarkCode: length must be 4, 8, 16 or 32");
  for (uint8_t v : bits)
    if (v > 1) throw std::invalid_argument("WatermarkCode: bits must be 0/1");
}

WatermarkCode WatermarkCode::random(size_t l, Rng& rng) {
  std::vector<uint8_t> b(l);
  for (auto& v : b) v = static_cast<uint8_t>(rng.uniform_int(2));
  return WatermarkCode(std::move(b));
}

WatermarkCode WatermarkCode::from_string(const std::string& s) {
  std::vector<uint8_t> b;
  b.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1')
      throw std::invalid_argument("WatermarkCode: expected a 0/1 string");
    b.push_back(c == '1' ? 1 : 0);
  }
  return WatermarkCode(std::move(b));
}

std::string WatermarkCode::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (uint8_t b : bits) s.push_back(b ? '1' : '0');
  return s;
}

uint64_t WatermarkCode::packed() const {
  uint64_t p = 0;
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) p |= (1ULL << i);
  return p;
}

std::vector<double> WatermarkCode::as01() const {
  std::vector<double> v(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) v[i] = bits[i];
  return v;
}

std::vector<double> WatermarkCode::as_pm1() const {
  std::vector<double> v(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) v[i] = bits[i] ? 1.0 : -1.0;
  return v;
}

size_t hamming_distance(const WatermarkCode& a, const WatermarkCode& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("hamming_distance: length mismatch");
  size_t d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += a.bits[i] != b.bits[i];
  return d;
}

}  // namespace structmark

namespace structmark::codec {

using geom::Mat3;
using geom::Vec3;
using net::LayerMode;
using net::Tape;
using net::Tensor;

// --- local frames ---

namespace {

Mat3 frame_from(const Vec3& v1, const Vec3& v2) {
  Vec3 e1;
  const double n1 = v1.norm();
  if (n1 < 1e-12) {
    e1 = {1.0, 0.0, 0.0};
  } else {
    e1 = {v1.x / n1, v1.y / n1, v1.z / n1};
  }
  Vec3 u = v2 - e1 * v2.dot(e1);
  const double scale = std::max(1.0, v2.norm());
  if (u.norm() < 1e-9 * scale) {
    // collinear: complete e1 with the least-aligned coordinate axis
    const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    int best = 0;
    double best_dot = 2.0;
    for (int a = 0; a < 3; ++a) {
      const double d = std::abs(e1.dot(axes[a]));
      if (d < best_dot) {
        best_dot = d;
        best = a;
      }
    }
    u = axes[best] - e1 * axes[best].dot(e1);
  }
  const Vec3 e2 = u.normalized();
  const Vec3 e3 = e1.cross(e2);
  Mat3 m;
  m(0, 0) = e1.x; m(1, 0) = e1.y; m(2, 0) = e1.z;
  m(0, 1) = e2.x; m(1, 1) = e2.y; m(2, 1) = e2.z;
  m(0, 2) = e3.x; m(1, 2) = e3.y; m(2, 2) = e3.z;
  return m;
}

std::vector<Mat3> bases_from_points(const std::vector<Vec3>& ca) {
  const int n = static_cast<int>(ca.size());
  if (n < 3) throw std::invalid_argument("build_local_frames: need n >= 3");
  std::vector<Mat3> out(n);
  for (int i = 0; i < n; ++i) {
    Vec3 v1, v2;
    if (i == 0) {
      v1 = ca[1] - ca[0];
      v2 = ca[2] - ca[0];
    } else if (i == n - 1) {
      v1 = ca[n - 2] - ca[n - 1];
      v2 = ca[n - 3] - ca[n - 1];
    } else {
      v1 = ca[i + 1] - ca[i];
      v2 = ca[i - 1] - ca[i];
    }
    out[i] = frame_from(v1, v2);
  }
  return out;
}

}  // namespace

std::vector<LocalFrame> build_local_frames(const structio::Structure& s) {
  std::vector<Vec3> ca;
  ca.reserve(s.size());
  for (const auto& r : s.residues) ca.push_back(r.ca);
  const auto bases = bases_from_points(ca);
  std::vector<LocalFrame> out(bases.size());
  for (size_t i = 0; i < bases.size(); ++i) {
    out[i].basis = bases[i];
    out[i].origin = ca[i];
  }
  return out;
}

std::vector<Mat3> frame_bases_of_coords(const Tensor& coords) {
  const int n = coords.rows();
  std::vector<Vec3> ca(n);
  for (int i = 0; i < n; ++i)
    ca[i] = {coords.at(i, 0), coords.at(i, 1), coords.at(i, 2)};
  return bases_from_points(ca);
}

// --- encoder ---

EncoderNet::EncoderNet(const CodecConfig& c, uint64_t seed) : cfg(c) {
  Rng rng(hash_mix({0xe4cu, seed}));
  trunk = net::Trunk("encoder", cfg.trunk, rng);
  code_proj = net::LinearLayer("encoder.code", cfg.code_len, cfg.trunk.width, rng);
  head = net::LinearLayer("encoder.head", cfg.trunk.width, 3, rng, 0.0);
}

Tape::Id EncoderNet::forward(Tape& t, const structio::Structure& s,
                             const WatermarkCode& m, const LayerMode& mode) const {
  if (static_cast<int>(m.size()) != cfg.code_len)
    throw std::invalid_argument("encode: code length mismatch with encoder head");
  const Tensor coords = net::coords_tensor(s);
  const auto bases = frame_bases_of_coords(coords);
  const Tape::Id feats = t.constant(net::rbf_feature_values(coords, cfg.trunk.features));
  const Tape::Id code_row = t.constant(Tensor::row(m.as_pm1()));
  const Tape::Id inject = code_proj.forward(t, code_row, mode);
  const Tape::Id h = trunk.forward(t, feats, inject, mode);
  const Tape::Id raw = head.forward(t, h, mode);
  const Tape::Id disp = t.frame_apply(t.scale(t.tanh_(raw), cfg.delta_max), bases);
  return t.add(t.constant(coords), disp);
}

structio::Structure EncoderNet::encode(const structio::Structure& s,
                                       const WatermarkCode& m) const {
  Tape t;
  const Tape::Id xp = forward(t, s, m, LayerMode{/*trainable=*/false, nullptr});
  const Tensor& out = t.val(xp);
  structio::Structure w;
  w.chain_id = s.chain_id;
  w.residues.resize(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    w.residues[i].seq_index = s.residues[i].seq_index;
    w.residues[i].ca = {out.at(static_cast<int>(i), 0), out.at(static_cast<int>(i), 1),
                        out.at(static_cast<int>(i), 2)};
  }
  return w;
}

std::vector<net::Parameter*> EncoderNet::params() {
  std::vector<net::Parameter*> out;
  trunk.collect(out);
  code_proj.collect(out);
  head.collect(out);
  return out;
}

std::vector<const net::Parameter*> EncoderNet::params() const {
  auto mut = const_cast<EncoderNet*>(this)->params();
  return {mut.begin(), mut.end()};
}

// --- decoder ---

DecoderNet::DecoderNet(const CodecConfig& c, uint64_t seed) : cfg(c) {
  Rng rng(hash_mix({0xdecu, seed}));
  trunk = net::Trunk("decoder", cfg.trunk, rng);
  out = net::LinearLayer("decoder.out", cfg.trunk.width, cfg.code_len, rng);
}

Tape::Id DecoderNet::forward_logits(Tape& t, Tape::Id coords,
                                    const LayerMode& mode) const {
  if (t.val(coords).rows() < 3)
    throw std::invalid_argument("decode: need n >= 3");
  const Tape::Id feats = t.rbf_features(coords, cfg.trunk.features);
  const Tape::Id h = trunk.forward(t, feats, std::nullopt, mode);
  const Tape::Id pooled = t.mean_rows(h);
  return out.forward(t, pooled, mode);
}

Tensor DecoderNet::decode(const structio::Structure& s) const {
  Tape t;
  const Tape::Id coords = t.constant(net::coords_tensor(s));
  const Tape::Id logits = forward_logits(t, coords, LayerMode{false, nullptr});
  Tensor flat({cfg.code_len});
  flat.data = t.val(logits).data;
  return flat;
}

WatermarkCode DecoderNet::decode_bits(const structio::Structure& s) const {
  const Tensor logits = decode(s);
  std::vector<uint8_t> bits(logits.data.size());
  for (size_t i = 0; i < bits.size(); ++i) bits[i] = logits.data[i] > 0.0 ? 1 : 0;
  return WatermarkCode(std::move(bits));
}

std::vector<net::Parameter*> DecoderNet::params() {
  std::vector<net::Parameter*> p;
  trunk.collect(p);
  out.collect(p);
  return p;
}

std::vector<const net::Parameter*> DecoderNet::params() const {
  auto mut = const_cast<DecoderNet*>(this)->params();
  return {mut.begin(), mut.end()};
}

// --- augmentation ---

structio::Structure augment(const structio::Structure& s, const AugmentationSpec& spec) {
  structio::Structure out = s;
  switch (spec.kind) {
    case AugmentationSpec::Kind::kRigid: {
      const auto g = geom::random_rigid(spec.seed);
      out.set_coords(geom::apply_transform(s.coords(), g));
      return out;
    }
    case AugmentationSpec::Kind::kGaussianNoise: {
      if (spec.sigma < 0.0) throw std::invalid_argument("augment: sigma must be >= 0");
      Rng rng(hash_mix({0xa06u, spec.seed}));
      for (auto& r : out.residues) {
        r.ca.x += spec.sigma * rng.normal();
        r.ca.y += spec.sigma * rng.normal();
        r.ca.z += spec.sigma * rng.normal();
      }
      return out;
    }
    case AugmentationSpec::Kind::kCrop: {
      if (spec.keep_fraction <= 0.0 || spec.keep_fraction > 1.0)
        throw std::invalid_argument("augment: keep_fraction must be in (0, 1]");
      const int n = static_cast<int>(s.size());
      const int keep = static_cast<int>(std::ceil(spec.keep_fraction * n));
      if (keep < 3) throw Error("augment: crop keeps fewer than 3 residues");
      Rng rng(hash_mix({0xc409u, spec.seed}));
      const int off = static_cast<int>(rng.uniform_int(static_cast<uint32_t>(n - keep + 1)));
      out.residues.assign(s.residues.begin() + off, s.residues.begin() + off + keep);
      return out;
    }
  }
  return out;
}

DrawnAugmentation draw_augmentation(uint64_t seed, int n, double identity_prob) {
  Rng rng(hash_mix({0xd4a9u, seed}));
  DrawnAugmentation aug;
  if (rng.uniform() < identity_prob) return aug;
  switch (rng.uniform_int(3)) {
    case 0: {
      aug.kind = DrawnAugmentation::Kind::kRigid;
      aug.rigid = geom::random_rigid(rng.next_u64());
      break;
    }
    case 1: {
      aug.kind = DrawnAugmentation::Kind::kNoise;
      const double sigma = rng.uniform(0.05, 0.3);
      aug.noise = Tensor({n, 3});
      for (double& v : aug.noise.data) v = sigma * rng.normal();
      break;
    }
    case 2: {
      aug.kind = DrawnAugmentation::Kind::kCrop;
      const double keep = rng.uniform(0.5, 0.9);
      aug.crop_len = std::max(3, static_cast<int>(std::ceil(keep * n)));
      aug.crop_off =
          static_cast<int>(rng.uniform_int(static_cast<uint32_t>(n - aug.crop_len + 1)));
      break;
    }
  }
  return aug;
}

Tape::Id apply_augmentation(Tape& t, Tape::Id coords, const DrawnAugmentation& aug) {
  switch (aug.kind) {
    case DrawnAugmentation::Kind::kIdentity:
      return coords;
    case DrawnAugmentation::Kind::kRigid:
      return t.rigid_apply(coords, aug.rigid.rotation, aug.rigid.translation);
    case DrawnAugmentation::Kind::kNoise:
      return t.add(coords, t.constant(aug.noise));
    case DrawnAugmentation::Kind::kCrop:
      return t.row_slice(coords, aug.crop_off, aug.crop_len);
  }
  return coords;
}

// --- pretraining ---

namespace {

Tensor code_targets(const WatermarkCode& m) {
  Tensor t({static_cast<int>(m.size())});
  t.data = m.as01();
  return t;
}

double sign_match_fraction(const Tensor& logits, const WatermarkCode& m) {
  size_t hits = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    const bool pred = logits.data[i] > 0.0;
    hits += pred == (m.bits[i] != 0);
  }
  return static_cast<double>(hits) / static_cast<double>(m.size());
}

}  // namespace

CodecEval evaluate_codec(const EncoderNet& enc, const DecoderNet& dec,
                         const std::vector<const structio::DatasetEntry*>& items,
                         uint64_t seed) {
  std::vector<double> accs(items.size(), 0.0), rmsds(items.size(), 0.0);
  parallel_for(static_cast<int>(items.size()), [&](int i) {
    Rng rng(hash_mix({seed, static_cast<uint64_t>(i)}));
    const auto code = WatermarkCode::random(enc.cfg.code_len, rng);
    const auto& s = items[i]->structure;
    const auto watermarked = enc.encode(s, code);
    const Tensor logits = dec.decode(watermarked);
    accs[i] = sign_match_fraction(logits, code);
    rmsds[i] = geom::kabsch(watermarked.coords(), s.coords()).rmsd;
  });
  CodecEval ev;
  for (size_t i = 0; i < items.size(); ++i) {
    ev.bitacc += accs[i];
    ev.rmsd += rmsds[i];
  }
  if (!items.empty()) {
    ev.bitacc /= static_cast<double>(items.size());
    ev.rmsd /= static_cast<double>(items.size());
  }
  return ev;
}

PretrainResult pretrain(const structio::Dataset& d, const PretrainConfig& cfg) {
  if (d.entries.empty()) throw std::invalid_argument("pretrain: empty dataset");

  CodecConfig cc;
  cc.code_len = cfg.code_len;
  cc.delta_max = cfg.delta_max;
  cc.trunk = cfg.trunk;

  PretrainResult res;
  res.encoder = EncoderNet(cc, hash_mix({cfg.seed, 0x11u}));
  res.decoder = DecoderNet(cc, hash_mix({cfg.seed, 0x22u}));

  std::vector<net::Parameter*> params = res.encoder.params();
  for (auto* p : res.decoder.params()) params.push_back(p);
  net::Adam adam(params, cfg.adam);

  const auto batches = structio::batch_by_length(d, cfg.max_batch, structio::Split::kTrain);
  const auto val_items = d.split(structio::Split::kVal);
  const LayerMode train_mode{/*trainable=*/true, nullptr};
  const structio::DatasetEntry* base_ptr = d.entries.data();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = Rng(hash_mix({cfg.seed, 0xba7cULL, static_cast<uint64_t>(epoch)}))
                     .permutation(static_cast<uint32_t>(batches.size()));
    double epoch_bce = 0.0, epoch_struct = 0.0;
    size_t n_items = 0;

    for (const uint32_t bi : order) {
      const auto& batch = batches[bi];
      const double inv_b = 1.0 / static_cast<double>(batch.items.size());
      for (const auto* entry : batch.items) {
        const uint64_t item_index = static_cast<uint64_t>(entry - base_ptr);
        const uint64_t item_seed =
            hash_mix({cfg.seed, static_cast<uint64_t>(epoch), item_index});
        Rng rng(item_seed);
        const auto code = WatermarkCode::random(cfg.code_len, rng);
        const auto aug = draw_augmentation(rng.next_u64(),
                                           static_cast<int>(entry->structure.size()),
                                           cfg.aug_identity_prob);

        Tape t;
        const Tape::Id xprime =
            res.encoder.forward(t, entry->structure, code, train_mode);
        const Tape::Id disp =
            t.sub(xprime, t.constant(net::coords_tensor(entry->structure)));
        const Tape::Id augmented = apply_augmentation(t, xprime, aug);
        const Tape::Id logits = res.decoder.forward_logits(t, augmented, train_mode);
        const Tape::Id bce = t.bce_with_logits(logits, code_targets(code));
        const Tape::Id struct_loss = t.mean_row_norm(disp);
        const Tape::Id total =
            t.weighted_sum({{bce, inv_b}, {struct_loss, cfg.gamma * inv_b}});
        t.backward(total);

        epoch_bce += t.val(bce).data[0];
        epoch_struct += t.val(struct_loss).data[0];
        ++n_items;
      }
      adam.step();
    }

    PretrainEpochLog log;
    log.epoch = epoch;
    log.bce = n_items ? epoch_bce / static_cast<double>(n_items) : 0.0;
    log.struct_loss = n_items ? epoch_struct / static_cast<double>(n_items) : 0.0;
    const auto ev = evaluate_codec(res.encoder, res.decoder, val_items,
                                   hash_mix({cfg.seed, 0xe7a1ULL,
                                             static_cast<uint64_t>(epoch)}));
    log.val_bitacc = ev.bitacc;
    log.val_rmsd = ev.rmsd;
    res.log.push_back(log);
  }
  return res;
}

std::string pretrain_log_jsonl(const std::vector<PretrainEpochLog>& log) {
  std::ostringstream os;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["bce"] = e.bce;
    j["struct_loss"] = e.struct_loss;
    j["val_bitacc"] = e.val_bitacc;
    j["val_rmsd"] = e.val_rmsd;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace structmark::codec
