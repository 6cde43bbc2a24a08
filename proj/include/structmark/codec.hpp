#pragma once

#include <optional>
#include <string>
#include <vector>

#include "structmark/features.hpp"
#include "structmark/layers.hpp"
#include "structmark/struct_io.hpp"
#include "structmark/watermark.hpp"

namespace structmark::codec {

// Per-residue orthonormal frame (det +1), origin at the Calpha.
struct LocalFrame {
  geom::Mat3 basis;
  geom::Vec3 origin;
};

// Gram-Schmidt on (ca[i+1]-ca[i], ca[i-1]-ca[i]); termini use the two
// nearest chain neighbors on one side. Collinear triples fall back to
// completing e1 with the least-aligned coordinate axis.
std::vector<LocalFrame> build_local_frames(const structio::Structure& s);
std::vector<geom::Mat3> frame_bases_of_coords(const net::Tensor& coords);

struct CodecConfig {
  int code_len = 8;
  double delta_max = 1.0;  // per-axis displacement bound, A
  net::TrunkConfig trunk;
};

// Watermark encoder W(x, m): frame-local bounded displacement field driven
// by invariant features plus a learned code embedding. Equivariant under
// rigid motion by construction.
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(const CodecConfig& cfg, uint64_t seed);

  // x' id from a constant input structure (clean coords never need grads)
  net::Tape::Id forward(net::Tape& t, const structio::Structure& s,
                        const WatermarkCode& m, const net::LayerMode& mode) const;

  structio::Structure encode(const structio::Structure& s,
                             const WatermarkCode& m) const;

  std::vector<net::Parameter*> params();
  std::vector<const net::Parameter*> params() const;

  CodecConfig cfg;
  net::Trunk trunk;
  net::LinearLayer code_proj;  // l -> width, takes the code as +-1 row
  net::LinearLayer head;       // width -> 3, zero-initialized
};

// Watermark decoder D(x): invariant features -> trunk -> mean pool -> l
// logits. Invariant under rigid motion; accepts any length >= 3.
class DecoderNet {
 public:
  DecoderNet() = default;
  DecoderNet(const CodecConfig& cfg, uint64_t seed);

  net::Tape::Id forward_logits(net::Tape& t, net::Tape::Id coords,
                               const net::LayerMode& mode) const;

  net::Tensor decode(const structio::Structure& s) const;  // logits [l]
  WatermarkCode decode_bits(const structio::Structure& s) const;

  std::vector<net::Parameter*> params();
  std::vector<const net::Parameter*> params() const;

  CodecConfig cfg;
  net::Trunk trunk;
  net::LinearLayer out;
};

// --- augmentation pool f ---

struct AugmentationSpec {
  enum class Kind { kRigid, kGaussianNoise, kCrop };
  Kind kind = Kind::kRigid;
  double sigma = 0.0;          // gaussian noise, A
  double keep_fraction = 1.0;  // crop
  uint64_t seed = 0;
};

structio::Structure augment(const structio::Structure& s, const AugmentationSpec& spec);

// One draw from the training pool: identity with probability
// identity_prob, else uniform over rigid / noise(sigma in [0.05,0.3]) /
// crop(keep in [0.5,0.9]).
struct DrawnAugmentation {
  enum class Kind { kIdentity, kRigid, kNoise, kCrop } kind = Kind::kIdentity;
  geom::RigidTransform rigid;
  net::Tensor noise;  // [len x 3] when kind == kNoise
  int crop_off = 0;
  int crop_len = 0;
};

DrawnAugmentation draw_augmentation(uint64_t seed, int n, double identity_prob);
net::Tape::Id apply_augmentation(net::Tape& t, net::Tape::Id coords,
                                 const DrawnAugmentation& aug);

// --- Stage-1 pretraining ---

struct PretrainConfig {
  int code_len = 8;
  double gamma = 2.0;
  int epochs = 20;
  int max_batch = 64;
  net::AdamConfig adam;  // lr 1e-4 default
  uint64_t seed = 0;
  double delta_max = 1.0;
  double aug_identity_prob = 0.25;
  net::TrunkConfig trunk;
};

struct PretrainEpochLog {
  int epoch = 0;
  double bce = 0.0;
  double struct_loss = 0.0;
  double val_bitacc = 0.0;
  double val_rmsd = 0.0;
};

struct PretrainResult {
  EncoderNet encoder;
  DecoderNet decoder;
  std::vector<PretrainEpochLog> log;
};

// The Stage-1 objective for one item: BCE(D(f(W(x,m))), m) and the mean
// per-residue displacement norm. Shared by the training loop and tests.
struct PretrainLossIds {
  net::Tape::Id bce;
  net::Tape::Id struct_loss;
};
PretrainLossIds build_pretrain_losses(net::Tape& t, const EncoderNet& enc,
                                      const DecoderNet& dec,
                                      const structio::Structure& s,
                                      const WatermarkCode& m,
                                      const DrawnAugmentation& aug,
                                      const net::LayerMode& mode);

struct ItemLoss {
  double bce = 0.0;
  double struct_loss = 0.0;
};
ItemLoss pretrain_item_loss(const EncoderNet& enc, const DecoderNet& dec,
                            const structio::Structure& s, const WatermarkCode& m,
                            const DrawnAugmentation& aug);

PretrainResult pretrain(const structio::Dataset& d, const PretrainConfig& cfg);

// Mean held-out bit accuracy and watermark RMSD over entries (fresh random
// code per item, seeded).
struct CodecEval {
  double bitacc = 0.0;
  double rmsd = 0.0;
};
CodecEval evaluate_codec(const EncoderNet& enc, const DecoderNet& dec,
                         const std::vector<const structio::DatasetEntry*>& items,
                         uint64_t seed);

std::string pretrain_log_jsonl(const std::vector<PretrainEpochLog>& log);

}  // namespace structmark::codec
