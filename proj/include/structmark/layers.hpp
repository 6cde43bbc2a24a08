#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "structmark/common.hpp"
#include "structmark/tape.hpp"
#include "structmark/tensor.hpp"

namespace structmark::lora {
struct LoraContext;
}

namespace structmark::net {

// How layer parameters enter a tape: as trainable leaves or frozen
// constants, optionally with WaterLoRA-merged weights.
struct LayerMode {
  bool trainable = true;
  const lora::LoraContext* lora = nullptr;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  // init_scale < 0 selects 1/sqrt(in); 0 gives an exactly-zero layer
  LinearLayer(std::string name, int in, int out, Rng& rng, double init_scale = -1.0);

  Tape::Id forward(Tape& t, Tape::Id x, const LayerMode& mode) const;

  int in_dim() const { return W.value.cols(); }
  int out_dim() const { return W.value.rows(); }
  const std::string& name() const { return name_; }
  void collect(std::vector<Parameter*>& out);

  mutable Parameter W;  // [out x in]
  mutable Parameter b;  // [out]

 private:
  std::string name_;
};

// Scaled dot-product attention over residue positions with an additive
// learned bias per clipped sequence offset (one bucket row per head).
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(std::string name, int width, int heads, int bias_clip, Rng& rng);

  Tape::Id forward(Tape& t, Tape::Id x, const LayerMode& mode) const;

  void collect(std::vector<Parameter*>& out);
  std::vector<LinearLayer*> projections();

  LinearLayer q, k, v, o;
  mutable Parameter bias_table;  // [heads x (2*clip+1)]
  int heads = 1;
  int clip = 32;
};

struct TrunkConfig {
  int width = 64;
  int blocks = 2;
  int heads = 4;
  int mlp_hidden = 128;
  int bias_clip = 32;
  FeaturePlan features;
};

// Invariant message-passing stack: per-residue RBF features -> linear
// embedding (+ optional injected conditioning row) -> residual attention/MLP
// blocks. Geometry enters only through the invariant features.
class Trunk {
 public:
  Trunk() = default;
  Trunk(const std::string& name, const TrunkConfig& cfg, Rng& rng);

  // features: [n x F]; inject: optional [1 x width] row added to every residue
  Tape::Id forward(Tape& t, Tape::Id features, std::optional<Tape::Id> inject,
                   const LayerMode& mode) const;

  void collect(std::vector<Parameter*>& out);
  std::vector<LinearLayer*> linear_layers();
  int attention_count() const { return static_cast<int>(blocks_.size()); }

  TrunkConfig cfg;

 private:
  struct Block {
    AttentionLayer attn;
    LinearLayer mlp1, mlp2;
  };
  LinearLayer in_proj_;
  std::vector<Block> blocks_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam; grads are zeroed after each step.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, const AdamConfig& cfg);

  void step();
  int64_t step_count() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace structmark::net
