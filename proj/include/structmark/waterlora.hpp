#pragma once

#include <map>
#include <string>
#include <vector>

#include "structmark/layers.hpp"
#include "structmark/tensor.hpp"
#include "structmark/watermark.hpp"

namespace structmark::lora {

// Per-layer adapter: low-rank pair plus the code-to-gate map.
// A ~ N(0, 0.02^2), B = 0, W_g = 0, b_g = 1, so the merged weight equals the
// base weight at initialization for every code.
struct LayerAdapter {
  net::Parameter A;    // [out x r]
  net::Parameter B;    // [r x in]
  net::Parameter W_g;  // [out x l]
  net::Parameter b_g;  // [out]
};

struct AdapterSet {
  int rank = 16;
  int code_len = 8;
  double alpha = 1.0;
  // keyed by wrapped layer name; iteration order = name order (stable)
  std::map<std::string, LayerAdapter> by_layer;

  size_t wrapped_count() const { return by_layer.size(); }
  std::vector<net::Parameter*> params();
};

// Active watermark for one forward pass. Base weights always enter the tape
// as constants when a context is present; adapters are leaves only when
// train_adapters is set.
struct LoraContext {
  AdapterSet* adapters = nullptr;
  WatermarkCode code;
  bool train_adapters = false;

  LayerAdapter* find(const std::string& layer_name) const;
};

// --- value-level operations ---

// G = W_g * m + b_g with m as 0/1 vector
net::Tensor gate(const net::Tensor& w_g, const net::Tensor& b_g,
                 const WatermarkCode& m);

// dW[i][j] = g[i] * (A x B)[i][j]
net::Tensor delta_weights(const net::Tensor& g, const net::Tensor& a,
                          const net::Tensor& b);

// W + alpha * dW; base left unmodified
net::Tensor merge(const net::Tensor& base, const net::Tensor& delta, double alpha);

// --- attachment ---

// One adapter per linear layer (attention projections included), shaped to
// that layer; deterministic in seed.
AdapterSet make_adapters(const std::vector<net::LinearLayer*>& layers, int rank,
                         int code_len, double alpha, uint64_t seed);

// Tape-side merged weight used by LinearLayer::forward.
net::Tape::Id merged_weight(net::Tape& t, const net::Parameter& base_w,
                            LayerAdapter& ad, const LoraContext& ctx);

}  // namespace structmark::lora
