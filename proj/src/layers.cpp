#include "structmark/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "structmark/waterlora.hpp"

namespace structmark::net {

namespace {
Tensor gaussian_init(std::vector<int> shape, Rng& rng, double sd) {
  Tensor t(std::move(shape));
  if (sd > 0.0)
    for (double& v : t.data) v = sd * rng.normal();
  return t;
}
}  // namespace

LinearLayer::LinearLayer(std::string name, int in, int out, Rng& rng,
                         double init_scale)
    : name_(std::move(name)) {
  const double sd = init_scale < 0.0 ? 1.0 / std::sqrt(static_cast<double>(in))
                                     : init_scale;
  W = Parameter(name_ + ".W", gaussian_init({out, in}, rng, sd));
  b = Parameter(name_ + ".b", Tensor::zeros({out}));
}

Tape::Id LinearLayer::forward(Tape& t, Tape::Id x, const LayerMode& mode) const {
  Tape::Id w_id;
  Tape::Id b_id;
  lora::LayerAdapter* ad = mode.lora ? mode.lora->find(name_) : nullptr;
  if (ad != nullptr) {
    // base frozen behind the merge; gradients can only reach the adapter
    w_id = lora::merged_weight(t, W, *ad, *mode.lora);
    b_id = t.constant(b.value);
  } else if (mode.trainable) {
    w_id = t.param(&W);
    b_id = t.param(&b);
  } else {
    w_id = t.constant(W.value);
    b_id = t.constant(b.value);
  }
  return t.linear(x, w_id, b_id);
}

void LinearLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&W);
  out.push_back(&b);
}

AttentionLayer::AttentionLayer(std::string name, int width, int heads_in,
                               int bias_clip, Rng& rng)
    : q(name + ".q", width, width, rng),
      k(name + ".k", width, width, rng),
      v(name + ".v", width, width, rng),
      o(name + ".o", width, width, rng),
      heads(heads_in),
      clip(bias_clip) {
  if (width % heads != 0)
    throw std::invalid_argument("attention: width not divisible by heads");
  bias_table = Parameter(name + ".bias", Tensor::zeros({heads, 2 * clip + 1}));
}

Tape::Id AttentionLayer::forward(Tape& t, Tape::Id x, const LayerMode& mode) const {
  const int n = t.val(x).rows();
  const int width = q.out_dim();
  const int dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tape::Id qs = q.forward(t, x, mode);
  const Tape::Id ks = k.forward(t, x, mode);
  const Tape::Id vs = v.forward(t, x, mode);
  const Tape::Id bias_id =
      mode.trainable ? t.param(&bias_table) : t.constant(bias_table.value);

  std::vector<Tape::Id> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tape::Id qh = t.col_slice(qs, h * dh, dh);
    const Tape::Id kh = t.col_slice(ks, h * dh, dh);
    const Tape::Id vh = t.col_slice(vs, h * dh, dh);
    Tape::Id scores = t.scale(t.matmul(qh, kh, /*trans_b=*/true), inv_sqrt);
    scores = t.add(scores, t.pair_bias(bias_id, h, n, clip));
    const Tape::Id probs = t.softmax_rows(scores);
    head_outs.push_back(t.matmul(probs, vh));
  }
  const Tape::Id cat = heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
  return o.forward(t, cat, mode);
}

void AttentionLayer::collect(std::vector<Parameter*>& out) {
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
  out.push_back(&bias_table);
}

std::vector<LinearLayer*> AttentionLayer::projections() {
  return {&q, &k, &v, &o};
}

Trunk::Trunk(const std::string& name, const TrunkConfig& c, Rng& rng) : cfg(c) {
  in_proj_ = LinearLayer(name + ".in", cfg.features.feature_dim(), cfg.width, rng);
  blocks_.resize(cfg.blocks);
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string bn = name + ".block" + std::to_string(i);
    blocks_[i].attn = AttentionLayer(bn + ".attn", cfg.width, cfg.heads,
                                     cfg.bias_clip, rng);
    blocks_[i].mlp1 = LinearLayer(bn + ".mlp1", cfg.width, cfg.mlp_hidden, rng);
    blocks_[i].mlp2 = LinearLayer(bn + ".mlp2", cfg.mlp_hidden, cfg.width, rng);
  }
}

Tape::Id Trunk::forward(Tape& t, Tape::Id features, std::optional<Tape::Id> inject,
                        const LayerMode& mode) const {
  Tape::Id h = in_proj_.forward(t, features, mode);
  if (inject) h = t.row_broadcast_add(h, *inject);
  for (const auto& blk : blocks_) {
    h = t.add(h, blk.attn.forward(t, h, mode));
    h = t.add(h, blk.mlp2.forward(t, t.tanh_(blk.mlp1.forward(t, h, mode)), mode));
  }
  return h;
}

void Trunk::collect(std::vector<Parameter*>& out) {
  in_proj_.collect(out);
  for (auto& blk : blocks_) {
    blk.attn.collect(out);
    blk.mlp1.collect(out);
    blk.mlp2.collect(out);
  }
}

std::vector<LinearLayer*> Trunk::linear_layers() {
  std::vector<LinearLayer*> out{&in_proj_};
  for (auto& blk : blocks_) {
    for (auto* p : blk.attn.projections()) out.push_back(p);
    out.push_back(&blk.mlp1);
    out.push_back(&blk.mlp2);
  }
  return out;
}

Adam::Adam(std::vector<Parameter*> params, const AdamConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter& p = *params_[pi];
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace structmark::net
