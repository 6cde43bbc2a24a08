#include "structmark/waterlora.hpp"

#include <stdexcept>

namespace structmark::lora {

using net::Parameter;
using net::Tape;
using net::Tensor;

std::vector<Parameter*> AdapterSet::params() {
  std::vector<Parameter*> out;
  out.reserve(by_layer.size() * 4);
  for (auto& [name, ad] : by_layer) {
    out.push_back(&ad.A);
    out.push_back(&ad.B);
    out.push_back(&ad.W_g);
    out.push_back(&ad.b_g);
  }
  return out;
}

LayerAdapter* LoraContext::find(const std::string& layer_name) const {
  if (!adapters) return nullptr;
  const auto it = adapters->by_layer.find(layer_name);
  return it == adapters->by_layer.end() ? nullptr : &it->second;
}

Tensor gate(const Tensor& w_g, const Tensor& b_g, const WatermarkCode& m) {
  const int n = w_g.rows();
  const int l = w_g.cols();
  if (static_cast<size_t>(l) != m.size())
    throw std::invalid_argument("gate: code length mismatch");
  if (static_cast<int>(b_g.data.size()) != n)
    throw std::invalid_argument("gate: bias size mismatch");
  Tensor g({n});
  for (int i = 0; i < n; ++i) {
    double s = b_g.data[i];
    for (int j = 0; j < l; ++j) s += w_g.at(i, j) * static_cast<double>(m.bits[j]);
    g.data[i] = s;
  }
  return g;
}

Tensor delta_weights(const Tensor& g, const Tensor& a, const Tensor& b) {
  const int n = a.rows(), r = a.cols();
  const int m_cols = b.cols();
  if (b.rows() != r) throw std::invalid_argument("delta_weights: rank mismatch");
  if (static_cast<int>(g.data.size()) != n)
    throw std::invalid_argument("delta_weights: gate size mismatch");
  Tensor ab({n, m_cols});
  net::matmul_into(a, false, b, false, ab, false);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m_cols; ++j) ab.at(i, j) *= g.data[i];
  return ab;
}

Tensor merge(const Tensor& base, const Tensor& delta, double alpha) {
  if (!base.same_shape(delta))
    throw std::invalid_argument("merge: shape mismatch");
  Tensor out = base;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * delta.data[i];
  return out;
}

AdapterSet make_adapters(const std::vector<net::LinearLayer*>& layers, int rank,
                         int code_len, double alpha, uint64_t seed) {
  AdapterSet set;
  set.rank = rank;
  set.code_len = code_len;
  set.alpha = alpha;
  Rng rng(hash_mix({0x10aau, seed}));
  for (auto* layer : layers) {
    const int out = layer->out_dim();
    const int in = layer->in_dim();
    const int r = std::min(rank, std::min(out, in));
    LayerAdapter ad;
    Tensor a({out, r});
    for (double& v : a.data) v = 0.02 * rng.normal();
    ad.A = Parameter(layer->name() + ".lora.A", std::move(a));
    ad.B = Parameter(layer->name() + ".lora.B", Tensor::zeros({r, in}));
    ad.W_g = Parameter(layer->name() + ".lora.Wg", Tensor::zeros({out, code_len}));
    Tensor bg({out});
    for (double& v : bg.data) v = 1.0;  // neutral gate
    ad.b_g = Parameter(layer->name() + ".lora.bg", std::move(bg));
    set.by_layer.emplace(layer->name(), std::move(ad));
  }
  return set;
}

Tape::Id merged_weight(Tape& t, const Parameter& base_w, LayerAdapter& ad,
                       const LoraContext& ctx) {
  const Tape::Id w_base = t.constant(base_w.value);
  const double alpha = ctx.adapters->alpha;
  if (alpha == 0.0) return w_base;  // exact bitwise identity

  const Tape::Id a = ctx.train_adapters ? t.param(&ad.A) : t.constant(ad.A.value);
  const Tape::Id b = ctx.train_adapters ? t.param(&ad.B) : t.constant(ad.B.value);
  const Tape::Id wg =
      ctx.train_adapters ? t.param(&ad.W_g) : t.constant(ad.W_g.value);
  const Tape::Id bg =
      ctx.train_adapters ? t.param(&ad.b_g) : t.constant(ad.b_g.value);

  Tensor code({static_cast<int>(ctx.code.size())});
  for (size_t i = 0; i < ctx.code.size(); ++i)
    code.data[i] = static_cast<double>(ctx.code.bits[i]);

  const Tape::Id g = t.add(t.matvec(wg, t.constant(std::move(code))), bg);
  const Tape::Id dw = t.row_scale(t.matmul(a, b), g);
  return t.add_scaled(w_base, dw, alpha);
}

}  // namespace structmark::lora
