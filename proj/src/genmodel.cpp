#include "structmark/genmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace structmark::gen {

using net::LayerMode;
using net::Tape;
using net::Tensor;

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = T == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

void DiffusionSchedule::validate() const {
  if (T < 1 || beta.empty()) throw Error("schedule: empty");
  if (!(beta.front() > 0.0) || !(beta.back() < 1.0) || beta.front() > beta.back())
    throw Error("schedule: need 0 < beta_1 <= beta_T < 1");
  for (int i = 1; i < T; ++i)
    if (!(alpha_bar[i] < alpha_bar[i - 1]))
      throw Error("schedule: alpha_bar must be strictly decreasing");
  if (!(alpha_bar.back() < 0.05)) throw Error("schedule: alpha_bar_T must be < 0.05");
}

static void check_step(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T)
    throw std::invalid_argument("diffusion step t out of range [1, T]");
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& noise,
                     const DiffusionSchedule& sched) {
  check_step(t, sched);
  if (!x0.same_shape(noise))
    throw std::invalid_argument("forward_noise: noise shape mismatch");
  const double a = std::sqrt(sched.abar(t));
  const double b = std::sqrt(1.0 - sched.abar(t));
  Tensor out = x0;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * x0.data[i] + b * noise.data[i];
  return out;
}

Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps,
                  const DiffusionSchedule& sched) {
  check_step(t, sched);
  if (!x_t.same_shape(eps))
    throw std::invalid_argument("predict_x0: eps shape mismatch");
  const double a = std::sqrt(sched.abar(t));
  const double b = std::sqrt(1.0 - sched.abar(t));
  Tensor out = x_t;
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (x_t.data[i] - b * eps.data[i]) / a;
  return out;
}

EpsNet::EpsNet(const GenConfig& c, uint64_t seed) : cfg(c) {
  Rng rng(hash_mix({0xe95u, seed}));
  trunk = net::Trunk("base", cfg.trunk, rng);
  time_proj = net::LinearLayer("base.time", cfg.time_dim, cfg.trunk.width, rng);
  head = net::LinearLayer("base.head", cfg.trunk.width, 3, rng, 0.0);
}

Tape::Id EpsNet::forward(Tape& t, Tape::Id coords_scaled, int step,
                         const LayerMode& mode) const {
  // featurize in Angstrom-commensurate units so the RBF centers are in range
  const Tape::Id unscaled = t.scale(coords_scaled, cfg.coord_scale);
  const Tape::Id feats = t.rbf_features(unscaled, cfg.trunk.features);
  const auto bases = codec::frame_bases_of_coords(t.val(coords_scaled));
  const Tape::Id temb = t.constant(net::sinusoidal_embedding(step, cfg.time_dim));
  const Tape::Id inject = time_proj.forward(t, temb, mode);
  const Tape::Id h = trunk.forward(t, feats, inject, mode);
  const Tape::Id raw = head.forward(t, h, mode);
  return t.frame_apply(raw, bases);
}

Tensor EpsNet::predict(const Tensor& x_t, int step, const lora::LoraContext* ctx) const {
  Tape t;
  const Tape::Id coords = t.constant(x_t);
  const LayerMode mode{/*trainable=*/false, ctx};
  const Tape::Id eps = forward(t, coords, step, mode);
  return t.val(eps);
}

std::vector<net::Parameter*> EpsNet::params() {
  std::vector<net::Parameter*> out;
  trunk.collect(out);
  time_proj.collect(out);
  head.collect(out);
  return out;
}

std::vector<const net::Parameter*> EpsNet::params() const {
  auto mut = const_cast<EpsNet*>(this)->params();
  return {mut.begin(), mut.end()};
}

std::vector<net::LinearLayer*> EpsNet::linear_layers() {
  auto out = trunk.linear_layers();
  out.push_back(&time_proj);
  out.push_back(&head);
  return out;
}

void center_rows(Tensor& coords) {
  const int n = coords.rows();
  if (n == 0) return;
  double mean[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) mean[j] += coords.at(i, j);
  for (double& m : mean) m /= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) coords.at(i, j) -= mean[j];
}

namespace {

Tensor centered_normals(int n, Rng& rng) {
  Tensor z({n, 3});
  for (double& v : z.data) v = rng.normal();
  center_rows(z);
  return z;
}

Tensor scaled_centered_coords(const structio::Structure& s, double scale) {
  Tensor x = net::coords_tensor(s);
  center_rows(x);
  for (double& v : x.data) v /= scale;
  return x;
}

}  // namespace

TrainBaseResult train_base(const structio::Dataset& d, const GenConfig& cfg) {
  if (d.entries.empty()) throw std::invalid_argument("train_base: empty dataset");
  TrainBaseResult res;
  res.schedule = DiffusionSchedule::linear(cfg.T, cfg.beta_start, cfg.beta_end);
  res.schedule.validate();
  res.model = EpsNet(cfg, hash_mix({cfg.seed, 0xb45eULL}));

  net::Adam adam(res.model.params(), cfg.adam);
  const auto batches = structio::batch_by_length(d, cfg.max_batch, structio::Split::kTrain);
  const LayerMode train_mode{true, nullptr};
  const structio::DatasetEntry* base_ptr = d.entries.data();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = Rng(hash_mix({cfg.seed, 0xb07cULL, static_cast<uint64_t>(epoch)}))
                     .permutation(static_cast<uint32_t>(batches.size()));
    double epoch_mse = 0.0;
    size_t n_items = 0;
    for (const uint32_t bi : order) {
      const auto& batch = batches[bi];
      const double inv_b = 1.0 / static_cast<double>(batch.items.size());
      for (const auto* entry : batch.items) {
        const uint64_t item_index = static_cast<uint64_t>(entry - base_ptr);
        Rng rng(hash_mix({cfg.seed, static_cast<uint64_t>(epoch), item_index}));
        const int n = static_cast<int>(entry->structure.size());
        const int step = 1 + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(cfg.T)));
        const Tensor x0 = scaled_centered_coords(entry->structure, cfg.coord_scale);
        const Tensor noise = centered_normals(n, rng);
        const Tensor x_t = forward_noise(x0, step, noise, res.schedule);

        Tape t;
        const Tape::Id eps = res.model.forward(t, t.constant(x_t), step, train_mode);
        const Tape::Id loss = t.mse_rows(eps, t.constant(noise));
        const Tape::Id total = t.weighted_sum({{loss, inv_b}});
        t.backward(total);
        epoch_mse += t.val(loss).data[0];
        ++n_items;
      }
      adam.step();
    }
    res.log.push_back({epoch, n_items ? epoch_mse / static_cast<double>(n_items) : 0.0});
  }
  return res;
}

structio::Structure sample(const EpsNet& model, const DiffusionSchedule& sched,
                           int n_residues, uint64_t seed,
                           const lora::LoraContext* ctx) {
  if (n_residues < 3) throw std::invalid_argument("sample: n_residues must be >= 3");
  Rng rng(hash_mix({0x5a3fULL, seed}));
  Tensor x = centered_normals(n_residues, rng);

  for (int t = sched.T; t >= 1; --t) {
    const Tensor eps = model.predict(x, t, ctx);
    const double a_t = sched.alpha[t - 1];
    const double abar_t = sched.abar(t);
    const double beta_t = sched.beta[t - 1];
    const double coef = beta_t / std::sqrt(1.0 - abar_t);
    Tensor mu = x;
    for (size_t i = 0; i < mu.data.size(); ++i)
      mu.data[i] = (x.data[i] - coef * eps.data[i]) / std::sqrt(a_t);
    if (t > 1) {
      const double abar_prev = sched.abar(t - 1);
      const double var = (1.0 - abar_prev) / (1.0 - abar_t) * beta_t;
      const double sd = std::sqrt(std::max(var, 0.0));
      const Tensor z = centered_normals(n_residues, rng);
      for (size_t i = 0; i < mu.data.size(); ++i) mu.data[i] += sd * z.data[i];
    }
    center_rows(mu);
    x = std::move(mu);
  }

  for (double& v : x.data) v *= model.cfg.coord_scale;
  center_rows(x);

  structio::Structure s;
  s.chain_id = 'A';
  s.residues.resize(n_residues);
  for (int i = 0; i < n_residues; ++i) {
    s.residues[i].seq_index = i + 1;
    s.residues[i].ca = {x.at(i, 0), x.at(i, 1), x.at(i, 2)};
  }
  return s;
}

}  // namespace structmark::gen
