#pragma once

#include <optional>
#include <vector>

#include "structmark/codec.hpp"
#include "structmark/layers.hpp"
#include "structmark/struct_io.hpp"
#include "structmark/waterlora.hpp"

namespace structmark::gen {

struct DiffusionSchedule {
  int T = 0;
  std::vector<double> beta;       // 1-indexed conceptually; beta[t-1]
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product

  static DiffusionSchedule linear(int T, double beta_start, double beta_end);

  double abar(int t) const { return alpha_bar.at(t - 1); }
  // throws Error if the schedule invariants fail
  void validate() const;
};

struct GenConfig {
  int T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.065;
  double coord_scale = 10.0;  // A per model unit
  int time_dim = 32;
  net::TrunkConfig trunk;
  int epochs = 30;
  int max_batch = 64;
  net::AdamConfig adam;
  uint64_t seed = 0;
};

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) noise, per coordinate
net::Tensor forward_noise(const net::Tensor& x0, int t, const net::Tensor& noise,
                          const DiffusionSchedule& sched);

// xhat = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t)
net::Tensor predict_x0(const net::Tensor& x_t, int t, const net::Tensor& eps,
                       const DiffusionSchedule& sched);

// Noise-prediction network over scaled Calpha chains: invariant features of
// the (unscaled) noisy coordinates + sinusoidal time embedding; output is a
// per-residue 3-vector expressed in local frames of x_t.
class EpsNet {
 public:
  EpsNet() = default;
  EpsNet(const GenConfig& cfg, uint64_t seed);

  net::Tape::Id forward(net::Tape& t, net::Tape::Id coords_scaled, int step,
                        const net::LayerMode& mode) const;

  // inference forward; lora context merges watermark weights when given
  net::Tensor predict(const net::Tensor& x_t, int step,
                      const lora::LoraContext* ctx = nullptr) const;

  std::vector<net::Parameter*> params();
  std::vector<const net::Parameter*> params() const;
  std::vector<net::LinearLayer*> linear_layers();
  int attention_count() { return trunk.attention_count(); }

  GenConfig cfg;
  net::Trunk trunk;
  net::LinearLayer time_proj;
  net::LinearLayer head;  // zero-initialized
};

struct TrainBaseLog {
  int epoch = 0;
  double mse = 0.0;
};

struct TrainBaseResult {
  EpsNet model;
  DiffusionSchedule schedule;
  std::vector<TrainBaseLog> log;
};

// Standard epsilon-matching diffusion training on centered, scaled chains.
TrainBaseResult train_base(const structio::Dataset& d, const GenConfig& cfg);

// Ancestral DDPM sampling. Fixed seed (and code, when a context is given)
// fully determines the output. Output is re-centered, Angstrom units.
structio::Structure sample(const EpsNet& model, const DiffusionSchedule& sched,
                           int n_residues, uint64_t seed,
                           const lora::LoraContext* ctx = nullptr);

// center rows at the origin (in place)
void center_rows(net::Tensor& coords);

}  // namespace structmark::gen
