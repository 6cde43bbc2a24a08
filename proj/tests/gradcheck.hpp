#pragma once

// Central-finite-difference gradient checking shared by the unit tests and
// the acceptance suite. The closure evaluates the loss from current
// parameter values; when accumulate_grads is set it must also run backward
// so analytic gradients land in Parameter::grad.

#include <cmath>
#include <functional>
#include <vector>

#include "structmark/common.hpp"
#include "structmark/tensor.hpp"

namespace gradcheck {

struct Result {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline Result check(std::vector<structmark::net::Parameter*> params,
                    const std::function<double(bool)>& run,
                    uint64_t seed = 1, int max_entries_per_param = 25,
                    double h = 1e-5) {
  using structmark::net::Tensor;
  for (auto* p : params) p->zero_grad();
  run(/*accumulate_grads=*/true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  Result res;
  structmark::Rng rng(structmark::hash_mix({0x9cadULL, seed}));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    const size_t n = p->value.data.size();
    const size_t step = n <= static_cast<size_t>(max_entries_per_param)
                            ? 1
                            : n / max_entries_per_param;
    for (size_t i = rng.uniform_int(static_cast<uint32_t>(step)); i < n; i += step) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double fp = run(false);
      p->value.data[i] = orig - h;
      const double fm = run(false);
      p->value.data[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic[pi].data[i];
      const double denom = std::max({1e-6, std::abs(fd), std::abs(ad)});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - ad) / denom);
      ++res.checked;
    }
  }
  for (auto* p : params) p->zero_grad();
  return res;
}

}  // namespace gradcheck
