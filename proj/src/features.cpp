#include "structmark/features.hpp"

#include <stdexcept>

namespace structmark::net {

FeaturePlan default_feature_plan(int k_neighbors) {
  if (k_neighbors < 2)
    throw std::invalid_argument("invariant_features: k_neighbors must be >= 2");
  FeaturePlan plan;
  plan.k_half = k_neighbors / 2;
  return plan;
}

Tensor coords_tensor(const structio::Structure& s) {
  const int n = static_cast<int>(s.size());
  Tensor t({n, 3});
  for (int i = 0; i < n; ++i) {
    t.at(i, 0) = s.residues[i].ca.x;
    t.at(i, 1) = s.residues[i].ca.y;
    t.at(i, 2) = s.residues[i].ca.z;
  }
  return t;
}

geom::CoordSet tensor_coords(const Tensor& t) {
  geom::CoordSet c;
  const int n = t.rows();
  c.points.reserve(n);
  for (int i = 0; i < n; ++i)
    c.points.push_back({t.at(i, 0), t.at(i, 1), t.at(i, 2)});
  return c;
}

Tensor invariant_features(const structio::Structure& s, int k_neighbors) {
  return rbf_feature_values(coords_tensor(s), default_feature_plan(k_neighbors));
}

}  // namespace structmark::net
