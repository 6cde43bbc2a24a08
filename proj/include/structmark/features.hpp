#pragma once

#include "structmark/struct_io.hpp"
#include "structmark/tape.hpp"

namespace structmark::net {

// Per-residue invariant feature tensor of a structure: RBF-encoded Calpha
// distances to the k nearest sequence neighbors (k/2 on each side), blocks
// ordered by signed offset. Exactly invariant under rigid motion.
Tensor invariant_features(const structio::Structure& s, int k_neighbors);

FeaturePlan default_feature_plan(int k_neighbors);

// Coordinates as an [n x 3] tensor and back.
Tensor coords_tensor(const structio::Structure& s);
geom::CoordSet tensor_coords(const Tensor& t);

}  // namespace structmark::net
