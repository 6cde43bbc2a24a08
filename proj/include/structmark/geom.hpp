#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace structmark::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;  // throws Error on near-zero norm
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  double det() const;
};

// Proper rotation + translation (SE(3)).
struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  // rotationT*rotation = I and det = +1, both within tol
  bool is_proper(double tol = 1e-10) const;
};

// Ordered point list, Angstrom units.
struct CoordSet {
  std::vector<Vec3> points;

  size_t size() const { return points.size(); }
  bool all_finite() const;
};

CoordSet apply_transform(const CoordSet& c, const RigidTransform& g);

// g2 after g1: (g2*g1)(x) = g2(g1(x))
RigidTransform compose(const RigidTransform& g2, const RigidTransform& g1);

// Rotation uniform over SO(3) via normalized quaternion of 4 standard
// normals; translation i.i.d. uniform in [-10, 10] per axis.
RigidTransform random_rigid(uint64_t seed);

struct KabschResult {
  RigidTransform transform;  // maps mobile onto ref
  double rmsd = 0.0;
};

// Least-RMSD superposition of mobile onto ref. Reflections are excluded by
// the determinant sign fix. Throws std::invalid_argument on length mismatch
// or n < 3, Error when either point cloud has rank < 2.
KabschResult kabsch(const CoordSet& mobile, const CoordSet& ref);

Vec3 centroid(const CoordSet& c);

}  // namespace structmark::geom
