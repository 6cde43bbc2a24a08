#include "structmark/geom.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "structmark/common.hpp"

namespace structmark::geom {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n < 1e-30) throw Error("cannot normalize near-zero vector");
  return {x / n, y / n, z / n};
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
      r(i, j) = s;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

bool RigidTransform::is_proper(double tol) const {
  const Mat3 rtr = rotation.transposed() * rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(rtr(i, j) - want) > tol) return false;
    }
  return std::abs(rotation.det() - 1.0) <= tol;
}

bool CoordSet::all_finite() const {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      return false;
  }
  return true;
}

CoordSet apply_transform(const CoordSet& c, const RigidTransform& g) {
  CoordSet out;
  out.points.reserve(c.points.size());
  for (const auto& p : c.points) out.points.push_back(g.rotation * p + g.translation);
  return out;
}

RigidTransform compose(const RigidTransform& g2, const RigidTransform& g1) {
  RigidTransform g;
  g.rotation = g2.rotation * g1.rotation;
  g.translation = g2.rotation * g1.translation + g2.translation;
  return g;
}

RigidTransform random_rigid(uint64_t seed) {
  Rng rng(hash_mix({0x5e3u, seed}));
  double q[4];
  for (double& qi : q) qi = rng.normal();
  double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (n < 1e-12) {
    q[0] = 1.0;
    n = 1.0;
  }
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;

  RigidTransform g;
  Mat3& r = g.rotation;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);

  g.translation = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0),
                   rng.uniform(-10.0, 10.0)};
  return g;
}

Vec3 centroid(const CoordSet& c) {
  Vec3 s;
  for (const auto& p : c.points) s += p;
  const double n = static_cast<double>(c.points.size());
  return {s.x / n, s.y / n, s.z / n};
}

static void check_rank2(const Eigen::MatrixXd& centered, const char* which) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  const double tol = std::max(1e-9, 1e-12 * sv(0));
  if (sv.size() < 2 || sv(1) <= tol)
    throw Error(std::string("kabsch: degenerate (rank < 2) point cloud: ") + which);
}

KabschResult kabsch(const CoordSet& mobile, const CoordSet& ref) {
  const size_t n = mobile.size();
  if (n != ref.size()) throw std::invalid_argument("kabsch: length mismatch");
  if (n < 3) throw std::invalid_argument("kabsch: need at least 3 points");

  Eigen::MatrixXd p(n, 3), q(n, 3);
  for (size_t i = 0; i < n; ++i) {
    p(i, 0) = mobile.points[i].x;
    p(i, 1) = mobile.points[i].y;
    p(i, 2) = mobile.points[i].z;
    q(i, 0) = ref.points[i].x;
    q(i, 1) = ref.points[i].y;
    q(i, 2) = ref.points[i].z;
  }
  const Eigen::RowVector3d pc = p.colwise().mean();
  const Eigen::RowVector3d qc = q.colwise().mean();
  const Eigen::MatrixXd pcen = p.rowwise() - pc;
  const Eigen::MatrixXd qcen = q.rowwise() - qc;
  check_rank2(pcen, "mobile");
  check_rank2(qcen, "ref");

  const Eigen::Matrix3d h = pcen.transpose() * qcen;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  const double d = (v * u.transpose()).determinant();
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(2, 2) = (d < 0.0) ? -1.0 : 1.0;  // sign fix on the smallest singular direction
  const Eigen::Matrix3d rot = v * s * u.transpose();

  KabschResult res;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) res.transform.rotation(i, j) = rot(i, j);
  const Eigen::Vector3d t = qc.transpose() - rot * pc.transpose();
  res.transform.translation = {t(0), t(1), t(2)};

  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 moved = res.transform.rotation * mobile.points[i] + res.transform.translation;
    const Vec3 dlt = moved - ref.points[i];
    ss += dlt.dot(dlt);
  }
  res.rmsd = std::sqrt(ss / static_cast<double>(n));
  return res;
}

}  // namespace structmark::geom
