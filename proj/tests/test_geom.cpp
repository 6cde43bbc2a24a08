#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "structmark/common.hpp"
#include "structmark/geom.hpp"

using namespace structmark;
using geom::CoordSet;
using geom::Mat3;
using geom::RigidTransform;
using geom::Vec3;

namespace {

CoordSet random_cloud(uint64_t seed, int n, double spread = 5.0) {
  Rng rng(seed);
  CoordSet c;
  for (int i = 0; i < n; ++i)
    c.points.push_back({spread * rng.normal(), spread * rng.normal(),
                        spread * rng.normal()});
  return c;
}

Mat3 euler_zyz(double a, double b, double g) {
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cg = std::cos(g), sg = std::sin(g);
  Mat3 rz1, ry, rz2;
  rz1(0, 0) = ca; rz1(0, 1) = -sa; rz1(0, 2) = 0;
  rz1(1, 0) = sa; rz1(1, 1) = ca;  rz1(1, 2) = 0;
  rz1(2, 0) = 0;  rz1(2, 1) = 0;   rz1(2, 2) = 1;
  ry(0, 0) = cb;  ry(0, 1) = 0; ry(0, 2) = sb;
  ry(1, 0) = 0;   ry(1, 1) = 1; ry(1, 2) = 0;
  ry(2, 0) = -sb; ry(2, 1) = 0; ry(2, 2) = cb;
  rz2(0, 0) = cg; rz2(0, 1) = -sg; rz2(0, 2) = 0;
  rz2(1, 0) = sg; rz2(1, 1) = cg;  rz2(1, 2) = 0;
  rz2(2, 0) = 0;  rz2(2, 1) = 0;   rz2(2, 2) = 1;
  return rz1 * (ry * rz2);
}

// rmsd at a given rotation with the optimal translation
double rmsd_at(const CoordSet& p, const CoordSet& q, const Mat3& rot) {
  const Vec3 pc = geom::centroid(p);
  const Vec3 qc = geom::centroid(q);
  double ss = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const Vec3 moved = rot * (p.points[i] - pc) + qc;
    const Vec3 d = moved - q.points[i];
    ss += d.dot(d);
  }
  return std::sqrt(ss / static_cast<double>(p.size()));
}

// Brute force over discretized rotations, then coordinate-descent refinement.
double brute_force_min_rmsd(const CoordSet& p, const CoordSet& q) {
  double best = 1e300;
  double ba = 0, bb = 0, bg = 0;
  const int na = 24, nb = 12, ng = 24;
  for (int ia = 0; ia < na; ++ia)
    for (int ib = 0; ib <= nb; ++ib)
      for (int ig = 0; ig < ng; ++ig) {
        const double a = ia * 2.0 * M_PI / na;
        const double b = ib * M_PI / nb;
        const double g = ig * 2.0 * M_PI / ng;
        const double r = rmsd_at(p, q, euler_zyz(a, b, g));
        if (r < best) {
          best = r;
          ba = a; bb = b; bg = g;
        }
      }
  double step = 2.0 * M_PI / na;
  while (step > 1e-7) {
    bool improved = false;
    const double deltas[6][3] = {{step, 0, 0}, {-step, 0, 0}, {0, step, 0},
                                 {0, -step, 0}, {0, 0, step}, {0, 0, -step}};
    for (const auto& d : deltas) {
      const double r = rmsd_at(p, q, euler_zyz(ba + d[0], bb + d[1], bg + d[2]));
      if (r < best) {
        best = r;
        ba += d[0]; bb += d[1]; bg += d[2];
        improved = true;
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

TEST_CASE("apply_transform basics") {
  CoordSet c = random_cloud(7, 10);

  SUBCASE("identity") {
    RigidTransform id;
    const CoordSet out = apply_transform(c, id);
    for (size_t i = 0; i < c.size(); ++i) {
      CHECK(out.points[i].x == c.points[i].x);
      CHECK(out.points[i].y == c.points[i].y);
      CHECK(out.points[i].z == c.points[i].z);
    }
  }

  SUBCASE("pure translation") {
    RigidTransform g;
    g.translation = {1.0, 0.0, 0.0};
    CoordSet one;
    one.points.push_back({0, 0, 0});
    const CoordSet out = apply_transform(one, g);
    CHECK(out.points[0].x == doctest::Approx(1.0));
    CHECK(out.points[0].y == doctest::Approx(0.0));
    CHECK(out.points[0].z == doctest::Approx(0.0));
  }

  SUBCASE("90 degree z rotation") {
    RigidTransform g;
    g.rotation = euler_zyz(M_PI / 2.0, 0.0, 0.0);
    CoordSet one;
    one.points.push_back({1, 0, 0});
    const CoordSet out = apply_transform(one, g);
    CHECK(std::abs(out.points[0].x - 0.0) < 1e-12);
    CHECK(std::abs(out.points[0].y - 1.0) < 1e-12);
    CHECK(std::abs(out.points[0].z - 0.0) < 1e-12);
  }
}

TEST_CASE("random_rigid determinism and invariants") {
  const auto g1 = geom::random_rigid(1234);
  const auto g2 = geom::random_rigid(1234);
  for (int i = 0; i < 9; ++i) CHECK(g1.rotation.m[i] == g2.rotation.m[i]);
  CHECK(g1.translation.x == g2.translation.x);
  CHECK(g1.translation.y == g2.translation.y);
  CHECK(g1.translation.z == g2.translation.z);

  for (uint64_t s = 0; s < 200; ++s) {
    const auto g = geom::random_rigid(s);
    CHECK(g.is_proper(1e-10));
    CHECK(std::abs(g.translation.x) <= 10.0);
    CHECK(std::abs(g.translation.y) <= 10.0);
    CHECK(std::abs(g.translation.z) <= 10.0);
  }
}

TEST_CASE("random_rigid rotations are SO(3)-uniform (Monte Carlo)") {
  // mean of a rotated fixed unit vector must vanish under uniformity
  double mx = 0, my = 0, mz = 0;
  const int n = 100000;
  for (int s = 0; s < n; ++s) {
    const auto g = geom::random_rigid(static_cast<uint64_t>(s));
    const Vec3 v = g.rotation * Vec3{1.0, 0.0, 0.0};
    mx += v.x;
    my += v.y;
    mz += v.z;
  }
  CHECK(std::abs(mx / n) < 0.02);
  CHECK(std::abs(my / n) < 0.02);
  CHECK(std::abs(mz / n) < 0.02);
}

TEST_CASE("kabsch trivial and invariance cases") {
  const CoordSet c = random_cloud(42, 12);

  SUBCASE("self rmsd is zero") {
    CHECK(geom::kabsch(c, c).rmsd < 1e-10);
  }

  SUBCASE("rigid copies superpose exactly") {
    for (uint64_t s = 0; s < 20; ++s) {
      const auto g = geom::random_rigid(s);
      const CoordSet moved = apply_transform(c, g);
      CHECK(geom::kabsch(moved, c).rmsd < 1e-8);
      CHECK(geom::kabsch(c, moved).rmsd < 1e-8);
    }
  }

  SUBCASE("errors") {
    CoordSet shorter = c;
    shorter.points.pop_back();
    CHECK_THROWS_AS(geom::kabsch(shorter, c), std::invalid_argument);

    CoordSet two;
    two.points = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(geom::kabsch(two, two), std::invalid_argument);

    CoordSet line;
    for (int i = 0; i < 5; ++i) line.points.push_back({double(i), 0, 0});
    CHECK_THROWS_AS(geom::kabsch(line, line), Error);
  }
}

TEST_CASE("kabsch matches brute-force rotational search") {
  CoordSet p;
  p.points = {{0, 0, 0}, {2.5, 0.3, -0.2}, {1.1, 2.2, 0.4}, {-0.7, 0.9, 1.9}};
  // noised, rotated copy
  const auto g = geom::random_rigid(77);
  CoordSet q = apply_transform(p, g);
  Rng rng(99);
  for (auto& pt : q.points) {
    pt.x += 0.15 * rng.normal();
    pt.y += 0.15 * rng.normal();
    pt.z += 0.15 * rng.normal();
  }
  const double fast = geom::kabsch(p, q).rmsd;
  const double brute = brute_force_min_rmsd(p, q);
  CHECK(std::abs(fast - brute) < 1e-3);
  CHECK(fast <= brute + 1e-9);  // kabsch is the true minimum
}

TEST_CASE("rmsd symmetry and composition properties") {
  for (uint64_t s = 0; s < 10; ++s) {
    const CoordSet a = random_cloud(hash_mix({s, 1ULL}), 8);
    CoordSet b = random_cloud(hash_mix({s, 2ULL}), 8);
    const double ab = geom::kabsch(a, b).rmsd;
    const double ba = geom::kabsch(b, a).rmsd;
    CHECK(std::abs(ab - ba) < 1e-10);

    const auto g1 = geom::random_rigid(hash_mix({s, 3ULL}));
    const auto g2 = geom::random_rigid(hash_mix({s, 4ULL}));
    const CoordSet lhs = apply_transform(apply_transform(a, g1), g2);
    const CoordSet rhs = apply_transform(a, geom::compose(g2, g1));
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(lhs.points[i].x - rhs.points[i].x) < 1e-10);
      CHECK(std::abs(lhs.points[i].y - rhs.points[i].y) < 1e-10);
      CHECK(std::abs(lhs.points[i].z - rhs.points[i].z) < 1e-10);
    }
  }
}
