#include "support.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/surface.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace viewgrasp;
using namespace test_support;

namespace {

constexpr double kPi = std::numbers::pi;

// Sphere cap around +z with half-angle `cap`, seen from far above.
PointCloud sphere_cap(double radius, double cap, std::size_t n, Rng& rng) {
  PointCloud c;
  c.viewpoint = Vec3(0, 0, 10 * radius);
  const double zmin = std::cos(cap);
  while (c.points.size() < n) {
    const double z = zmin + (1.0 - zmin) * uniform01(rng);
    const double phi = 2 * kPi * uniform01(rng);
    const double s = std::sqrt(1 - z * z);
    c.points.push_back(radius * Vec3(s * std::cos(phi), s * std::sin(phi), z));
  }
  return c;
}

// Cylinder patch with axis z, facing +x.
PointCloud cylinder_patch(double radius, double half_angle, double height, std::size_t n, Rng& rng) {
  PointCloud c;
  c.viewpoint = Vec3(10 * radius, 0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = half_angle * (2 * uniform01(rng) - 1);
    c.points.push_back(Vec3(radius * std::cos(a), radius * std::sin(a), height * (uniform01(rng) - 0.5)));
  }
  return c;
}

PointCloud plane_patch(double extent, std::size_t n, Rng& rng) {
  PointCloud c;
  c.viewpoint = Vec3(0.01, 0.02, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back(Vec3(extent * (uniform01(rng) - 0.5), extent * (uniform01(rng) - 0.5), 0.0));
  return c;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("surface") {
  TEST_CASE("plane normals point to the viewpoint") {
    Rng rng = substream(3, 0, 0);
    PointCloud c = plane_patch(0.2, 2000, rng);
    auto est = estimate_normals(c, 20);
    CHECK(est.dropped == 0);
    REQUIRE(est.cloud.has_normals());
    for (const auto& n : est.cloud.normals) CHECK(n.z() == doctest::Approx(1.0).epsilon(1e-9));
    c.viewpoint = Vec3(0, 0, -1);
    est = estimate_normals(c, 20);
    for (const auto& n : est.cloud.normals) CHECK(n.z() == doctest::Approx(-1.0).epsilon(1e-9));
  }

  TEST_CASE("sphere normals are radial") {
    Rng rng = substream(3, 1, 0);
    const PointCloud c = sphere_cap(1.0, 1.3, 5000, rng);
    const auto est = estimate_normals(c, 20);
    double worst = 0.0;
    for (std::size_t i = 0; i < est.cloud.size(); ++i)
      worst = std::max(worst, vector_angle(est.cloud.normals[i], est.cloud.points[i].normalized()));
    CHECK(worst < 5.0 * kPi / 180);
  }

  TEST_CASE("degenerate neighbourhoods are dropped") {
    PointCloud two;
    two.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    auto est = estimate_normals(two, 3);
    CHECK(est.cloud.size() == 0);
    CHECK(est.dropped == 2);

    PointCloud line;
    for (int i = 0; i < 50; ++i) line.points.push_back(Vec3(0.01 * i, 0, 0));
    est = estimate_normals(line, 10);
    CHECK(est.cloud.size() == 0);
    CHECK(est.dropped == 50);
    CHECK_THROWS_AS(estimate_normals(line, 2), std::invalid_argument);
  }

  TEST_CASE("plane curvature is zero") {
    Rng rng = substream(3, 2, 0);
    const auto est = estimate_normals(plane_patch(0.1, 3000, rng));
    const auto f = principal_curvature_features(est.cloud);
    for (const auto& x : f) {
      CHECK(std::abs(x.r[0]) < 1e-6);
      CHECK(std::abs(x.r[1]) < 1e-6);
      // umbilic: k1 follows global +x
      CHECK(x.pose.axis_x().x() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("sphere curvature is 1/R in both directions") {
    Rng rng = substream(3, 3, 0);
    const double R = 0.05;
    const auto est = estimate_normals(sphere_cap(R, 1.2, 5000, rng));
    const auto f = principal_curvature_features(est.cloud);
    std::vector<double> r1, r2;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (est.cloud.points[i].z() < R * std::cos(1.0)) continue;  // away from the rim
      r1.push_back(f[i].r[0]);
      r2.push_back(f[i].r[1]);
      CHECK(std::abs(f[i].r[0] * R - 1.0) < 0.1);
      CHECK(std::abs(f[i].r[1] * R - 1.0) < 0.1);
    }
    CHECK(median(r1) * R == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("cylinder curvature and principal directions") {
    Rng rng = substream(3, 4, 0);
    const double R = 0.03;
    const auto est = estimate_normals(cylinder_patch(R, 1.2, 0.1, 5000, rng));
    const auto f = principal_curvature_features(est.cloud);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Vec3& p = est.cloud.points[i];
      if (std::abs(p.z()) > 0.035 || std::abs(std::atan2(p.y(), p.x())) > 1.0) continue;
      CHECK(std::abs(f[i].r[0] * R - 1.0) < 0.1);
      CHECK(std::abs(f[i].r[1]) * R < 0.1);
      CHECK(std::abs(f[i].pose.axis_y().z()) > std::cos(5.0 * kPi / 180));
    }
  }

  TEST_CASE("frames are orthonormal with z along the normal") {
    Rng rng = substream(3, 5, 0);
    const auto est = estimate_normals(cylinder_patch(0.04, 1.0, 0.08, 1500, rng));
    const auto f = principal_curvature_features(est.cloud);
    REQUIRE(f.size() == est.cloud.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Mat3 m = f[i].pose.q.toRotationMatrix();
      CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-6);
      CHECK((f[i].pose.axis_z() - est.cloud.normals[i]).norm() < 1e-6);
      CHECK((f[i].pose.p - est.cloud.points[i]).norm() == 0.0);
      CHECK(f[i].r[0] >= f[i].r[1]);
    }
  }

  TEST_CASE("descriptors are invariant under rigid motion") {
    Rng rng = substream(3, 6, 0);
    const PointCloud c = sphere_cap(0.04, 1.0, 1500, rng);
    const PointCloud cyl = cylinder_patch(0.025, 1.0, 0.08, 1500, rng);
    for (const PointCloud* src : {&c, &cyl}) {
      const Pose T = random_pose(rng, 0.5);
      PointCloud moved = *src;
      for (auto& p : moved.points) p = T.apply(p);
      moved.viewpoint = T.apply(src->viewpoint);
      const auto a = principal_curvature_features(estimate_normals(*src).cloud);
      const auto b = principal_curvature_features(estimate_normals(moved).cloud);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].r - b[i].r).norm() < 1e-3);
    }
  }

  TEST_CASE("curvature features require normals") {
    Rng rng = substream(3, 7, 0);
    const PointCloud c = plane_patch(0.1, 100, rng);
    CHECK_THROWS_AS(principal_curvature_features(c), std::invalid_argument);
  }

  TEST_CASE("object view model has uniform weights") {
    Rng rng = substream(3, 8, 0);
    const auto m = build_object_view_model(sphere_cap(0.05, 1.0, 800, rng), Bandwidth{}, 25, 3, 4);
    CHECK(m.view_id == 3);
    CHECK(m.grasp_id == 4);
    double lo = 1, hi = 0;
    for (const auto& k : m.features.kernels()) {
      lo = std::min(lo, k.weight);
      hi = std::max(hi, k.weight);
    }
    CHECK(hi - lo == 0.0);
    CHECK(hi == doctest::Approx(1.0 / m.features.size()));
  }

  TEST_CASE("PLY round trip and errors") {
    Rng rng = substream(3, 9, 0);
    PointCloud c = sphere_cap(0.05, 1.0, 50, rng);
    c.viewpoint = Vec3(0.1, -0.2, 0.3);
    PointCloud back = parse_ply(format_ply(c));
    REQUIRE(back.size() == c.size());
    CHECK(!back.has_normals());
    CHECK((back.viewpoint - c.viewpoint).norm() < 1e-12);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK((back.points[i] - c.points[i]).norm() < 1e-12);

    c = estimate_normals(c).cloud;
    back = parse_ply(format_ply(c));
    REQUIRE(back.has_normals());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK((back.normals[i] - c.normals[i]).norm() < 1e-12);

    const std::string minimal =
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 2 3\n";
    CHECK(parse_ply(minimal).size() == 2);
    CHECK_THROWS_AS(parse_ply("not a ply"), FormatError);
    CHECK_THROWS_AS(parse_ply("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n"), FormatError);
    CHECK_THROWS_AS(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                              "property float z\nend_header\n0 0 0\n"),
                    FormatError);
    CHECK_THROWS_AS(parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                              "end_header\n0 0\n"),
                    FormatError);
    CHECK_THROWS_AS(load_ply("/nonexistent/cloud.ply"), FormatError);
  }
}
