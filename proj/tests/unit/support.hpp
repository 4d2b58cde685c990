#pragma once

#include "viewgrasp/geometry.hpp"
#include "viewgrasp/random.hpp"

#include <Eigen/Geometry>

namespace test_support {

using namespace viewgrasp;

inline Pose random_pose(Rng& rng, double extent = 1.0) {
  Vec3 p(uniform01(rng), uniform01(rng), uniform01(rng));
  return {extent * (2.0 * p - Vec3::Ones()), uniform_quaternion(rng)};
}

inline Eigen::Matrix4d matrix_of(const Pose& v) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = v.q.toRotationMatrix();
  m.topRightCorner<3, 1>() = v.p;
  return m;
}

inline bool same_transform(const Pose& a, const Pose& b, double tol = 1e-9) {
  return (a.p - b.p).norm() <= tol && 1.0 - quat_abs_dot(a.q, b.q) <= tol;
}

}  // namespace test_support

namespace test_support {

inline bool identical(const viewgrasp::Pose& a, const viewgrasp::Pose& b) {
  return a.p == b.p && a.q.coeffs() == b.q.coeffs();
}

}  // namespace test_support
