#pragma once

#include <Eigen/Geometry>

#include <string>

namespace viewgrasp {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;  // stored (x, y, z, w): scalar-last, Hamilton product
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid-body pose: position p (meters) and unit quaternion q.
/// A pose maps local coordinates x to world coordinates q*x + p.
struct Pose {
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& position, const Quat& orientation);

  static Pose identity() { return {}; }
  static Pose translation(const Vec3& t) { return {t, Quat::Identity()}; }
  static Pose rotation(const Quat& r) { return {Vec3::Zero(), r}; }

  Vec3 apply(const Vec3& x) const { return q * x + p; }
  Vec3 axis_x() const { return q * Vec3::UnitX(); }
  Vec3 axis_y() const { return q * Vec3::UnitY(); }
  Vec3 axis_z() const { return q * Vec3::UnitZ(); }

  Mat4 matrix() const;
};

/// Rigid transform a applied after b: (a∘b)(x) = a(b(x)).
Pose compose(const Pose& a, const Pose& b);

/// (−q⁻¹p, q⁻¹).
Pose inverse(const Pose& v);

/// Pose of a link at s expressed in the frame v, i.e. v⁻¹∘s.
Pose relative_link_pose(const Pose& v, const Pose& s);

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Throws std::invalid_argument if any component is non-finite or q is zero.
void require_finite(const Pose& v, const char* what = "pose");

/// q scaled to unit norm. The sign is kept.
Quat normalized(const Quat& q);

/// |q1·q2|, the double-cover aware similarity of two orientations.
double quat_abs_dot(const Quat& a, const Quat& b);

/// Rotation angle between two orientations in radians, in [0, π].
double rotation_angle(const Quat& a, const Quat& b);

/// Angle between two direction vectors in radians.
double vector_angle(const Vec3& a, const Vec3& b);

Quat axis_angle(const Vec3& axis, double angle);

/// Orientation whose columns are (x, y, z); x and z are re-orthogonalized.
Quat frame_from_axes(const Vec3& x_axis, const Vec3& z_axis);

/// Orientation looking from `eye` at `target` with +z forward and the image
/// y-axis (down) roughly opposite `up`.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

bool approx_equal(const Pose& a, const Pose& b, double lin_tol = 1e-9, double ang_tol = 1e-9);

/// "px py pz qx qy qz qw"
std::string to_string(const Pose& v);

}  // namespace viewgrasp
