#include "viewgrasp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace viewgrasp {

Pose::Pose(const Vec3& position, const Quat& orientation) : p(position), q(normalized(orientation)) {}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = q.toRotationMatrix();
  m.topRightCorner<3, 1>() = p;
  return m;
}

Quat normalized(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("quaternion has zero or non-finite norm");
  return Quat(q.coeffs() / n);
}

void require_finite(const Pose& v, const char* what) {
  if (!v.p.allFinite() || !v.q.coeffs().allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite component");
  if (v.q.norm() == 0.0) throw std::invalid_argument(std::string(what) + ": zero quaternion");
}

Pose compose(const Pose& a, const Pose& b) {
  require_finite(a, "compose lhs");
  require_finite(b, "compose rhs");
  Pose out;
  out.p = a.q * b.p + a.p;
  out.q = normalized(a.q * b.q);
  return out;
}

Pose inverse(const Pose& v) {
  require_finite(v, "inverse");
  Pose out;
  out.q = normalized(v.q.conjugate());
  out.p = -(out.q * v.p);
  return out;
}

Pose relative_link_pose(const Pose& v, const Pose& s) { return compose(inverse(v), s); }

double quat_abs_dot(const Quat& a, const Quat& b) { return std::abs(a.coeffs().dot(b.coeffs())); }

double rotation_angle(const Quat& a, const Quat& b) {
  return 2.0 * std::acos(std::clamp(quat_abs_dot(a, b), 0.0, 1.0));
}

double vector_angle(const Vec3& a, const Vec3& b) {
  const double c = a.normalized().dot(b.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Quat axis_angle(const Vec3& axis, double angle) { return Quat(Eigen::AngleAxisd(angle, axis.normalized())); }

Quat frame_from_axes(const Vec3& x_axis, const Vec3& z_axis) {
  const Vec3 z = z_axis.normalized();
  Vec3 x = x_axis - x_axis.dot(z) * z;
  if (x.norm() < 1e-12) {
    x = z.unitOrthogonal();
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return normalized(Quat(r));
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  return {eye, frame_from_axes(x, z)};
}

bool approx_equal(const Pose& a, const Pose& b, double lin_tol, double ang_tol) {
  return (a.p - b.p).norm() <= lin_tol && 1.0 - quat_abs_dot(a.q, b.q) <= ang_tol;
}

std::string to_string(const Pose& v) {
  std::ostringstream os;
  os.precision(17);
  os << v.p.x() << ' ' << v.p.y() << ' ' << v.p.z() << ' ' << v.q.x() << ' ' << v.q.y() << ' ' << v.q.z() << ' '
     << v.q.w();
  return os.str();
}

}  // namespace viewgrasp
