#include "viewgrasp/scene.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/surface.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace viewgrasp {

namespace {

double sdf_box(const Vec3& x, const Vec3& half) {
  const Vec3 q = x.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Box in the (radial, axial) half-plane, revolved about z.
double sdf_revolved_box(const Vec3& x, double radial_center, double half_radial, double half_height) {
  const Eigen::Vector2d d(std::abs(x.head<2>().norm() - radial_center) - half_radial, std::abs(x.z()) - half_height);
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

}  // namespace

double Primitive::sdf(const Vec3& world) const {
  const Vec3 x = inverse(pose).apply(world);
  switch (kind) {
    case PrimitiveKind::Box:
      return sdf_box(x, 0.5 * dims);
    case PrimitiveKind::Cylinder:
      return sdf_revolved_box(x, 0.0, dims[0], 0.5 * dims[1]);
    case PrimitiveKind::Sphere:
      return x.norm() - dims[0];
    case PrimitiveKind::Tube:
      return sdf_revolved_box(x, 0.5 * (dims[0] + dims[1]), 0.5 * (dims[0] - dims[1]), 0.5 * dims[2]);
  }
  return std::numeric_limits<double>::infinity();
}

double Primitive::surface_area() const {
  constexpr double pi = std::numbers::pi;
  switch (kind) {
    case PrimitiveKind::Box:
      return 2.0 * (dims.x() * dims.y() + dims.y() * dims.z() + dims.x() * dims.z());
    case PrimitiveKind::Cylinder:
      return 2.0 * pi * dims[0] * dims[1] + 2.0 * pi * dims[0] * dims[0];
    case PrimitiveKind::Sphere:
      return 4.0 * pi * dims[0] * dims[0];
    case PrimitiveKind::Tube:
      return 2.0 * pi * (dims[0] + dims[1]) * dims[2] + 2.0 * pi * (dims[0] * dims[0] - dims[1] * dims[1]);
  }
  return 0.0;
}

Vec3 Primitive::sample_surface(Rng& rng) const {
  constexpr double pi = std::numbers::pi;
  Vec3 x;
  switch (kind) {
    case PrimitiveKind::Box: {
      const Vec3 h = 0.5 * dims;
      const double axy = dims.x() * dims.y(), ayz = dims.y() * dims.z(), axz = dims.x() * dims.z();
      const double u = uniform01(rng) * (axy + ayz + axz);
      const double s = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double a = 2.0 * uniform01(rng) - 1.0, b = 2.0 * uniform01(rng) - 1.0;
      if (u < axy)
        x = {a * h.x(), b * h.y(), s * h.z()};
      else if (u < axy + ayz)
        x = {s * h.x(), a * h.y(), b * h.z()};
      else
        x = {a * h.x(), s * h.y(), b * h.z()};
      break;
    }
    case PrimitiveKind::Cylinder: {
      const double r = dims[0], h = dims[1];
      const double side = 2.0 * pi * r * h, cap = pi * r * r;
      const double phi = 2.0 * pi * uniform01(rng);
      if (uniform01(rng) * (side + 2.0 * cap) < side) {
        x = {r * std::cos(phi), r * std::sin(phi), (uniform01(rng) - 0.5) * h};
      } else {
        const double rr = r * std::sqrt(uniform01(rng));
        x = {rr * std::cos(phi), rr * std::sin(phi), (uniform01(rng) < 0.5 ? -0.5 : 0.5) * h};
      }
      break;
    }
    case PrimitiveKind::Sphere: {
      Vec3 d = normal3(rng, 1.0);
      x = dims[0] * d.normalized();
      break;
    }
    case PrimitiveKind::Tube: {
      const double ro = dims[0], ri = dims[1], h = dims[2];
      const double outer = 2.0 * pi * ro * h, inner = 2.0 * pi * ri * h, ring = pi * (ro * ro - ri * ri);
      const double u = uniform01(rng) * (outer + inner + 2.0 * ring);
      const double phi = 2.0 * pi * uniform01(rng);
      if (u < outer) {
        x = {ro * std::cos(phi), ro * std::sin(phi), (uniform01(rng) - 0.5) * h};
      } else if (u < outer + inner) {
        x = {ri * std::cos(phi), ri * std::sin(phi), (uniform01(rng) - 0.5) * h};
      } else {
        const double rr = std::sqrt(ri * ri + uniform01(rng) * (ro * ro - ri * ri));
        x = {rr * std::cos(phi), rr * std::sin(phi), (uniform01(rng) < 0.5 ? -0.5 : 0.5) * h};
      }
      break;
    }
  }
  return pose.apply(x);
}

double Intrinsics::focal() const { return 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0); }

double Scene::sdf(const Vec3& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& p : primitives_) d = std::min(d, p.sdf(x));
  return d;
}

Vec3 Scene::normal(const Vec3& x) const {
  constexpr double h = 1e-6;
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = h;
    g[i] = sdf(x + e) - sdf(x - e);
  }
  const double n = g.norm();
  return n > 0.0 ? Vec3(g / n) : Vec3::UnitZ();
}

std::optional<double> Scene::raycast(const Vec3& origin, const Vec3& dir, double t_max) const {
  double t = 0.0;
  for (int it = 0; it < 1024 && t < t_max; ++it) {
    const double d = sdf(origin + t * dir);
    if (d < 1e-9) return t;
    t += d;
  }
  return std::nullopt;
}

Vec3 Scene::centroid() const {
  Vec3 c = Vec3::Zero();
  double total = 0.0;
  for (const auto& p : primitives_) {
    const double a = p.surface_area();
    c += a * p.pose.p;
    total += a;
  }
  return total > 0.0 ? Vec3(c / total) : c;
}

void Scene::sample_surface(std::size_t count, Rng& rng, std::vector<Vec3>& points, std::vector<Vec3>& normals) const {
  points.clear();
  normals.clear();
  if (primitives_.empty()) return;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& p : primitives_) cumulative.push_back(acc += p.surface_area());
  std::size_t attempts = 0;
  while (points.size() < count && attempts < 50 * count) {
    ++attempts;
    const Vec3 x = primitives_[sample_cumulative(rng, cumulative)].sample_surface(rng);
    if (std::abs(sdf(x)) > 1e-7) continue;  // inside another primitive
    points.push_back(x);
    normals.push_back(normal(x));
  }
}

namespace {

std::vector<double> numbers_of(std::istringstream& in) {
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    std::replace(tok.begin(), tok.end(), ',', ' ');
    std::istringstream t(tok);
    double x;
    while (t >> x) v.push_back(x);
  }
  return v;
}

Pose pose_of(const std::vector<double>& v, std::size_t offset, int line_no) {
  if (v.size() < offset + 7) throw FormatError("scene line " + std::to_string(line_no) + ": expected a 7-number pose");
  const Quat q(v[offset + 6], v[offset + 3], v[offset + 4], v[offset + 5]);
  if (q.norm() < 1e-12) throw FormatError("scene line " + std::to_string(line_no) + ": zero quaternion");
  return {Vec3(v[offset], v[offset + 1], v[offset + 2]), q};
}

}  // namespace

Pose parse_pose(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (v.size() != 7) throw FormatError("pose needs 7 numbers: px py pz qx qy qz qw");
  return pose_of(v, 0, 0);
}

Scene parse_scene(const std::string& text) {
  Scene scene;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  std::vector<Pose> group;  // open composite frames
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream in(line);
    std::string kw;
    if (!(in >> kw)) continue;
    const auto v = numbers_of(in);
    const Pose frame = group.empty() ? Pose::identity() : group.back();
    auto need = [&](std::size_t n) {
      if (v.size() != n)
        throw FormatError("scene line " + std::to_string(line_no) + ": '" + kw + "' expects " + std::to_string(n) +
                          " numbers");
    };
    if (kw == "camera") {
      need(7);
      scene.camera = pose_of(v, 0, line_no);
    } else if (kw == "intrinsics") {
      need(3);
      scene.intrinsics = {static_cast<int>(v[0]), static_cast<int>(v[1]), v[2]};
      if (scene.intrinsics.width <= 0 || scene.intrinsics.height <= 0 || !(v[2] > 0.0 && v[2] < 180.0))
        throw FormatError("scene line " + std::to_string(line_no) + ": bad intrinsics");
    } else if (kw == "composite") {
      need(7);
      group.push_back(compose(frame, pose_of(v, 0, line_no)));
    } else if (kw == "end") {
      if (group.empty()) throw FormatError("scene line " + std::to_string(line_no) + ": 'end' without composite");
      group.pop_back();
    } else {
      Primitive p;
      if (kw == "box") {
        need(10);
        p.kind = PrimitiveKind::Box;
        p.dims = {v[7], v[8], v[9]};
      } else if (kw == "cylinder") {
        need(9);
        p.kind = PrimitiveKind::Cylinder;
        p.dims = {v[7], v[8], 0.0};
      } else if (kw == "sphere") {
        need(8);
        p.kind = PrimitiveKind::Sphere;
        p.dims = {v[7], 0.0, 0.0};
      } else if (kw == "tube") {
        need(10);
        p.kind = PrimitiveKind::Tube;
        p.dims = {v[7], v[8], v[9]};
        if (!(v[8] < v[7])) throw FormatError("scene line " + std::to_string(line_no) + ": tube inner >= outer");
      } else {
        throw FormatError("scene line " + std::to_string(line_no) + ": unknown keyword '" + kw + "'");
      }
      if (!(p.dims.maxCoeff() > 0.0) || p.dims.minCoeff() < 0.0)
        throw FormatError("scene line " + std::to_string(line_no) + ": dimensions must be positive");
      p.pose = compose(frame, pose_of(v, 0, line_no));
      scene.add(p);
    }
  }
  if (!group.empty()) throw FormatError("scene: unterminated composite");
  return scene;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scene file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string format_scene(const Scene& scene) {
  std::ostringstream os;
  os.precision(17);
  if (scene.camera) os << "camera " << to_string(*scene.camera) << '\n';
  os << "intrinsics " << scene.intrinsics.width << ' ' << scene.intrinsics.height << ' ' << scene.intrinsics.fov_deg
     << '\n';
  for (const auto& p : scene.primitives()) {
    switch (p.kind) {
      case PrimitiveKind::Box:
        os << "box " << to_string(p.pose) << ' ' << p.dims.x() << ' ' << p.dims.y() << ' ' << p.dims.z();
        break;
      case PrimitiveKind::Cylinder:
        os << "cylinder " << to_string(p.pose) << ' ' << p.dims[0] << ' ' << p.dims[1];
        break;
      case PrimitiveKind::Sphere:
        os << "sphere " << to_string(p.pose) << ' ' << p.dims[0];
        break;
      case PrimitiveKind::Tube:
        os << "tube " << to_string(p.pose) << ' ' << p.dims[0] << ' ' << p.dims[1] << ' ' << p.dims[2];
        break;
    }
    os << '\n';
  }
  return os.str();
}

PointCloud simulate_depth_view(const Scene& scene, const Pose& camera, const Intrinsics& in, double noise_std,
                               std::uint64_t seed) {
  require_finite(camera, "camera");
  if (in.width <= 0 || in.height <= 0) throw std::invalid_argument("camera resolution must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
  if (scene.sdf(camera.p) <= 0.0) throw std::invalid_argument("camera is inside the scene geometry");
  const double f = in.focal();
  PointCloud cloud;
  cloud.viewpoint = camera.p;
  Rng rng = substream(seed, 0x5ce7e, 0);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) {
      const Vec3 local((u + 0.5 - 0.5 * in.width) / f, (v + 0.5 - 0.5 * in.height) / f, 1.0);
      const Vec3 dir = (camera.q * local).normalized();
      if (auto t = scene.raycast(camera.p, dir)) {
        const double depth = *t + (noise_std > 0.0 ? noise(rng) : 0.0);
        cloud.points.push_back(camera.p + depth * dir);
      }
    }
  }
  if (cloud.points.empty()) throw std::runtime_error("simulated view is empty: no ray hit the scene");
  return cloud;
}

}  // namespace viewgrasp
