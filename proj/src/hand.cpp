#include "viewgrasp/hand.hpp"

#include "viewgrasp/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <array>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace viewgrasp {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double sdf_box(const Vec3& x, const Vec3& half) {
  const Vec3 q = x.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double LinkShape::sdf(const Vec3& local) const {
  const Vec3 x = inverse(pose).apply(local);
  if (kind == ShapeKind::Box) return sdf_box(x, 0.5 * size);
  const double t = std::clamp(x.z(), 0.0, length);
  return (x - Vec3(0.0, 0.0, t)).norm() - radius;
}

double LinkShape::surface_area() const {
  constexpr double pi = std::numbers::pi;
  if (kind == ShapeKind::Box) return 2.0 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z());
  return 2.0 * pi * radius * length + 4.0 * pi * radius * radius;
}

void LinkShape::sample_surface(Rng& rng, Vec3& point, Vec3& normal) const {
  Vec3 x, n;
  if (kind == ShapeKind::Box) {
    const Vec3 h = 0.5 * size;
    const double axy = size.x() * size.y(), ayz = size.y() * size.z(), axz = size.x() * size.z();
    const double u = uniform01(rng) * (axy + ayz + axz);
    const double s = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    const double a = 2.0 * uniform01(rng) - 1.0, b = 2.0 * uniform01(rng) - 1.0;
    if (u < axy) {
      x = {a * h.x(), b * h.y(), s * h.z()};
      n = {0.0, 0.0, s};
    } else if (u < axy + ayz) {
      x = {s * h.x(), a * h.y(), b * h.z()};
      n = {s, 0.0, 0.0};
    } else {
      x = {a * h.x(), s * h.y(), b * h.z()};
      n = {0.0, s, 0.0};
    }
  } else {
    constexpr double pi = std::numbers::pi;
    const double side = 2.0 * pi * radius * length, caps = 4.0 * pi * radius * radius;
    if (uniform01(rng) * (side + caps) < side) {
      const double phi = 2.0 * pi * uniform01(rng);
      n = {std::cos(phi), std::sin(phi), 0.0};
      x = radius * n + Vec3(0.0, 0.0, length * uniform01(rng));
    } else {
      n = normal3(rng, 1.0).normalized();
      x = radius * n + Vec3(0.0, 0.0, n.z() > 0.0 ? length : 0.0);
    }
  }
  point = pose.apply(x);
  normal = pose.q * n;
}

double LinkGeometry::signed_distance(const Vec3& world, const Pose& link_pose) const {
  const Vec3 local = inverse(link_pose).apply(world);
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : shapes) d = std::min(d, s.sdf(local));
  return d;
}

double LinkGeometry::surface_distance(const Vec3& world, const Pose& link_pose) const {
  return std::abs(signed_distance(world, link_pose));
}

namespace {

void shape_bound(const LinkShape& s, Vec3& c, double& r) {
  if (s.kind == ShapeKind::Box) {
    c = s.pose.p;
    r = 0.5 * s.size.norm();
  } else {
    c = s.pose.apply(Vec3(0.0, 0.0, 0.5 * s.length));
    r = 0.5 * s.length + s.radius;
  }
}

}  // namespace

Vec3 LinkGeometry::bound_center() const {
  Vec3 acc = Vec3::Zero();
  for (const auto& s : shapes) {
    Vec3 c;
    double r;
    shape_bound(s, c, r);
    acc += c;
  }
  return shapes.empty() ? acc : Vec3(acc / static_cast<double>(shapes.size()));
}

double LinkGeometry::bound_radius() const {
  const Vec3 center = bound_center();
  double out = 0.0;
  for (const auto& s : shapes) {
    Vec3 c;
    double r;
    shape_bound(s, c, r);
    out = std::max(out, (c - center).norm() + r);
  }
  return out;
}

void LinkGeometry::sample_surface(std::size_t count, const Pose& link_pose, Rng& rng, std::vector<Vec3>& points,
                                  std::vector<Vec3>& normals) const {
  points.clear();
  normals.clear();
  if (shapes.empty()) return;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& s : shapes) cumulative.push_back(acc += s.surface_area());
  std::size_t attempts = 0;
  while (points.size() < count && attempts < 50 * count) {
    ++attempts;
    Vec3 x, n;
    shapes[sample_cumulative(rng, cumulative)].sample_surface(rng, x, n);
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : shapes) d = std::min(d, s.sdf(x));
    if (d < -1e-9) continue;  // buried inside another shape
    points.push_back(link_pose.apply(x));
    normals.push_back(link_pose.q * n);
  }
}

HandModel::HandModel(std::vector<Link> links, std::vector<Joint> joints)
    : links_(std::move(links)), joints_(std::move(joints)) {
  if (links_.empty()) throw std::invalid_argument("hand has no links");
  if (links_[0].parent != -1 || links_[0].joint != -1) throw std::invalid_argument("first link must be the palm root");
  std::vector<int> joint_use(joints_.size(), 0);
  for (std::size_t i = 1; i < links_.size(); ++i) {
    const auto& l = links_[i];
    if (l.parent < 0 || l.parent >= static_cast<int>(i))
      throw std::invalid_argument("link '" + l.name + "': parent must precede the link");
    if (l.joint < 0 || l.joint >= static_cast<int>(joints_.size()))
      throw std::invalid_argument("link '" + l.name + "': missing joint");
    ++joint_use[l.joint];
  }
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    if (joint_use[j] != 1) throw std::invalid_argument("every joint must drive exactly one link");
    const auto& jt = joints_[j];
    if (!std::isfinite(jt.lower) || !std::isfinite(jt.upper) || jt.lower > jt.upper)
      throw std::invalid_argument("joint limits must be finite with lower <= upper");
    if (!(jt.axis.norm() > 0.0)) throw std::invalid_argument("joint axis must be nonzero");
    joints_[j].axis.normalize();
  }
  for (std::size_t i = 0; i < links_.size(); ++i) links_[i].geometry.link_id = static_cast<int>(i);
}

int HandModel::link_index(const std::string& name) const {
  for (std::size_t i = 0; i < links_.size(); ++i)
    if (links_[i].name == name) return static_cast<int>(i);
  return -1;
}

int HandModel::clamp(Config& h_c) const {
  if (h_c.size() != dof())
    throw std::invalid_argument("configuration has " + std::to_string(h_c.size()) + " joints, hand has " +
                                std::to_string(dof()));
  int n = 0;
  for (int j = 0; j < dof(); ++j) {
    const double c = std::clamp(h_c[j], joints_[j].lower, joints_[j].upper);
    if (c != h_c[j]) ++n;
    h_c[j] = c;
  }
  return n;
}

std::vector<Pose> HandModel::link_rest_poses(const Config& h_c) const {
  Config h = h_c;
  clamp(h);
  std::vector<Pose> out(links_.size());
  for (std::size_t i = 1; i < links_.size(); ++i) {
    const auto& l = links_[i];
    const auto& j = joints_[l.joint];
    out[i] = compose(out[l.parent], compose(j.origin, Pose::rotation(axis_angle(j.axis, h[l.joint]))));
  }
  return out;
}

std::vector<Pose> HandModel::forward_kinematics(const Pose& h_w, const Config& h_c) const {
  require_finite(h_w, "wrist pose");
  auto poses = link_rest_poses(h_c);
  for (auto& p : poses) p = compose(h_w, p);
  return poses;
}

Pose HandModel::solve_wrist(int link, const Pose& s_i, const Config& h_c) const {
  if (link < 0 || link >= static_cast<int>(links_.size())) throw std::invalid_argument("link index out of range");
  return compose(s_i, inverse(link_rest_poses(h_c)[link]));
}

HandModel default_hand() {
  std::vector<Link> links;
  std::vector<Joint> joints;
  Link palm;
  palm.name = "palm";
  LinkShape box;
  box.kind = ShapeKind::Box;
  box.pose = Pose::translation({0.0, 0.0, 0.01});
  box.size = {0.08, 0.06, 0.02};
  palm.geometry.shapes.push_back(box);
  links.push_back(palm);

  auto capsule = [](double length) {
    LinkShape c;
    c.kind = ShapeKind::Capsule;
    c.radius = 0.009;
    c.length = length;
    return c;
  };
  struct FingerSpec {
    const char* name;
    Vec3 base;
    Vec3 axis;
  };
  const FingerSpec fingers[] = {{"finger1", {0.025, 0.03, 0.02}, Vec3::UnitX()},
                                {"finger2", {-0.025, 0.03, 0.02}, Vec3::UnitX()},
                                {"thumb", {0.0, -0.03, 0.02}, -Vec3::UnitX()}};
  for (const auto& f : fingers) {
    Joint prox{Pose::translation(f.base), f.axis, -0.8, 1.6};
    joints.push_back(prox);
    Link p;
    p.name = std::string(f.name) + "_proximal";
    p.parent = 0;
    p.joint = static_cast<int>(joints.size()) - 1;
    p.geometry.shapes.push_back(capsule(0.05));
    links.push_back(p);

    Joint dist{Pose::translation({0.0, 0.0, 0.05}), f.axis, -0.2, 1.6};
    joints.push_back(dist);
    Link d;
    d.name = std::string(f.name) + "_distal";
    d.parent = static_cast<int>(links.size()) - 1;
    d.joint = static_cast<int>(joints.size()) - 1;
    d.geometry.shapes.push_back(capsule(0.04));
    links.push_back(d);
  }
  return HandModel(std::move(links), std::move(joints));
}

namespace {

json pose_json(const Pose& p) { return {p.p.x(), p.p.y(), p.p.z(), p.q.x(), p.q.y(), p.q.z(), p.q.w()}; }

Pose pose_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 7) throw FormatError(where + ": pose must be [px,py,pz,qx,qy,qz,qw]");
  std::array<double, 7> v{};
  for (int i = 0; i < 7; ++i) v[i] = j[i].get<double>();
  const Quat q(v[6], v[3], v[4], v[5]);
  if (!(q.norm() > 0.0)) throw FormatError(where + ": zero quaternion");
  return {Vec3(v[0], v[1], v[2]), q};
}

Vec3 vec_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw FormatError(where + ": expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

HandModel parse_hand_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("hand file: ") + e.what());
  }
  try {
    if (doc.value("schema", "") != "viewgrasp.hand") throw FormatError("hand file: schema must be 'viewgrasp.hand'");
    if (doc.value("version", 0) != 1) throw FormatError("hand file: unsupported version");
    std::vector<Link> links;
    std::vector<Joint> joints;
    std::map<std::string, int> index;
    for (const auto& jl : doc.at("links")) {
      Link l;
      l.name = jl.at("name").get<std::string>();
      if (index.count(l.name)) throw FormatError("hand file: duplicate link '" + l.name + "'");
      if (jl.contains("parent") && !jl["parent"].is_null()) {
        const auto parent = jl["parent"].get<std::string>();
        if (!index.count(parent)) throw FormatError("hand file: link '" + l.name + "' has unknown parent '" + parent + "'");
        l.parent = index[parent];
        const auto& jj = jl.at("joint");
        Joint j;
        j.origin = pose_from(jj.at("origin"), l.name + ".joint.origin");
        j.axis = vec_from(jj.at("axis"), l.name + ".joint.axis");
        const auto& lim = jj.at("limits");
        if (!lim.is_array() || lim.size() != 2) throw FormatError("hand file: limits must be [lower, upper]");
        j.lower = lim[0].get<double>();
        j.upper = lim[1].get<double>();
        joints.push_back(j);
        l.joint = static_cast<int>(joints.size()) - 1;
      }
      for (const auto& js : jl.at("shapes")) {
        LinkShape s;
        const auto type = js.at("type").get<std::string>();
        s.pose = js.contains("pose") ? pose_from(js["pose"], l.name + ".shape.pose") : Pose::identity();
        if (type == "capsule") {
          s.kind = ShapeKind::Capsule;
          s.radius = js.at("radius").get<double>();
          s.length = js.at("length").get<double>();
          if (!(s.radius > 0.0) || !(s.length >= 0.0)) throw FormatError("hand file: bad capsule dimensions");
        } else if (type == "box") {
          s.kind = ShapeKind::Box;
          s.size = vec_from(js.at("size"), l.name + ".shape.size");
          if (!(s.size.minCoeff() > 0.0)) throw FormatError("hand file: bad box dimensions");
        } else {
          throw FormatError("hand file: unknown shape type '" + type + "'");
        }
        l.geometry.shapes.push_back(s);
      }
      if (l.geometry.shapes.empty()) throw FormatError("hand file: link '" + l.name + "' has no shapes");
      index[l.name] = static_cast<int>(links.size());
      links.push_back(std::move(l));
    }
    return HandModel(std::move(links), std::move(joints));
  } catch (const json::exception& e) {
    throw FormatError(std::string("hand file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("hand file: ") + e.what());
  }
}

HandModel load_hand(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open hand file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_hand_json(ss.str());
}

std::string hand_to_json(const HandModel& hand) {
  json doc;
  doc["schema"] = "viewgrasp.hand";
  doc["version"] = 1;
  json links = json::array();
  for (const auto& l : hand.links()) {
    json jl;
    jl["name"] = l.name;
    if (l.parent < 0) {
      jl["parent"] = nullptr;
    } else {
      const auto& j = hand.joints()[l.joint];
      jl["parent"] = hand.links()[l.parent].name;
      jl["joint"] = {{"origin", pose_json(j.origin)},
                     {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                     {"limits", {j.lower, j.upper}}};
    }
    json shapes = json::array();
    for (const auto& s : l.geometry.shapes) {
      if (s.kind == ShapeKind::Capsule)
        shapes.push_back({{"type", "capsule"}, {"pose", pose_json(s.pose)}, {"radius", s.radius}, {"length", s.length}});
      else
        shapes.push_back({{"type", "box"}, {"pose", pose_json(s.pose)}, {"size", {s.size.x(), s.size.y(), s.size.z()}}});
    }
    jl["shapes"] = shapes;
    links.push_back(jl);
  }
  doc["links"] = links;
  return doc.dump(2);
}

Config interpolate_config(const Config& h_g, const Config& h_t, double gamma) {
  if (h_g.size() != h_t.size()) throw std::invalid_argument("h_g and h_t differ in dimension");
  return (1.0 - gamma) * h_g + gamma * h_t;
}

double config_weight(const Config& h_g, const Config& h_t, double gamma, double alpha) {
  return std::exp(-alpha * (interpolate_config(h_g, h_t, gamma) - h_g).squaredNorm());
}

HandConfigModel::HandConfigModel(const Config& h_g, const Config& h_t, const ConfigModelParams& params)
    : h_g_(h_g), h_t_(h_t), params_(params) {
  if (h_g.size() != h_t.size()) throw std::invalid_argument("h_g and h_t differ in dimension");
  if (h_g.size() == 0) throw std::invalid_argument("empty configuration");
  if (!(params.beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (!(params.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(params.sigma_hc > 0.0)) throw std::invalid_argument("sigma_hc must be > 0");
  if (params.n_c < 1) throw std::invalid_argument("N_C must be >= 1");
  const int n = params.n_c;
  gammas_.resize(n);
  for (int k = 0; k < n; ++k) gammas_[k] = n == 1 ? 0.0 : -params.beta + 2.0 * params.beta * k / (n - 1.0);
  const double d2 = (h_t - h_g).squaredNorm();
  double total = 0.0;
  weights_.resize(n);
  for (int k = 0; k < n; ++k) total += weights_[k] = std::exp(-params.alpha * gammas_[k] * gammas_[k] * d2);
  double acc = 0.0;
  cumulative_.resize(n);
  for (int k = 0; k < n; ++k) {
    weights_[k] /= total;
    cumulative_[k] = acc += weights_[k];
  }
}

double HandConfigModel::eval(const Config& h_c) const { return std::exp(log_eval(h_c)); }

double HandConfigModel::log_eval(const Config& h_c) const {
  if (empty()) throw InvalidState("hand configuration model is empty");
  if (h_c.size() != h_g_.size()) throw std::invalid_argument("configuration dimension mismatch");
  const double s = params_.sigma_hc, s2 = s * s;
  const auto dim = static_cast<double>(h_c.size());
  const Config d = h_t_ - h_g_;
  const double len = d.norm();
  const Config x = h_c - h_g_;
  if (len < 1e-12) return -0.5 * x.squaredNorm() / s2 - 0.5 * dim * (kLog2Pi + std::log(s2));
  // Centers lie on a line: split into the offset along it and the perpendicular part.
  const double a = x.dot(d) / len;
  const double perp2 = std::max(0.0, x.squaredNorm() - a * a);
  const double log_perp = -0.5 * perp2 / s2 - 0.5 * (dim - 1.0) * (kLog2Pi + std::log(s2));
  const int n = static_cast<int>(gammas_.size());
  int lo = 0, hi = n - 1;
  if (n > 1) {
    const double step = gammas_[1] - gammas_[0];
    const double g0 = gammas_[0];
    lo = std::max(0, static_cast<int>(std::floor(((a - 12.0 * s) / len - g0) / step)));
    hi = std::min(n - 1, static_cast<int>(std::ceil(((a + 12.0 * s) / len - g0) / step)));
    if (lo > hi) lo = hi = (a / len < g0) ? 0 : n - 1;
  }
  std::vector<double> terms;
  terms.reserve(hi - lo + 1);
  for (int k = lo; k <= hi; ++k) {
    if (weights_[k] <= 0.0) continue;
    const double e = a - gammas_[k] * len;
    terms.push_back(std::log(weights_[k]) - 0.5 * e * e / s2);
  }
  if (terms.empty()) return -std::numeric_limits<double>::infinity();
  return log_perp + logsumexp(terms) - 0.5 * (kLog2Pi + std::log(s2));
}

Config HandConfigModel::sample(Rng& rng) const {
  if (empty()) throw InvalidState("hand configuration model is empty");
  Config c = center(sample_cumulative(rng, cumulative_));
  for (int j = 0; j < c.size(); ++j) c[j] += params_.sigma_hc * normal01(rng);
  return c;
}

HandConfigModel build_config_model(const Config& h_g, const Config& h_t, const ConfigModelParams& params) {
  return HandConfigModel(h_g, h_t, params);
}

}  // namespace viewgrasp
