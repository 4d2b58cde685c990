#include "viewgrasp/synthetic.hpp"

#include "viewgrasp/kdtree.hpp"
#include "viewgrasp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace viewgrasp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Primitive box(const Pose& pose, const Vec3& size) { return {PrimitiveKind::Box, pose, size}; }
Primitive cylinder(const Pose& pose, double radius, double height) {
  return {PrimitiveKind::Cylinder, pose, Vec3(radius, height, 0.0)};
}

Pose yawed(const Vec3& p, double yaw) { return {p, axis_angle(Vec3::UnitZ(), yaw)}; }

}  // namespace

LinkSampler::LinkSampler(const HandModel& hand, std::size_t per_link, std::uint64_t seed) {
  for (std::size_t i = 0; i < hand.num_links(); ++i) {
    Rng rng = substream(seed, 0, i);
    std::vector<Vec3> pts, nrm;
    hand.links()[i].geometry.sample_surface(per_link, Pose::identity(), rng, pts, nrm);
    local_.push_back(std::move(pts));
  }
}

double LinkSampler::clearance(int link, const Pose& link_pose, const Scene& scene) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : local_.at(link)) best = std::min(best, scene.sdf(link_pose.apply(p)));
  return best;
}

std::vector<double> LinkSampler::clearances(const std::vector<Pose>& link_poses, const Scene& scene) const {
  std::vector<double> out(local_.size());
  for (std::size_t i = 0; i < local_.size(); ++i) out[i] = clearance(static_cast<int>(i), link_poses[i], scene);
  return out;
}

std::vector<Vec3> LinkSampler::world_points(int link, const Pose& link_pose) const {
  std::vector<Vec3> out;
  for (const auto& p : local_.at(link)) out.push_back(link_pose.apply(p));
  return out;
}

Config open_config(const HandModel& hand, double spread) {
  Config h = hand.zero_config();
  for (const auto& l : hand.links())
    if (l.joint >= 0 && l.parent == 0) h[l.joint] = -spread;
  hand.clamp(h);
  return h;
}

Demonstration demonstrate(const HandModel& hand, const Scene& scene, const Pose& start, const DemoOptions& opt) {
  if (scene.empty()) throw std::invalid_argument("demonstrator needs a scene");
  Config h = opt.open.size() ? opt.open : open_config(hand);
  if (h.size() != hand.dof()) throw std::invalid_argument("open configuration does not match the hand");
  hand.clamp(h);
  const LinkSampler sampler(hand);
  Demonstration d;
  Pose w = start;
  {
    const auto cl = sampler.clearances(hand.forward_kinematics(w, h), scene);
    if (*std::min_element(cl.begin(), cl.end()) <= 0.0)
      throw std::runtime_error("demonstrator: start pose already intersects the object");
  }
  bool reached = false;
  for (double travel = 0.0; travel <= opt.max_travel; travel += opt.approach_step) {
    const auto cl = sampler.clearances(hand.forward_kinematics(w, h), scene);
    bool near = cl[0] <= opt.palm_standoff;
    for (std::size_t i = 1; i < cl.size(); ++i) near = near || cl[i] <= opt.link_standoff;
    if (near) {
      reached = true;
      break;
    }
    if (d.trajectory.empty() || (w.p - d.trajectory.back().p).norm() >= 0.01) d.trajectory.push_back(w);
    w.p += opt.approach_step * w.axis_z();
  }
  if (!reached) throw std::runtime_error("demonstrator: hand never reached the object");
  d.trajectory.push_back(w);

  // Links moved by each joint: the driven link and its descendants.
  const auto& links = hand.links();
  std::vector<std::vector<int>> moved(hand.dof());
  std::vector<int> joint_parent(hand.dof(), -1);
  for (std::size_t i = 0; i < links.size(); ++i) {
    for (int a = static_cast<int>(i); a > 0; a = links[a].parent)
      if (links[a].joint >= 0) moved[links[a].joint].push_back(static_cast<int>(i));
    if (links[i].joint >= 0 && links[i].parent > 0) joint_parent[links[i].joint] = links[links[i].parent].joint;
  }
  std::vector<char> frozen(hand.dof(), 0);
  auto freeze_chain = [&](int j) {
    for (; j >= 0; j = joint_parent[j]) frozen[j] = 1;
  };
  for (int iter = 0; iter < 10000; ++iter) {
    bool moved_any = false;
    for (int j = 0; j < hand.dof(); ++j) {
      if (frozen[j]) continue;
      if (h[j] + opt.joint_step > hand.joints()[j].upper) {
        frozen[j] = 1;
        continue;
      }
      h[j] += opt.joint_step;
      const auto poses = hand.forward_kinematics(w, h);
      double c = std::numeric_limits<double>::infinity();
      for (int l : moved[j]) c = std::min(c, sampler.clearance(l, poses[l], scene));
      if (c < 0.0) {
        h[j] -= opt.joint_step;
        freeze_chain(j);
      } else if (c <= opt.contact_tol) {
        freeze_chain(j);
      }
      moved_any = true;
    }
    if (!moved_any) break;
  }
  const auto cl = sampler.clearances(hand.forward_kinematics(w, h), scene);
  for (std::size_t i = 0; i < cl.size(); ++i) {
    if (cl[i] <= 2.0 * opt.contact_tol) d.contact_links.push_back(static_cast<int>(i));
    d.penetration = std::max(d.penetration, -cl[i]);
  }
  d.wrist = w;
  d.h_g = h;
  d.h_t = h - Config::Constant(h.size(), opt.pre_offset);
  hand.clamp(d.h_t);
  return d;
}

Pose top_down_wrist(const Vec3& target, double height, double yaw) {
  const Vec3 z(0.0, 0.0, -1.0);
  const Vec3 y(-std::sin(yaw), std::cos(yaw), 0.0);
  return {target + Vec3(0.0, 0.0, height), frame_from_axes(y.cross(z), z)};
}

Pose side_wrist(const Vec3& target, double distance, double azimuth, double roll) {
  const Vec3 out(std::cos(azimuth), std::sin(azimuth), 0.0);
  const Vec3 z = -out;
  const Vec3 y = axis_angle(z, roll) * Vec3::UnitZ();
  return {target + distance * out, frame_from_axes(y.cross(z), z)};
}

std::vector<Pose> ring_cameras(const Vec3& target, int count, double distance, double elevation_deg,
                               double azimuth0_deg) {
  if (count < 1) throw std::invalid_argument("camera count must be >= 1");
  std::vector<Pose> out;
  const double el = elevation_deg * kDeg;
  for (int k = 0; k < count; ++k) {
    const double az = (azimuth0_deg + 360.0 * k / count) * kDeg;
    const Vec3 eye = target + distance * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    out.push_back(look_at(eye, target));
  }
  return out;
}

GraspExample record_example(const std::string& name, const Scene& scene, const Demonstration& demo,
                            const std::vector<Pose>& cameras, const Intrinsics& intrinsics, double noise,
                            std::uint64_t seed) {
  GraspExample ex;
  ex.name = name;
  ex.wrist = demo.wrist;
  ex.trajectory = demo.trajectory;
  ex.h_g = demo.h_g;
  ex.h_t = demo.h_t;
  ex.cameras = cameras;
  for (std::size_t k = 0; k < cameras.size(); ++k)
    ex.views.push_back(simulate_depth_view(scene, cameras[k], intrinsics, noise, mix64(seed + k)));
  return ex;
}

namespace {

SyntheticTask with_camera(std::string name, Scene scene, const Pose& start, double azimuth_deg, double elevation_deg,
                          const Intrinsics& intrinsics = {80, 60, 40.0}) {
  scene.camera = ring_cameras(scene.centroid(), 1, 0.45, elevation_deg, azimuth_deg).front();
  scene.intrinsics = intrinsics;
  return {std::move(name), std::move(scene), start};
}

}  // namespace

SyntheticTask box_pinch_task() {
  Scene s({box(Pose::identity(), {0.05, 0.04, 0.08})});
  return with_camera("box_pinch", s, top_down_wrist({0, 0, 0.04}, 0.15, 0.0), -60.0, 40.0);
}

std::vector<SyntheticTask> training_tasks() {
  std::vector<SyntheticTask> t;
  t.push_back(box_pinch_task());
  {
    Scene s({box(yawed({0.0, 0.0, 0.0}, 0.5), {0.06, 0.035, 0.07})});
    t.push_back(with_camera("box_twisted", s, top_down_wrist({0, 0, 0.035}, 0.15, 0.5), 30.0, 40.0));
  }
  {
    Scene s({cylinder(Pose::identity(), 0.018, 0.1)});
    t.push_back(with_camera("cylinder_side", s, side_wrist({0, 0, 0.01}, 0.2, 0.0, std::numbers::pi / 2), 20.0, 35.0));
  }
  {
    Scene s({cylinder(Pose::identity(), 0.016, 0.09)});
    t.push_back(with_camera("cylinder_top", s, top_down_wrist({0, 0, 0.045}, 0.15, 0.3), -120.0, 45.0));
  }
  {
    Scene s({box(Pose::identity(), {0.03, 0.07, 0.05})});
    t.push_back(with_camera("box_side", s, side_wrist({0, 0, 0.0}, 0.2, std::numbers::pi / 2, std::numbers::pi / 2),
                            60.0, 35.0));
  }
  return t;
}

std::vector<SyntheticTask> test_suite(int count, std::uint64_t seed) {
  std::vector<SyntheticTask> out;
  for (int k = 0; k < count; ++k) {
    Rng rng = substream(seed, 0x7e57, k);
    auto u = [&](double a, double b) { return a + (b - a) * uniform01(rng); };
    const double yaw = u(-std::numbers::pi, std::numbers::pi);
    const Vec3 at(u(-0.03, 0.03), u(-0.03, 0.03), 0.0);
    Scene s;
    Pose start;
    std::string name;
    if (k % 2 == 0) {
      const Vec3 size(u(0.04, 0.07), u(0.025, 0.04), u(0.05, 0.09));
      s.add(box(yawed(at, yaw), size));
      start = top_down_wrist(at + Vec3(0, 0, size.z() / 2), 0.15, yaw);
      name = "suite_box_" + std::to_string(k);
    } else {
      const double r = u(0.012, 0.02), h = u(0.06, 0.1);
      s.add(cylinder(yawed(at, yaw), r, h));
      start = top_down_wrist(at + Vec3(0, 0, h / 2), 0.15, yaw);
      name = "suite_cylinder_" + std::to_string(k);
    }
    out.push_back(with_camera(name, s, start, u(-180.0, 180.0), u(30.0, 50.0)));
  }
  return out;
}

std::vector<SyntheticTask> thick_tasks() {
  std::vector<SyntheticTask> out;
  // Pinch axis along world y; the camera sits on the -y side so the +y face is hidden.
  const Vec3 sizes[] = {{0.04, 0.06, 0.07}, {0.035, 0.065, 0.08}, {0.045, 0.055, 0.06}};
  int k = 0;
  for (const auto& size : sizes) {
    Scene s({box(Pose::identity(), size)});
    out.push_back(with_camera("thick_" + std::to_string(k++), s, top_down_wrist({0, 0, size.z() / 2}, 0.15, 0.0),
                              -90.0, 20.0));
  }
  return out;
}

std::vector<GraspExample> demonstrate_tasks(const HandModel& hand, const std::vector<SyntheticTask>& tasks, int views,
                                            const Intrinsics& intrinsics, double noise, double elevation_deg,
                                            double azimuth0_deg) {
  std::vector<GraspExample> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    const auto& t = tasks[k];
    const Demonstration d = demonstrate(hand, t.scene, t.start);
    std::vector<Pose> cams;
    if (views == 1 && t.scene.camera)
      cams = {*t.scene.camera};
    else
      cams = ring_cameras(t.scene.centroid(), views, 0.45, elevation_deg, azimuth0_deg);
    out[k] = record_example(t.name, t.scene, d, cams, intrinsics, noise, k);
  });
  return out;
}

std::vector<Vec3> back_surface(const Scene& scene, const Pose& camera, double min_facing, std::size_t samples,
                               std::uint64_t seed) {
  Rng rng = substream(seed, 0xbacc, 0);
  std::vector<Vec3> pts, nrm, out;
  scene.sample_surface(samples, rng, pts, nrm);
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (nrm[i].dot((pts[i] - camera.p).normalized()) >= min_facing) out.push_back(pts[i]);
  return out;
}

double link_distance_to(const HandModel& hand, const Pose& h_w, const Config& h_c, const std::vector<Vec3>& points) {
  if (points.empty()) return std::numeric_limits<double>::infinity();
  const LinkSampler sampler(hand, 600);
  const KdTree<3> tree{std::vector<Vec3>(points)};
  const auto poses = hand.forward_kinematics(h_w, h_c);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (const auto& p : sampler.world_points(static_cast<int>(i), poses[i]))
      best = std::min(best, std::sqrt(tree.nearest(p).dist2));
  return best;
}

}  // namespace viewgrasp
