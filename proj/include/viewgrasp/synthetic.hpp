#pragma once

// Synthetic experiment harness: a scripted demonstrator that approaches and
// closes the hand on ground-truth geometry, camera rigs, and the scene sets
// used for training, testing and the thick-object study.

#include "viewgrasp/hand.hpp"
#include "viewgrasp/pipeline.hpp"
#include "viewgrasp/scene.hpp"

#include <string>
#include <vector>

namespace viewgrasp {

/// Fixed link-surface samples for clearance queries against a scene.
class LinkSampler {
 public:
  LinkSampler() = default;
  LinkSampler(const HandModel& hand, std::size_t per_link = 400, std::uint64_t seed = 0x11e4);

  /// Smallest scene signed distance over each link's samples.
  std::vector<double> clearances(const std::vector<Pose>& link_poses, const Scene& scene) const;
  double clearance(int link, const Pose& link_pose, const Scene& scene) const;
  /// World-frame samples of one link.
  std::vector<Vec3> world_points(int link, const Pose& link_pose) const;

 private:
  std::vector<std::vector<Vec3>> local_;
};

struct DemoOptions {
  Config open;                 // starting configuration; empty = fingers splayed
  double approach_step = 0.001;
  double max_travel = 0.4;
  double palm_standoff = 0.006;  // stop when the palm is this close
  double link_standoff = 0.002;  // or any other link is this close
  double joint_step = 0.01;
  double contact_tol = 0.0015;
  double pre_offset = 0.3;       // h_t = h_g − pre_offset
};

struct Demonstration {
  Pose wrist;
  Config h_g, h_t;
  std::vector<Pose> trajectory;
  std::vector<int> contact_links;
  double penetration = 0.0;
};

/// Configuration with every proximal joint opened by `spread` radians.
Config open_config(const HandModel& hand, double spread = 0.3);

/// Moves the wrist along its +z from `start` until contact is near, then closes
/// each joint in small steps until its link touches (or would penetrate).
Demonstration demonstrate(const HandModel& hand, const Scene& scene, const Pose& start, const DemoOptions& opt = {});

/// Wrist above `target` pointing straight down with the pinch axis (wrist y) at `yaw`.
Pose top_down_wrist(const Vec3& target, double height, double yaw);
/// Wrist approaching `target` horizontally from azimuth `azimuth`, pinch axis vertical when `roll` = 0.
Pose side_wrist(const Vec3& target, double distance, double azimuth, double roll = 0.0);

/// Cameras on a ring around `target` looking at it.
std::vector<Pose> ring_cameras(const Vec3& target, int count, double distance, double elevation_deg,
                               double azimuth0_deg = 0.0);

/// Demonstration plus depth views from each camera.
GraspExample record_example(const std::string& name, const Scene& scene, const Demonstration& demo,
                            const std::vector<Pose>& cameras, const Intrinsics& intrinsics, double noise = 0.0,
                            std::uint64_t seed = 0);

struct SyntheticTask {
  std::string name;
  Scene scene;  // carries the test camera
  Pose start;   // demonstrator starting wrist pose
};

/// Box pinch from above used for self-transfer.
SyntheticTask box_pinch_task();
/// Training demonstrations on a few boxes and cylinders.
std::vector<SyntheticTask> training_tasks();
/// Deterministic suite of `count` test scenes (boxes and cylinders of varied size and pose).
std::vector<SyntheticTask> test_suite(int count = 20, std::uint64_t seed = 7);
/// Objects whose far side must be touched; the test camera sees only the near side.
std::vector<SyntheticTask> thick_tasks();

/// Trains-ready examples for a set of tasks.
std::vector<GraspExample> demonstrate_tasks(const HandModel& hand, const std::vector<SyntheticTask>& tasks,
                                            int views, const Intrinsics& intrinsics = {80, 60, 40.0},
                                            double noise = 0.0, double elevation_deg = 35.0,
                                            double azimuth0_deg = 45.0);

/// Surface points on the far side of `scene` as seen from `camera`: normals
/// pointing away from the camera with cosine at least `min_facing`.
std::vector<Vec3> back_surface(const Scene& scene, const Pose& camera, double min_facing = 0.5,
                               std::size_t samples = 4000, std::uint64_t seed = 3);

/// Smallest distance from any link surface to the given point set.
double link_distance_to(const HandModel& hand, const Pose& h_w, const Config& h_c, const std::vector<Vec3>& points);

}  // namespace viewgrasp
