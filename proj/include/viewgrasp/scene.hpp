#pragma once

// Ground-truth scene geometry built from signed-distance primitives, and a
// ray-casting depth camera that produces single-view point clouds.

#include "viewgrasp/geometry.hpp"
#include "viewgrasp/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace viewgrasp {

struct PointCloud;

enum class PrimitiveKind { Box, Cylinder, Sphere, Tube };

/// Solid primitive in its own frame. Cylinders and tubes are centered with
/// their axis along local z.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Pose pose;
  // Box: full extents (x, y, z). Cylinder: (radius, height, -).
  // Sphere: (radius, -, -). Tube: (outer radius, inner radius, height).
  Vec3 dims = Vec3::Zero();

  double sdf(const Vec3& world) const;
  double surface_area() const;
  /// Uniform sample on the primitive's own boundary (not clipped by other primitives).
  Vec3 sample_surface(Rng& rng) const;
};

struct Intrinsics {
  int width = 160;
  int height = 120;
  double fov_deg = 40.0;  // horizontal field of view

  double focal() const;
};

/// Union of primitives. Composites are flattened into world-frame primitives on load.
class Scene {
 public:
  Scene() = default;
  explicit Scene(std::vector<Primitive> primitives) : primitives_(std::move(primitives)) {}

  const std::vector<Primitive>& primitives() const { return primitives_; }
  void add(const Primitive& p) { primitives_.push_back(p); }
  bool empty() const { return primitives_.empty(); }

  double sdf(const Vec3& x) const;
  /// Outward unit normal from the SDF gradient.
  Vec3 normal(const Vec3& x) const;
  /// First surface hit along the ray, or nullopt.
  std::optional<double> raycast(const Vec3& origin, const Vec3& dir, double t_max = 5.0) const;

  Vec3 centroid() const;

  /// Points sampled on the outer boundary of the union, with outward normals.
  void sample_surface(std::size_t count, Rng& rng, std::vector<Vec3>& points, std::vector<Vec3>& normals) const;

  std::optional<Pose> camera;
  Intrinsics intrinsics;

 private:
  std::vector<Primitive> primitives_;
};

/// Parses the scene text format:
///   camera px py pz qx qy qz qw
///   intrinsics W H fov_deg
///   box px py pz qx qy qz qw sx sy sz
///   cylinder <pose> radius height
///   sphere <pose> radius
///   tube <pose> outer inner height
///   composite <pose> ... end      (members are relative to the composite pose)
/// '#' starts a comment. Throws FormatError.
Scene parse_scene(const std::string& text);
Scene load_scene(const std::string& path);
std::string format_scene(const Scene& scene);

/// Parses 7 numbers "px py pz qx qy qz qw", separated by spaces or commas.
Pose parse_pose(const std::string& text);

/// Ray-cast z-buffer view. Camera looks along its +z axis (x right, y down).
/// Gaussian noise of `noise_std` meters is added along each ray.
/// Throws std::runtime_error when no ray hits the scene.
PointCloud simulate_depth_view(const Scene& scene, const Pose& camera, const Intrinsics& intrinsics,
                               double noise_std = 0.0, std::uint64_t seed = 0);

}  // namespace viewgrasp
