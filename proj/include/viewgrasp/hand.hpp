#pragma once

// Hand kinematics (palm + revolute phalanges), link geometry as unions of
// capsules and boxes, and the per-grasp hand-configuration density.

#include "viewgrasp/geometry.hpp"
#include "viewgrasp/random.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace viewgrasp {

using Config = Eigen::VectorXd;

enum class ShapeKind { Capsule, Box };

/// Convex piece of a link in the link frame. A capsule runs from the shape
/// origin along +z for `length`; a box is centered on the shape origin.
struct LinkShape {
  ShapeKind kind = ShapeKind::Capsule;
  Pose pose;
  double radius = 0.0;
  double length = 0.0;
  Vec3 size = Vec3::Zero();  // box full extents

  /// Signed distance of a point given in the link frame.
  double sdf(const Vec3& local) const;
  double surface_area() const;
  /// Uniform point on the shape boundary (link frame) with outward normal.
  void sample_surface(Rng& rng, Vec3& point, Vec3& normal) const;
};

struct LinkGeometry {
  int link_id = 0;
  std::vector<LinkShape> shapes;

  /// Signed distance to the union of shapes for a world point, link at `link_pose`.
  double signed_distance(const Vec3& world, const Pose& link_pose) const;
  /// Distance from a world point to the link surface (|signed distance|).
  double surface_distance(const Vec3& world, const Pose& link_pose) const;
  /// Bounding sphere in the link frame.
  Vec3 bound_center() const;
  double bound_radius() const;
  /// Points on the union's boundary in world coordinates.
  void sample_surface(std::size_t count, const Pose& link_pose, Rng& rng, std::vector<Vec3>& points,
                      std::vector<Vec3>& normals) const;
};

struct Joint {
  Pose origin;  // in the parent link frame, at zero angle
  Vec3 axis = Vec3::UnitX();
  double lower = -1.0;
  double upper = 1.0;
};

struct Link {
  std::string name;
  int parent = -1;  // -1 only for the palm
  int joint = -1;   // index into joints(), -1 for the palm
  LinkGeometry geometry;
};

/// Kinematic tree rooted at the palm. The palm frame is the wrist frame h_w.
/// Links are stored so that every parent precedes its children.
class HandModel {
 public:
  HandModel() = default;
  HandModel(std::vector<Link> links, std::vector<Joint> joints);

  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  std::size_t num_links() const { return links_.size(); }
  int dof() const { return static_cast<int>(joints_.size()); }
  int link_index(const std::string& name) const;

  /// Clamps a configuration to the joint limits; returns the number of clamped joints.
  int clamp(Config& h_c) const;

  /// Link poses in the wrist frame. Out-of-limit angles are clamped.
  std::vector<Pose> link_rest_poses(const Config& h_c) const;
  /// World poses of every link.
  std::vector<Pose> forward_kinematics(const Pose& h_w, const Config& h_c) const;
  /// Wrist pose that puts link i at world pose s_i: h_w = s_i ∘ rest_i(h_c)⁻¹.
  Pose solve_wrist(int link, const Pose& s_i, const Config& h_c) const;

  Config zero_config() const { return Config::Zero(dof()); }

 private:
  std::vector<Link> links_;
  std::vector<Joint> joints_;
};

/// Palm plus three two-phalanx fingers (7 links, 6 joints). The approach
/// direction is the wrist +z axis; the two fingers at +y oppose the thumb at -y.
HandModel default_hand();

/// JSON hand description ("schema": "viewgrasp.hand", "version": 1).
HandModel parse_hand_json(const std::string& text);
HandModel load_hand(const std::string& path);
std::string hand_to_json(const HandModel& hand);

struct ConfigModelParams {
  int n_c = 1000;
  double alpha = 100.0;
  double beta = 1.0;
  double sigma_hc = 0.05;  // radians
};

/// h_c(γ) = (1−γ)h_g + γ h_t.
Config interpolate_config(const Config& h_g, const Config& h_t, double gamma);

/// Unnormalized weight exp(−α‖h_c(γ)−h_g‖²).
double config_weight(const Config& h_g, const Config& h_t, double gamma, double alpha);

/// Mixture of isotropic Gaussians centered along the demonstrated approach line.
class HandConfigModel {
 public:
  HandConfigModel() = default;
  HandConfigModel(const Config& h_g, const Config& h_t, const ConfigModelParams& params);

  const Config& grasp_config() const { return h_g_; }
  const Config& pre_config() const { return h_t_; }
  const ConfigModelParams& params() const { return params_; }
  const std::vector<double>& gammas() const { return gammas_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return gammas_.size(); }
  bool empty() const { return gammas_.empty(); }
  Config center(std::size_t k) const { return interpolate_config(h_g_, h_t_, gammas_[k]); }

  double eval(const Config& h_c) const;
  double log_eval(const Config& h_c) const;
  Config sample(Rng& rng) const;

 private:
  Config h_g_, h_t_;
  ConfigModelParams params_;
  std::vector<double> gammas_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

HandConfigModel build_config_model(const Config& h_g, const Config& h_t, const ConfigModelParams& params = {});

}  // namespace viewgrasp
