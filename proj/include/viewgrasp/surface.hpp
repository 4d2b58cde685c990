#pragma once

#include "viewgrasp/density.hpp"
#include "viewgrasp/geometry.hpp"

#include <string>
#include <vector>

namespace viewgrasp {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or one unit normal per point
  Vec3 viewpoint = Vec3::Zero();

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !points.empty() && normals.size() == points.size(); }
};

inline constexpr int kDefaultNeighbors = 25;

struct NormalEstimate {
  PointCloud cloud;          // points with a well-defined normal
  std::size_t dropped = 0;   // points whose neighbourhood had rank < 2
};

/// PCA normals over k nearest neighbours, oriented toward the sensor viewpoint.
NormalEstimate estimate_normals(const PointCloud& cloud, int k_nn = kDefaultNeighbors);

/// Surface features from a single view: uniform weights over (pose, r) kernels.
struct ObjectViewModel {
  KernelSet features;
  int view_id = 0;
  int grasp_id = 0;
};

/// Frame per point: z = normal, x = first principal direction k1; r = (r1, r2)
/// with r1 >= r2, positive for surfaces curving away from the normal.
std::vector<Feature> principal_curvature_features(const PointCloud& cloud, int k_nn = kDefaultNeighbors);

ObjectViewModel make_object_view_model(std::vector<Feature> features, const Bandwidth& bw, int view_id = 0,
                                       int grasp_id = 0);

/// Normals + curvature features in one step.
ObjectViewModel build_object_view_model(const PointCloud& cloud, const Bandwidth& bw, int k_nn = kDefaultNeighbors,
                                        int view_id = 0, int grasp_id = 0);

/// ASCII PLY with vertex properties x y z [nx ny nz]. The sensor viewpoint is
/// kept in a "comment viewpoint x y z" header line.
PointCloud load_ply(const std::string& path);
PointCloud parse_ply(const std::string& text);
void save_ply(const std::string& path, const PointCloud& cloud);
std::string format_ply(const PointCloud& cloud);

}  // namespace viewgrasp
