#pragma once

// Distances between contact models, affinity-propagation clustering, and
// cluster prototypes (mixtures of member models weighted by their distance to
// the exemplar).

#include "viewgrasp/contact.hpp"
#include "viewgrasp/kdtree.hpp"

#include <Eigen/Core>

#include <memory>
#include <vector>

namespace viewgrasp {

struct DistanceWeights {
  double w_lin = 1.0;
  double w_ang = 0.01;
};

/// w_lin·|p_x−p_y|² + w_ang·(1 − n_x·n_y), n = frame z-axis.
double kernel_distance(const Pose& x, const Pose& y, const DistanceWeights& w = {});

/// Exact nearest-kernel search under kernel_distance. Poses are embedded as
/// (√w_lin·p, √(w_ang/2)·n) in R⁶ where the metric becomes squared Euclidean.
class SurfaceIndex {
 public:
  SurfaceIndex() = default;
  SurfaceIndex(const std::vector<Pose>& poses, const DistanceWeights& w = {});

  struct Hit {
    std::size_t index;
    double distance;
  };

  std::size_t size() const { return tree_.size(); }
  bool empty() const { return tree_.empty(); }
  const DistanceWeights& weights() const { return w_; }
  const Vec3& position(std::size_t i) const { return positions_[i]; }

  Hit nearest(const Pose& x) const;
  /// Hit for the embedded point directly; `x` must come from embed().
  Hit nearest_embedded(const Eigen::Matrix<double, 6, 1>& x) const;
  Eigen::Matrix<double, 6, 1> embed(const Pose& x) const;

 private:
  KdTree<6> tree_;
  std::vector<Vec3> positions_;
  DistanceWeights w_;
};

/// min over y in the index of kernel_distance(x, y). Throws on an empty index.
double kernel_to_density_distance(const Pose& x, const SurfaceIndex& density);
double kernel_to_density_distance(const Pose& x, const ContactModel& m, const DistanceWeights& w = {});

/// Mean over x in `from` of the distance from x to `to`.
double divergence(const std::vector<Pose>& from, const SurfaceIndex& to);
/// Divergence of two contact models, measured on their surface poses in the link frame.
double divergence(const ContactModel& a, const ContactModel& b, const DistanceWeights& w = {});
double symmetric_distance(const ContactModel& a, const ContactModel& b, const DistanceWeights& w = {});

/// Pairwise symmetric distances; models must be non-empty.
Eigen::MatrixXd distance_matrix(const std::vector<const ContactModel*>& models, const DistanceWeights& w = {});

struct APOptions {
  double damping = 0.9;
  int max_iter = 1000;
  int convergence_iter = 100;
  /// Shared preference; NaN selects the median of the off-diagonal similarities.
  double preference = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;  // tie-breaking noise
};

struct APResult {
  std::vector<int> labels;     // cluster index per item
  std::vector<int> exemplars;  // item index per cluster
  bool converged = false;
  int iterations = 0;
};

/// Affinity propagation on similarities −D.
APResult affinity_propagation(const Eigen::MatrixXd& distances, const APOptions& opt = {});

struct ClusterPrototype {
  std::vector<int> members;          // model indices
  std::vector<double> probabilities;  // P(k|C_l), same order as members
  int exemplar = 0;                   // position of the exemplar within members
  std::vector<double> cumulative;

  std::size_t size() const { return members.size(); }
  /// Position within members, drawn from P(k|C_l).
  std::size_t sample_member(Rng& rng) const;
};

/// Unnormalized member weight exp(−ξ d).
double prototype_weight(double distance, double xi);

/// distances_to_exemplar[k] = d(exemplar, member k).
ClusterPrototype build_prototype(std::vector<int> members, int exemplar, const std::vector<double>& distances_to_exemplar,
                                 double xi = 1.0);

/// Mixture marginal Σ_k P(k) M_k(r). Summed exactly when the cluster has at most
/// `mc_samples` members, otherwise estimated from `mc_samples` member draws.
double prototype_marginal(const ClusterPrototype& proto, const std::vector<ContactModel>& models, const Descriptor& r,
                          Rng& rng, int mc_samples = 1000);

/// Monte-Carlo estimate of Σ_k P(k) M_k(x) from `mc_samples` member draws.
double prototype_eval(const ClusterPrototype& proto, const std::vector<ContactModel>& models, const Feature& x, Rng& rng,
                      int mc_samples = 1000);

}  // namespace viewgrasp
