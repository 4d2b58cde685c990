#pragma once

// Kernel density estimation over R³ × S³ × R^{N_r}. The kernel factorizes into an
// isotropic Gaussian on position, an antipodal von Mises-Fisher pair on the
// orientation quaternion and an isotropic Gaussian on the surface descriptor.

#include "viewgrasp/geometry.hpp"
#include "viewgrasp/random.hpp"

#include <vector>

namespace viewgrasp {

/// Surface descriptor: principal curvatures (r1 >= r2).
using Descriptor = Eigen::Vector2d;
inline constexpr int kDescriptorDim = 2;

struct Bandwidth {
  double sigma_p = 0.005;  // meters
  double sigma_q = 0.5;    // vMF concentration
  double sigma_r = 10.0;   // descriptor units (1/m)

  void validate() const;
};

struct Feature {
  Pose pose;
  Descriptor r = Descriptor::Zero();
};

struct Kernel {
  Feature center;
  double weight = 1.0;
};

/// Weighted particle set with a shared bandwidth. Immutable after construction.
class KernelSet {
 public:
  KernelSet() = default;
  /// Weights are rescaled to sum to one; they must be nonnegative with positive sum.
  KernelSet(std::vector<Kernel> kernels, Bandwidth bandwidth);

  /// Adopts weights and quaternions as given (e.g. when reloading a saved set);
  /// they must already be normalized within 1e-9.
  static KernelSet from_normalized(std::vector<Kernel> kernels, Bandwidth bandwidth);

  const std::vector<Kernel>& kernels() const { return kernels_; }
  const Kernel& operator[](std::size_t i) const { return kernels_[i]; }
  const Bandwidth& bandwidth() const { return bandwidth_; }
  std::size_t size() const { return kernels_.size(); }
  bool empty() const { return kernels_.empty(); }
  const std::vector<double>& cumulative_weights() const { return cumulative_; }

 private:
  std::vector<Kernel> kernels_;
  Bandwidth bandwidth_;
  std::vector<double> cumulative_;
};

/// log of the S³ von Mises-Fisher normalizer C₄(κ) = κ / (4π² I₁(κ)).
double vmf_log_normalizer(double kappa);

/// log I₁(x) for x >= 0 (power series below 30, asymptotic expansion above).
double log_bessel_i1(double x);

double log_gauss3(const Vec3& x, const Vec3& mu, double sigma);
double log_gauss_descriptor(const Descriptor& r, const Descriptor& mu, double sigma);
double log_vmf_pair(const Quat& q, const Quat& mu, double kappa);

double eval_gauss3(const Vec3& x, const Vec3& mu, double sigma);
double eval_gauss_descriptor(const Descriptor& r, const Descriptor& mu, double sigma);

/// Θ(q|μ,κ) = C₄(κ)·(e^{κ μ·q} + e^{−κ μ·q})/2.
double eval_vmf_pair(const Quat& q, const Quat& mu, double kappa);

double eval_kernel(const Feature& x, const Feature& mu, const Bandwidth& bw);

double eval_pdf(const KernelSet& set, const Feature& x);

/// Σ_j w_j N(r | r_j, σ_r): the pose blocks integrate out to one.
double marginal_descriptor(const KernelSet& set, const Descriptor& r);

struct WeightedPose {
  Pose pose;
  double weight = 1.0;
};

/// Weighted pose kernels (Gaussian position × vMF-pair orientation).
class PoseDensity {
 public:
  PoseDensity() = default;
  PoseDensity(std::vector<WeightedPose> kernels, double sigma_p, double sigma_q);

  const std::vector<WeightedPose>& kernels() const { return kernels_; }
  std::size_t size() const { return kernels_.size(); }
  bool empty() const { return kernels_.empty(); }
  double sigma_p() const { return sigma_p_; }
  double sigma_q() const { return sigma_q_; }
  const std::vector<double>& cumulative_weights() const { return cumulative_; }

  double eval(const Pose& s) const;
  Pose sample(Rng& rng) const;

 private:
  std::vector<WeightedPose> kernels_;
  double sigma_p_ = 0.005;
  double sigma_q_ = 0.5;
  std::vector<double> cumulative_;
};

/// pdf(p, q | r): kernel weights become w_j N(r|r_j,σ_r), renormalized.
/// Throws DegenerateConditional when the marginal is below 1e-300.
PoseDensity conditional_pose(const KernelSet& set, const Descriptor& r);

/// Picks a kernel by weight, then perturbs position, orientation and descriptor
/// with the kernel's own noise model.
Feature sample(const KernelSet& set, Rng& rng);

/// Perturbation of a single pose by the pose part of a kernel.
Pose sample_pose_kernel(const Pose& center, double sigma_p, double sigma_q, Rng& rng);

}  // namespace viewgrasp
