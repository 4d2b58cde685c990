#pragma once

// Query densities: where a hand link may be placed on a test object, formed by
// sliding a contact-model prototype over the test view (importance sampling).

#include "viewgrasp/cluster.hpp"

namespace viewgrasp {

/// s ⋄ M = {(s ∘ u_j⁻¹, r_j)}: the model's surface features placed in the world
/// for a link at pose s.
std::vector<Feature> transform_contact_model(const Pose& s, const ContactModel& m);

/// Weighted link poses with Gaussian × vMF-pair kernels and a position index
/// for fast evaluation.
class QueryDensity {
 public:
  QueryDensity() = default;
  QueryDensity(std::vector<WeightedPose> kernels, double sigma_p, double sigma_q, int prototype = -1);

  const std::vector<WeightedPose>& kernels() const { return density_.kernels(); }
  std::size_t size() const { return density_.size(); }
  bool empty() const { return density_.empty(); }
  int prototype() const { return prototype_; }
  double sigma_p() const { return density_.sigma_p(); }
  double sigma_q() const { return density_.sigma_q(); }

  /// log Q(s). Kernels too far to matter for any orientation are skipped; if none is close
  /// the 8 nearest are used, so the value stays finite everywhere.
  double log_eval(const Pose& s) const;
  double eval(const Pose& s) const;
  /// Plain weighted sum over all kernels.
  double eval_naive(const Pose& s) const;
  Pose sample(Rng& rng) const;

  /// Indices of the kernels sorted by decreasing weight.
  std::vector<std::size_t> ranked() const;

 private:
  PoseDensity density_;
  KdTree<3> index_;
  std::vector<double> log_weights_;
  double log_norm_q_ = 0.0;
  int prototype_ = -1;
};

enum class QueryWeighting {
  Divergence,  // exp(−φ d(ŝ⋄M, V))
  Marginal,    // M(r̂), the earlier single-feature rule
};

struct QueryParams {
  int n_q = 5000;
  double phi = 1.0;
  double rho = 0.02;  // neighbourhood radius around the transformed model, meters
  DistanceWeights distance;
  QueryWeighting weighting = QueryWeighting::Divergence;
  int max_retries = 100;
  int mc_samples = 1000;
};

/// Unnormalized importance weight for a divergence value.
double query_weight(double divergence, double phi);

/// Divergence of the model placed at s from the view, with per-kernel
/// distances saturated at w_lin·ρ² + 2·w_ang when no view feature lies within ρ.
double placed_divergence(const Pose& s, const std::vector<Pose>& model_surface, const SurfaceIndex& view,
                         double rho);

/// Alg. 2 for one prototype. Sample k draws from substream(seed, prototype_id, k).
QueryDensity form_query_density(const ObjectViewModel& view, const SurfaceIndex& view_index,
                                const ClusterPrototype& proto, const std::vector<ContactModel>& models,
                                const QueryParams& params, std::uint64_t seed, int prototype_id);

/// Convenience overload that indexes the view itself.
QueryDensity form_query_density(const ObjectViewModel& view, const ClusterPrototype& proto,
                                const std::vector<ContactModel>& models, const QueryParams& params,
                                std::uint64_t seed, int prototype_id = 0);

SurfaceIndex index_view(const ObjectViewModel& view, const DistanceWeights& w = {});

}  // namespace viewgrasp
