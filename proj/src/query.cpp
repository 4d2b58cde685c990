#include "viewgrasp/query.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace viewgrasp {

namespace {

double log_cosh(double a) {
  a = std::abs(a);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

std::vector<Feature> transform_contact_model(const Pose& s, const ContactModel& m) {
  std::vector<Feature> out;
  out.reserve(m.size());
  for (const auto& k : m.kernels.kernels()) out.push_back({compose(s, inverse(k.center.pose)), k.center.r});
  return out;
}

QueryDensity::QueryDensity(std::vector<WeightedPose> kernels, double sigma_p, double sigma_q, int prototype)
    : density_(std::move(kernels), sigma_p, sigma_q), prototype_(prototype) {
  std::vector<Vec3> pts;
  pts.reserve(density_.size());
  log_weights_.reserve(density_.size());
  for (const auto& k : density_.kernels()) {
    pts.push_back(k.pose.p);
    log_weights_.push_back(std::log(k.weight));
  }
  index_ = KdTree<3>(std::move(pts));
  log_norm_q_ = vmf_log_normalizer(sigma_q);
}

double QueryDensity::log_eval(const Pose& s) const {
  if (empty()) throw InvalidState("eval on an empty query density");
  const double sp = sigma_p(), kq = sigma_q();
  // Beyond this radius a kernel's Gaussian factor is below e^-18 times the
  // largest orientation factor any kernel can have.
  const double cutoff2 = 2.0 * sp * sp * (log_cosh(kq) + 18.0);
  thread_local std::vector<KdTree<3>::Neighbor> nn;
  index_.radius(s.p, cutoff2, nn);
  if (nn.empty()) nn = index_.knn(s.p, 8);
  const double log_gauss_norm = -1.5 * std::log(2.0 * std::numbers::pi * sp * sp);
  double m = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> terms;
  terms.clear();
  const auto& ks = kernels();
  for (const auto& n : nn) {
    const auto& k = ks[n.index];
    const double t = log_weights_[n.index] - 0.5 * n.dist2 / (sp * sp) + log_gauss_norm + log_norm_q_ +
                     log_cosh(kq * k.pose.q.coeffs().dot(s.q.coeffs()));
    terms.push_back(t);
    m = std::max(m, t);
  }
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - m);
  return m + std::log(sum);
}

double QueryDensity::eval(const Pose& s) const { return std::exp(log_eval(s)); }

double QueryDensity::eval_naive(const Pose& s) const { return density_.eval(s); }

Pose QueryDensity::sample(Rng& rng) const { return density_.sample(rng); }

std::vector<std::size_t> QueryDensity::ranked() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return kernels()[a].weight > kernels()[b].weight; });
  return idx;
}

double query_weight(double divergence, double phi) { return std::exp(-phi * divergence); }

double placed_divergence(const Pose& s, const std::vector<Pose>& model_surface, const SurfaceIndex& view, double rho) {
  if (model_surface.empty() || view.empty()) throw InvalidState("divergence with an empty density");
  const auto& w = view.weights();
  const double cap = w.w_lin * rho * rho + 2.0 * w.w_ang;
  double sum = 0.0;
  for (const auto& u_inv : model_surface) {
    const Pose x = compose(s, u_inv);
    const auto hit = view.nearest(x);
    const bool near = (view.position(hit.index) - x.p).squaredNorm() <= rho * rho;
    sum += near ? std::min(hit.distance, cap) : cap;
  }
  return sum / static_cast<double>(model_surface.size());
}

SurfaceIndex index_view(const ObjectViewModel& view, const DistanceWeights& w) {
  std::vector<Pose> poses;
  poses.reserve(view.features.size());
  for (const auto& k : view.features.kernels()) poses.push_back(k.center.pose);
  return SurfaceIndex(poses, w);
}

QueryDensity form_query_density(const ObjectViewModel& view, const SurfaceIndex& view_index,
                                const ClusterPrototype& proto, const std::vector<ContactModel>& models,
                                const QueryParams& params, std::uint64_t seed, int prototype_id) {
  if (view.features.empty()) throw std::invalid_argument("form_query_density: empty object view");
  if (proto.members.empty()) throw std::invalid_argument("form_query_density: empty prototype");
  if (params.n_q < 1) throw std::invalid_argument("N_Q must be >= 1");
  if (!(params.phi >= 0.0) || !(params.rho > 0.0)) throw std::invalid_argument("phi must be >= 0 and rho > 0");
  for (int m : proto.members)
    if (models.at(m).empty()) throw InvalidState("prototype member has an empty contact model");
  const Bandwidth& bw = models.at(proto.members.front()).kernels.bandwidth();

  std::vector<std::vector<Pose>> surfaces(proto.size());
  if (params.weighting == QueryWeighting::Divergence)
    for (std::size_t k = 0; k < proto.size(); ++k) surfaces[k] = models[proto.members[k]].surface_poses();

  std::vector<WeightedPose> out(params.n_q);
  std::vector<double> log_w(params.n_q);
  parallel_for(static_cast<std::size_t>(params.n_q), [&](std::size_t i) {
    Rng rng = substream(seed, 0x9e0 + static_cast<std::uint64_t>(prototype_id), i);
    for (int attempt = 0;; ++attempt) {
      const Feature v = sample(view.features, rng);
      const std::size_t member = proto.sample_member(rng);
      const ContactModel& m = models[proto.members[member]];
      PoseDensity cond;
      try {
        cond = conditional_pose(m.kernels, v.r);
      } catch (const DegenerateConditional&) {
        if (attempt + 1 >= params.max_retries)
          throw DegenerateConditional("query density: no prototype kernel matches the test surface descriptors");
        continue;
      }
      const Pose u = cond.sample(rng);
      const Pose s = compose(v.pose, u);
      out[i].pose = s;
      if (params.weighting == QueryWeighting::Divergence) {
        log_w[i] = -params.phi * placed_divergence(s, surfaces[member], view_index, params.rho);
      } else {
        log_w[i] = std::log(prototype_marginal(proto, models, v.r, rng, params.mc_samples));
      }
      break;
    }
  });
  double max_log = -std::numeric_limits<double>::infinity();
  for (double l : log_w) max_log = std::max(max_log, l);
  if (!std::isfinite(max_log)) throw DegenerateConditional("query density: all importance weights vanished");
  for (int i = 0; i < params.n_q; ++i) out[i].weight = std::exp(log_w[i] - max_log);
  return QueryDensity(std::move(out), bw.sigma_p, bw.sigma_q, prototype_id);
}

QueryDensity form_query_density(const ObjectViewModel& view, const ClusterPrototype& proto,
                                const std::vector<ContactModel>& models, const QueryParams& params,
                                std::uint64_t seed, int prototype_id) {
  return form_query_density(view, index_view(view, params.distance), proto, models, params, seed, prototype_id);
}

}  // namespace viewgrasp
