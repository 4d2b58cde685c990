#include "viewgrasp/cluster.hpp"

#include "viewgrasp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace viewgrasp {

using Vec6 = Eigen::Matrix<double, 6, 1>;

double kernel_distance(const Pose& x, const Pose& y, const DistanceWeights& w) {
  return w.w_lin * (x.p - y.p).squaredNorm() + w.w_ang * (1.0 - x.axis_z().dot(y.axis_z()));
}

SurfaceIndex::SurfaceIndex(const std::vector<Pose>& poses, const DistanceWeights& w) : w_(w) {
  if (!(w.w_lin >= 0.0) || !(w.w_ang >= 0.0)) throw std::invalid_argument("distance weights must be >= 0");
  std::vector<Vec6> pts;
  pts.reserve(poses.size());
  positions_.reserve(poses.size());
  for (const auto& p : poses) {
    pts.push_back(embed(p));
    positions_.push_back(p.p);
  }
  tree_ = KdTree<6>(std::move(pts));
}

Vec6 SurfaceIndex::embed(const Pose& x) const {
  Vec6 e;
  e.head<3>() = std::sqrt(w_.w_lin) * x.p;
  e.tail<3>() = std::sqrt(0.5 * w_.w_ang) * x.axis_z();
  return e;
}

SurfaceIndex::Hit SurfaceIndex::nearest_embedded(const Vec6& x) const {
  if (tree_.empty()) throw InvalidState("nearest kernel in an empty density");
  const auto n = tree_.nearest(x);
  return {n.index, n.dist2};
}

SurfaceIndex::Hit SurfaceIndex::nearest(const Pose& x) const { return nearest_embedded(embed(x)); }

double kernel_to_density_distance(const Pose& x, const SurfaceIndex& density) {
  return density.nearest(x).distance;
}

double kernel_to_density_distance(const Pose& x, const ContactModel& m, const DistanceWeights& w) {
  if (m.empty()) throw InvalidState("distance to an empty contact model");
  return kernel_to_density_distance(x, SurfaceIndex(m.surface_poses(), w));
}

double divergence(const std::vector<Pose>& from, const SurfaceIndex& to) {
  if (from.empty() || to.empty()) throw InvalidState("divergence with an empty density");
  double sum = 0.0;
  for (const auto& x : from) sum += to.nearest(x).distance;
  return sum / static_cast<double>(from.size());
}

double divergence(const ContactModel& a, const ContactModel& b, const DistanceWeights& w) {
  if (a.empty() || b.empty()) throw InvalidState("divergence with an empty contact model");
  return divergence(a.surface_poses(), SurfaceIndex(b.surface_poses(), w));
}

double symmetric_distance(const ContactModel& a, const ContactModel& b, const DistanceWeights& w) {
  return std::max(divergence(a, b, w), divergence(b, a, w));
}

Eigen::MatrixXd distance_matrix(const std::vector<const ContactModel*>& models, const DistanceWeights& w) {
  const auto n = static_cast<Eigen::Index>(models.size());
  std::vector<std::vector<Pose>> poses(n);
  std::vector<SurfaceIndex> index(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (models[i]->empty()) throw InvalidState("distance matrix over an empty contact model");
    poses[i] = models[i]->surface_poses();
    index[i] = SurfaceIndex(poses[i], w);
  }
  Eigen::MatrixXd div = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) div(i, j) = divergence(poses[i], index[j]);
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = std::max(div(i, j), div(j, i));
  return d;
}

APResult affinity_propagation(const Eigen::MatrixXd& distances, const APOptions& opt) {
  const Eigen::Index n = distances.rows();
  if (distances.cols() != n) throw std::invalid_argument("affinity_propagation: distance matrix must be square");
  if (!distances.allFinite()) throw std::invalid_argument("affinity_propagation: non-finite distance");
  if (!(opt.damping >= 0.5 && opt.damping < 1.0)) throw std::invalid_argument("damping must be in [0.5, 1)");
  APResult out;
  if (n == 0) {
    out.converged = true;
    return out;
  }
  std::vector<double> off;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) off.push_back(-distances(i, j));
  const bool uniform =
      off.empty() || std::all_of(off.begin(), off.end(), [&](double v) { return v == off.front(); });
  if (uniform) {
    out.labels.assign(n, 0);
    out.exemplars = {0};
    out.converged = true;
    return out;
  }
  double pref = opt.preference;
  if (std::isnan(pref)) {
    std::vector<double> tmp = off;
    const std::size_t mid = tmp.size() / 2;
    std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
    pref = tmp[mid];
    if (tmp.size() % 2 == 0) {
      const double hi = tmp[mid];
      const double lo = *std::max_element(tmp.begin(), tmp.begin() + mid);
      pref = 0.5 * (lo + hi);
    }
  }
  Eigen::MatrixXd S = -distances;
  for (Eigen::Index i = 0; i < n; ++i) S(i, i) = pref;
  // Tiny deterministic noise breaks exact ties between candidate exemplars.
  const double scale = S.cwiseAbs().maxCoeff();
  Rng rng = substream(opt.seed, 0xa9, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) S(i, j) += (1e-12 * std::abs(S(i, j)) + 1e-14 * scale) * uniform01(rng);

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n), A = Eigen::MatrixXd::Zero(n, n);
  std::vector<char> last(n, 0);
  int stable = 0;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double first = -std::numeric_limits<double>::infinity(), second = first;
      Eigen::Index arg = 0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double v = A(i, k) + S(i, k);
        if (v > first) {
          second = first;
          first = v;
          arg = k;
        } else if (v > second) {
          second = v;
        }
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double r = S(i, k) - (k == arg ? second : first);
        R(i, k) = opt.damping * R(i, k) + (1.0 - opt.damping) * r;
      }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      double pos = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != k) pos += std::max(0.0, R(i, k));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = i == k ? pos : std::min(0.0, R(k, k) + pos - std::max(0.0, R(i, k)));
        A(i, k) = opt.damping * A(i, k) + (1.0 - opt.damping) * a;
      }
    }
    std::vector<char> ex(n);
    bool any = false;
    for (Eigen::Index k = 0; k < n; ++k) any |= (ex[k] = (A(k, k) + R(k, k)) > 0.0);
    stable = (ex == last && any) ? stable + 1 : 0;
    last = ex;
    if (stable >= opt.convergence_iter) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.iterations = it;

  std::vector<int> ex;
  for (Eigen::Index k = 0; k < n; ++k)
    if (last[k]) ex.push_back(static_cast<int>(k));
  if (ex.empty()) {
    // No exemplar emerged: keep every item on its own.
    out.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.labels[i] = static_cast<int>(i);
      out.exemplars.push_back(static_cast<int>(i));
    }
    return out;
  }
  auto assign = [&](const std::vector<int>& exemplars) {
    std::vector<int> labels(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      for (std::size_t c = 1; c < exemplars.size(); ++c)
        if (S(i, exemplars[c]) > S(i, exemplars[best])) best = static_cast<int>(c);
      labels[i] = best;
    }
    for (std::size_t c = 0; c < exemplars.size(); ++c) labels[exemplars[c]] = static_cast<int>(c);
    return labels;
  };
  std::vector<int> labels = assign(ex);
  // Re-pick each cluster's exemplar as the member with the largest summed similarity.
  for (std::size_t c = 0; c < ex.size(); ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (labels[k] != static_cast<int>(c)) continue;
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (labels[i] == static_cast<int>(c)) sum += S(i, k);
      if (sum > best) {
        best = sum;
        ex[c] = static_cast<int>(k);
      }
    }
  }
  out.labels = assign(ex);
  out.exemplars = ex;
  return out;
}

std::size_t ClusterPrototype::sample_member(Rng& rng) const { return sample_cumulative(rng, cumulative); }

double prototype_weight(double distance, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("xi must be > 0");
  return std::exp(-xi * distance);
}

ClusterPrototype build_prototype(std::vector<int> members, int exemplar, const std::vector<double>& distances, double xi) {
  if (members.empty()) throw std::invalid_argument("build_prototype: empty cluster");
  if (distances.size() != members.size()) throw std::invalid_argument("build_prototype: one distance per member");
  if (exemplar < 0 || exemplar >= static_cast<int>(members.size()))
    throw std::invalid_argument("build_prototype: exemplar out of range");
  ClusterPrototype p;
  p.members = std::move(members);
  p.exemplar = exemplar;
  double total = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    const double d = static_cast<int>(k) == exemplar ? 0.0 : distances[k];
    const double w = prototype_weight(d, xi);
    p.probabilities.push_back(w);
    total += w;
  }
  double acc = 0.0;
  for (auto& w : p.probabilities) {
    w /= total;
    p.cumulative.push_back(acc += w);
  }
  return p;
}

double prototype_marginal(const ClusterPrototype& proto, const std::vector<ContactModel>& models, const Descriptor& r,
                          Rng& rng, int mc_samples) {
  if (proto.members.empty()) throw InvalidState("empty prototype");
  if (static_cast<int>(proto.size()) <= mc_samples) {
    double sum = 0.0;
    for (std::size_t k = 0; k < proto.size(); ++k)
      sum += proto.probabilities[k] * marginal_descriptor(models.at(proto.members[k]).kernels, r);
    return sum;
  }
  double sum = 0.0;
  for (int s = 0; s < mc_samples; ++s)
    sum += marginal_descriptor(models.at(proto.members[proto.sample_member(rng)]).kernels, r);
  return sum / mc_samples;
}

double prototype_eval(const ClusterPrototype& proto, const std::vector<ContactModel>& models, const Feature& x, Rng& rng,
                      int mc_samples) {
  if (proto.members.empty()) throw InvalidState("empty prototype");
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  double sum = 0.0;
  for (int s = 0; s < mc_samples; ++s) sum += eval_pdf(models.at(proto.members[proto.sample_member(rng)]).kernels, x);
  return sum / mc_samples;
}

}  // namespace viewgrasp
