#include "viewgrasp/contact.hpp"

#include <cmath>
#include <stdexcept>

namespace viewgrasp {

double receptive_field_value(double distance, double lambda, double delta) {
  if (!(lambda > 0.0) || !(delta > 0.0)) throw std::invalid_argument("receptive field needs lambda > 0 and delta > 0");
  return distance < delta ? std::exp(-lambda * distance * distance) : 0.0;
}

double receptive_field(const Vec3& p, const LinkGeometry& link, const Pose& s, double lambda, double delta) {
  return receptive_field_value(link.surface_distance(p, s), lambda, delta);
}

std::vector<Pose> ContactModel::surface_poses() const {
  std::vector<Pose> out;
  out.reserve(kernels.size());
  for (const auto& k : kernels.kernels()) out.push_back(inverse(k.center.pose));
  return out;
}

ContactModel build_contact_model(const ObjectViewModel& view, const LinkGeometry& link, const Pose& link_pose,
                                 const Bandwidth& bw, const ReceptiveField& rf, int link_id, int view_id,
                                 int grasp_id) {
  if (view.features.empty()) throw std::invalid_argument("build_contact_model: empty object view");
  require_finite(link_pose, "link pose");
  ContactModel m;
  m.link = link_id;
  m.view = view_id;
  m.grasp = grasp_id;
  const Vec3 center = link_pose.apply(link.bound_center());
  const double reach = link.bound_radius() + rf.delta;
  std::vector<Kernel> kernels;
  double norm = 0.0;
  for (const auto& k : view.features.kernels()) {
    const Vec3& p = k.center.pose.p;
    if ((p - center).squaredNorm() > reach * reach) continue;
    const double f = receptive_field(p, link, link_pose, rf.lambda, rf.delta);
    if (f <= 0.0) continue;
    norm += f;
    kernels.push_back({{relative_link_pose(k.center.pose, link_pose), k.center.r}, f});
  }
  m.norm = norm;
  if (!kernels.empty()) m.kernels = KernelSet(std::move(kernels), bw);
  return m;
}

SelectionResult select_contacts(const std::vector<std::vector<std::vector<double>>>& norms, double eta, int zeta) {
  SelectionResult out;
  const std::size_t n_g = norms.size();
  double total = 0.0;
  for (const auto& g : norms)
    for (const auto& m : g)
      for (double v : m) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("contact-model norms must be finite and >= 0");
        total += v;
      }
  out.b.resize(n_g);
  out.c.resize(n_g);
  for (std::size_t g = 0; g < n_g; ++g) {
    const std::size_t n_v = norms[g].size();
    out.b[g].resize(n_v);
    out.c[g].assign(n_v, 0);
    for (std::size_t m = 0; m < n_v; ++m) {
      const std::size_t n_l = norms[g][m].size();
      out.b[g][m].assign(n_l, 0);
      if (!(total > 0.0)) continue;
      int kept = 0;
      for (std::size_t i = 0; i < n_l; ++i) {
        const double ratio = static_cast<double>(n_l) * n_v * n_g * norms[g][m][i] / total;
        if (ratio > eta) {
          out.b[g][m][i] = 1;
          ++kept;
        }
      }
      out.c[g][m] = kept > zeta ? 1 : 0;
    }
  }
  for (std::size_t g = 0; g < n_g; ++g)
    for (std::size_t m = 0; m < norms[g].size(); ++m)
      for (std::size_t i = 0; i < norms[g][m].size(); ++i)
        if (out.b[g][m][i] && out.c[g][m])
          out.retained.push_back({static_cast<int>(i), static_cast<int>(m), static_cast<int>(g)});
  return out;
}

}  // namespace viewgrasp
