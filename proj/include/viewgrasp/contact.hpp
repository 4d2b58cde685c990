#pragma once

#include "viewgrasp/density.hpp"
#include "viewgrasp/hand.hpp"
#include "viewgrasp/surface.hpp"

#include <array>
#include <vector>

namespace viewgrasp {

/// F(d) = exp(−λd²) for d < δ, else 0.
double receptive_field_value(double distance, double lambda, double delta);

/// Receptive field of a link at pose s for a surface point p (distance to the link surface).
double receptive_field(const Vec3& p, const LinkGeometry& link, const Pose& s, double lambda, double delta);

/// Density over the link pose u = v⁻¹∘s relative to nearby surface features,
/// jointly with their descriptors. Kernel weights are the receptive-field
/// responses, normalized; `norm` keeps their unnormalized sum.
struct ContactModel {
  int link = -1;
  int view = -1;
  int grasp = -1;
  KernelSet kernels;
  double norm = 0.0;

  bool empty() const { return kernels.empty(); }
  std::size_t size() const { return kernels.size(); }
  /// Surface feature poses in the link frame (u⁻¹ per kernel).
  std::vector<Pose> surface_poses() const;
};

struct ReceptiveField {
  double lambda = 50.0;
  double delta = 0.01;  // meters
};

ContactModel build_contact_model(const ObjectViewModel& view, const LinkGeometry& link, const Pose& link_pose,
                                 const Bandwidth& bw, const ReceptiveField& rf = {}, int link_id = -1, int view_id = -1,
                                 int grasp_id = -1);

/// Contact/view hypotheses. Indexing is [g][m][i] for b and [g][m] for c.
struct SelectionResult {
  std::vector<std::vector<std::vector<char>>> b;
  std::vector<std::vector<char>> c;
  std::vector<std::array<int, 3>> retained;  // (i, m, g)
};

/// norms[g][m][i] = ‖M_img‖. A link is kept when N_L·N_Vg·N_G·‖M‖/Σ‖M‖ > η and
/// a view when more than ζ of its links are kept.
SelectionResult select_contacts(const std::vector<std::vector<std::vector<double>>>& norms, double eta = 0.2,
                                int zeta = 3);

}  // namespace viewgrasp
