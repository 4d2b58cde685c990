#pragma once

// Grasp generation and refinement: seed grasps drawn from query densities,
// simulated annealing on the product of experts, and ranking by the
// link-count-normalized likelihood.

#include "viewgrasp/hand.hpp"
#include "viewgrasp/kdtree.hpp"
#include "viewgrasp/query.hpp"
#include "viewgrasp/surface.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace viewgrasp {

/// Query densities of one grasp-view pair: links mapped to their density.
struct PairQueries {
  int grasp = -1;
  int view = -1;
  std::vector<std::pair<int, const QueryDensity*>> links;  // (link index, density)
  const HandConfigModel* config = nullptr;
};

struct GraspSolution {
  Pose h_w;
  Config h_c;
  int pair = -1;  // index into the PairQueries list
  int grasp = -1;
  int view = -1;
  int seed_link = -1;
  double log_w = 0.0;  // collision expert
  double log_c = 0.0;  // hand configuration expert
  double log_q = 0.0;  // product of query densities
  int n_q = 1;         // query densities in the pair
  double log_score = -std::numeric_limits<double>::infinity();  // log of the normalized likelihood
};

/// log of L_W·L_C·L_Q^{N_max/N_gm}.
double normalized_log_score(double log_w, double log_c, double log_q, int n_q_gm, int n_q_max);
/// L_W·L_C·L_Q^{N_max/N_gm}.
double normalized_score(double l_w, double l_c, double l_q, int n_q_gm, int n_q_max);

/// Soft collision expert W = exp(−κ·d_pen) with d_pen the deepest penetration of
/// any cloud point into any link.
class CollisionExpert {
 public:
  CollisionExpert() = default;
  CollisionExpert(const PointCloud& cloud, double kappa = 1000.0);

  double kappa() const { return kappa_; }
  double penetration(const HandModel& hand, const Pose& h_w, const Config& h_c) const;
  double penetration(const HandModel& hand, const std::vector<Pose>& link_poses) const;
  double log_value(const HandModel& hand, const Pose& h_w, const Config& h_c) const;
  double value(const HandModel& hand, const Pose& h_w, const Config& h_c) const;

 private:
  KdTree<3> cloud_;
  double kappa_ = 1000.0;
};

double collision_expert(const HandModel& hand, const Pose& h_w, const Config& h_c, const PointCloud& cloud,
                        double kappa = 1000.0);

/// Fills log_c, log_q (and log_w when `collision` is given) and the normalized score.
/// Throws std::invalid_argument if a mapped link has no density.
void grasp_likelihood(GraspSolution& sol, const HandModel& hand, const PairQueries& pair, int n_q_max,
                      const CollisionExpert* collision);

struct WorkspaceBox {
  Vec3 lo = Vec3::Constant(-std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::infinity());
  bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
};

/// H seeds: pair uniform, link uniform within the pair, s_i ~ Q, h_c ~ C^g,
/// wrist solved so the link lands exactly at s_i. Seeds whose wrist leaves the
/// workspace box are redrawn (bounded); seed j uses substream(seed, tag, j).
std::vector<GraspSolution> generate_seeds(const std::vector<PairQueries>& pairs, const HandModel& hand, int count,
                                          std::uint64_t seed, const WorkspaceBox& workspace = {});

struct AnnealSchedule {
  int steps = 500;
  double t_start = 0.05;
  double t_end = 0.005;
  std::vector<int> selection_steps = {1, 50};
  double survivor_fraction = 0.1;

  double temperature(int step) const;  // step in [1, steps]
  void validate() const;
};

/// Objective seen by the annealer. `selection` is true when the collision
/// expert must be included.
using GraspObjective = std::function<void(GraspSolution&, bool selection)>;

struct OptimizeTrace {
  std::vector<std::vector<double>> best_so_far;  // [step][candidate id], NaN once pruned
  double initial_best = 0.0;
  double final_best = 0.0;
};

/// Simulated annealing with elitism. Returns survivors at their best states,
/// scored with the collision expert and sorted by decreasing score.
std::vector<GraspSolution> optimize(std::vector<GraspSolution> seeds, const AnnealSchedule& schedule,
                                    const GraspObjective& objective, const HandModel& hand, std::uint64_t seed,
                                    OptimizeTrace* trace = nullptr);

/// Orders by log_score; candidates whose scores are all −∞ are ordered by
/// (collision-free first, then lower penetration proxy log_w).
void rank_solutions(std::vector<GraspSolution>& sols);

}  // namespace viewgrasp
