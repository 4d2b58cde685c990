#include "viewgrasp/planner.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace viewgrasp {

double normalized_log_score(double log_w, double log_c, double log_q, int n_q_gm, int n_q_max) {
  if (n_q_gm < 1) throw std::invalid_argument("N_Q^gm must be >= 1");
  if (n_q_max < n_q_gm) throw std::invalid_argument("N_Q^max must be >= N_Q^gm");
  return log_w + log_c + static_cast<double>(n_q_max) / n_q_gm * log_q;
}

double normalized_score(double l_w, double l_c, double l_q, int n_q_gm, int n_q_max) {
  if (n_q_gm < 1) throw std::invalid_argument("N_Q^gm must be >= 1");
  return l_w * l_c * std::pow(l_q, static_cast<double>(n_q_max) / n_q_gm);
}

CollisionExpert::CollisionExpert(const PointCloud& cloud, double kappa)
    : cloud_(std::vector<Vec3>(cloud.points.begin(), cloud.points.end())), kappa_(kappa) {
  if (cloud.empty()) throw std::invalid_argument("collision expert needs a non-empty cloud");
  if (!(kappa > 0.0)) throw std::invalid_argument("collision kappa must be > 0");
}

double CollisionExpert::penetration(const HandModel& hand, const std::vector<Pose>& link_poses) const {
  double depth = 0.0;
  thread_local std::vector<KdTree<3>::Neighbor> nn;
  for (std::size_t i = 0; i < hand.num_links(); ++i) {
    const auto& geom = hand.links()[i].geometry;
    const Vec3 c = link_poses[i].apply(geom.bound_center());
    const double r = geom.bound_radius();
    cloud_.radius(c, r * r, nn);
    if (nn.empty()) continue;
    const Pose inv = inverse(link_poses[i]);
    for (const auto& n : nn) {
      const Vec3 local = inv.apply(cloud_.point(n.index));
      double d = std::numeric_limits<double>::infinity();
      for (const auto& s : geom.shapes) d = std::min(d, s.sdf(local));
      depth = std::max(depth, -d);
    }
  }
  return depth;
}

double CollisionExpert::penetration(const HandModel& hand, const Pose& h_w, const Config& h_c) const {
  return penetration(hand, hand.forward_kinematics(h_w, h_c));
}

double CollisionExpert::log_value(const HandModel& hand, const Pose& h_w, const Config& h_c) const {
  return -kappa_ * penetration(hand, h_w, h_c);
}

double CollisionExpert::value(const HandModel& hand, const Pose& h_w, const Config& h_c) const {
  return std::exp(log_value(hand, h_w, h_c));
}

double collision_expert(const HandModel& hand, const Pose& h_w, const Config& h_c, const PointCloud& cloud,
                        double kappa) {
  return CollisionExpert(cloud, kappa).value(hand, h_w, h_c);
}

void grasp_likelihood(GraspSolution& sol, const HandModel& hand, const PairQueries& pair, int n_q_max,
                      const CollisionExpert* collision) {
  if (pair.links.empty()) throw std::invalid_argument("grasp-view pair has no query densities");
  if (!pair.config) throw std::invalid_argument("grasp-view pair has no hand configuration model");
  const auto poses = hand.forward_kinematics(sol.h_w, sol.h_c);
  double log_q = 0.0;
  for (const auto& [link, q] : pair.links) {
    if (!q || link < 0 || link >= static_cast<int>(poses.size()))
      throw std::invalid_argument("missing query density for link " + std::to_string(link));
    log_q += q->log_eval(poses[link]);
  }
  sol.log_q = log_q;
  sol.log_c = pair.config->log_eval(sol.h_c);
  sol.log_w = collision ? -collision->kappa() * collision->penetration(hand, poses) : 0.0;
  sol.n_q = static_cast<int>(pair.links.size());
  sol.log_score = normalized_log_score(sol.log_w, sol.log_c, sol.log_q, sol.n_q, n_q_max);
}

std::vector<GraspSolution> generate_seeds(const std::vector<PairQueries>& pairs, const HandModel& hand, int count,
                                          std::uint64_t seed, const WorkspaceBox& workspace) {
  std::vector<int> usable;
  for (std::size_t p = 0; p < pairs.size(); ++p)
    if (!pairs[p].links.empty() && pairs[p].config) usable.push_back(static_cast<int>(p));
  if (usable.empty()) throw InvalidState("no retained grasp-view pairs with query densities");
  if (count < 1) throw std::invalid_argument("seed count must be >= 1");
  std::vector<GraspSolution> out(count);
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t j) {
    Rng rng = substream(seed, 0x5eed, j);
    GraspSolution s;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int p = usable[static_cast<std::size_t>(uniform01(rng) * usable.size()) % usable.size()];
      const auto& pair = pairs[p];
      const auto& [link, q] = pair.links[static_cast<std::size_t>(uniform01(rng) * pair.links.size()) % pair.links.size()];
      const Pose s_i = q->sample(rng);
      Config h_c = pair.config->sample(rng);
      hand.clamp(h_c);
      s.h_c = h_c;
      s.h_w = hand.solve_wrist(link, s_i, h_c);
      s.pair = p;
      s.grasp = pair.grasp;
      s.view = pair.view;
      s.seed_link = link;
      s.n_q = static_cast<int>(pair.links.size());
      if (workspace.contains(s.h_w.p)) break;
    }
    out[j] = s;
  });
  return out;
}

double AnnealSchedule::temperature(int step) const {
  if (steps <= 1) return t_start;
  const double f = static_cast<double>(step - 1) / (steps - 1);
  return t_start + (t_end - t_start) * f;
}

void AnnealSchedule::validate() const {
  if (steps < 1) throw std::invalid_argument("K must be >= 1");
  if (!(t_start > 0.0) || !(t_end > 0.0)) throw std::invalid_argument("temperatures must be > 0");
  if (!(survivor_fraction > 0.0 && survivor_fraction <= 1.0))
    throw std::invalid_argument("survivor fraction must be in (0, 1]");
  for (int s : selection_steps)
    if (s < 1 || s > steps) throw std::invalid_argument("selection steps must lie in [1, K]");
}

void rank_solutions(std::vector<GraspSolution>& sols) {
  std::stable_sort(sols.begin(), sols.end(), [](const GraspSolution& a, const GraspSolution& b) {
    if (a.log_score != b.log_score) return a.log_score > b.log_score;
    return a.log_w > b.log_w;
  });
}

namespace {

struct Annealed {
  GraspSolution current;
  GraspSolution best;
  int id = 0;
};

GraspSolution propose(const GraspSolution& s, double t, const HandModel& hand, Rng& rng) {
  GraspSolution out = s;
  out.h_w.p = s.h_w.p + normal3(rng, 0.1 * t);
  const Quat dq = sample_vmf_pair(rng, Quat::Identity(), 20.0 / t);
  out.h_w.q = normalized(s.h_w.q * dq);
  for (int j = 0; j < out.h_c.size(); ++j) out.h_c[j] += t * normal01(rng);
  hand.clamp(out.h_c);
  return out;
}

void select(std::vector<Annealed>& pop, double fraction, const GraspObjective& objective) {
  parallel_for(pop.size(), [&](std::size_t i) {
    objective(pop[i].best, true);
    objective(pop[i].current, false);
  });
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pop[a].best.log_score != pop[b].best.log_score) return pop[a].best.log_score > pop[b].best.log_score;
    return pop[a].best.log_w > pop[b].best.log_w;
  });
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * pop.size())));
  std::vector<Annealed> next;
  next.reserve(keep);
  for (std::size_t k = 0; k < std::min(keep, order.size()); ++k) {
    Annealed a = pop[order[k]];
    objective(a.best, false);  // elites compete on the annealing objective again
    a.current = a.best;
    next.push_back(std::move(a));
  }
  pop = std::move(next);
}

}  // namespace

std::vector<GraspSolution> optimize(std::vector<GraspSolution> seeds, const AnnealSchedule& schedule,
                                    const GraspObjective& objective, const HandModel& hand, std::uint64_t seed,
                                    OptimizeTrace* trace) {
  schedule.validate();
  if (seeds.empty()) throw std::invalid_argument("optimize: no seeds");
  std::vector<Annealed> pop(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    pop[i].id = static_cast<int>(i);
    pop[i].current = std::move(seeds[i]);
    objective(pop[i].current, false);
    pop[i].best = pop[i].current;
  });
  const std::size_t n0 = pop.size();
  auto best_of = [&] {
    double b = -std::numeric_limits<double>::infinity();
    for (const auto& a : pop) b = std::max(b, a.best.log_score);
    return b;
  };
  if (trace) {
    trace->best_so_far.clear();
    trace->initial_best = best_of();
  }
  for (int k = 1; k <= schedule.steps; ++k) {
    if (std::find(schedule.selection_steps.begin(), schedule.selection_steps.end(), k) !=
        schedule.selection_steps.end())
      select(pop, schedule.survivor_fraction, objective);
    const double t = schedule.temperature(k);
    parallel_for(pop.size(), [&](std::size_t i) {
      auto& a = pop[i];
      Rng rng = substream(seed, 0x5a000000ULL + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(a.id));
      GraspSolution cand = propose(a.current, t, hand, rng);
      objective(cand, false);
      const double delta = cand.log_score - a.current.log_score;
      const bool accept = delta >= 0.0 || (std::isfinite(delta) && uniform01(rng) < std::exp(delta / t)) ||
                          (!std::isfinite(a.current.log_score) && std::isfinite(cand.log_score));
      if (accept) a.current = std::move(cand);
      if (a.current.log_score > a.best.log_score) a.best = a.current;
    });
    if (trace) {
      std::vector<double> row(n0, std::numeric_limits<double>::quiet_NaN());
      for (const auto& a : pop) row[a.id] = a.best.log_score;
      trace->best_so_far.push_back(std::move(row));
    }
  }
  if (trace) trace->final_best = best_of();
  std::vector<GraspSolution> out;
  out.reserve(pop.size());
  for (auto& a : pop) out.push_back(std::move(a.best));
  parallel_for(out.size(), [&](std::size_t i) { objective(out[i], true); });
  rank_solutions(out);
  return out;
}

}  // namespace viewgrasp
