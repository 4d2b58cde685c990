#include "viewgrasp/pipeline.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace viewgrasp {

using nlohmann::json;
namespace fs = std::filesystem;

void Params::validate() const {
  if (!(sigma_q > 0.0)) throw std::invalid_argument("sigma_q must be > 0");
  bandwidth().validate();
  if (!(rf.lambda > 0.0) || !(rf.delta > 0.0)) throw std::invalid_argument("lambda and delta must be > 0");
  if (!(eta >= 0.0) || zeta < 0) throw std::invalid_argument("eta must be >= 0 and zeta >= 0");
  if (!(xi > 0.0)) throw std::invalid_argument("xi must be > 0");
  if (n_q < 1 || h1 < 1) throw std::invalid_argument("N_Q and H1 must be >= 1");
  if (!(phi >= 0.0) || !(rho > 0.0)) throw std::invalid_argument("phi must be >= 0 and rho > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
  if (k_nn < 6) throw std::invalid_argument("k_nn must be >= 6");
  schedule.validate();
}

double ModelFamily::compression_ratio() const {
  if (!merged || prototypes.empty()) return 1.0;
  return static_cast<double>(models.size()) / static_cast<double>(prototypes.size());
}

Variant parse_variant(const std::string& s) {
  if (s == "A1") return Variant::A1;
  if (s == "A2") return Variant::A2;
  if (s == "A3") return Variant::A3;
  if (s == "A4") return Variant::A4;
  throw std::invalid_argument("unknown variant '" + s + "' (expected A1, A2, A3 or A4)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A1:
      return "A1";
    case Variant::A2:
      return "A2";
    case Variant::A3:
      return "A3";
    case Variant::A4:
      return "A4";
  }
  return "?";
}

// ---------------------------------------------------------------- json helpers

namespace {

json pose_json(const Pose& p) { return {p.p.x(), p.p.y(), p.p.z(), p.q.x(), p.q.y(), p.q.z(), p.q.w()}; }

Pose pose_from(const json& j) {
  if (!j.is_array() || j.size() != 7) throw FormatError("pose must be [px,py,pz,qx,qy,qz,qw]");
  Pose p;
  p.p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  const Quat q(j[6].get<double>(), j[3].get<double>(), j[4].get<double>(), j[5].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-6) throw FormatError("pose quaternion is not unit length");
  p.q = q;  // kept verbatim so reloads are bitwise
  return p;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from(const json& j) {
  if (!j.is_array()) throw FormatError("expected a numeric array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json cloud_json(const PointCloud& c) {
  json pts = json::array();
  for (const auto& p : c.points) {
    pts.push_back(p.x());
    pts.push_back(p.y());
    pts.push_back(p.z());
  }
  return {{"viewpoint", {c.viewpoint.x(), c.viewpoint.y(), c.viewpoint.z()}}, {"points", pts}};
}

PointCloud cloud_from(const json& j) {
  PointCloud c;
  const auto& vp = j.at("viewpoint");
  c.viewpoint = {vp.at(0).get<double>(), vp.at(1).get<double>(), vp.at(2).get<double>()};
  const auto& pts = j.at("points");
  if (pts.size() % 3 != 0) throw FormatError("cloud point array length must be a multiple of 3");
  for (std::size_t i = 0; i < pts.size(); i += 3)
    c.points.emplace_back(pts[i].get<double>(), pts[i + 1].get<double>(), pts[i + 2].get<double>());
  return c;
}

json bandwidth_json(const Bandwidth& b) { return {{"sigma_p", b.sigma_p}, {"sigma_q", b.sigma_q}, {"sigma_r", b.sigma_r}}; }

Bandwidth bandwidth_from(const json& j) {
  Bandwidth b;
  b.sigma_p = j.at("sigma_p").get<double>();
  b.sigma_q = j.at("sigma_q").get<double>();
  b.sigma_r = j.at("sigma_r").get<double>();
  return b;
}

json params_json(const Params& p) {
  return {{"delta", p.rf.delta},
          {"lambda", p.rf.lambda},
          {"sigma_p", p.sigma_p},
          {"sigma_q", p.sigma_q},
          {"sigma_r", p.sigma_r},
          {"eta", p.eta},
          {"zeta", p.zeta},
          {"xi", p.xi},
          {"w_lin", p.distance.w_lin},
          {"w_ang", p.distance.w_ang},
          {"n_c", p.config.n_c},
          {"alpha", p.config.alpha},
          {"beta", p.config.beta},
          {"sigma_hc", p.config.sigma_hc},
          {"n_q", p.n_q},
          {"phi", p.phi},
          {"rho", p.rho},
          {"h1", p.h1},
          {"K", p.schedule.steps},
          {"T_start", p.schedule.t_start},
          {"T_end", p.schedule.t_end},
          {"selection_steps", p.schedule.selection_steps},
          {"survivor_fraction", p.schedule.survivor_fraction},
          {"kappa", p.kappa},
          {"k_nn", p.k_nn},
          {"ap_damping", p.ap_damping},
          {"ap_max_iter", p.ap_max_iter},
          {"mc_samples", p.mc_samples},
          {"workspace_margin", p.workspace_margin},
          {"report_top", p.report_top}};
}

// Missing keys keep their defaults so partial config files work.
Params params_from(const json& j) {
  Params p;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> known = {
        "delta",  "lambda",  "sigma_p",           "sigma_q", "sigma_r", "eta",        "zeta",        "xi",
        "w_lin",  "w_ang",   "n_c",               "alpha",   "beta",    "sigma_hc",   "n_q",         "phi",
        "rho",    "h1",      "K",                 "T_start", "T_end",   "selection_steps", "survivor_fraction",
        "kappa",  "k_nn",    "ap_damping",        "ap_max_iter",        "mc_samples", "workspace_margin",
        "report_top"};
    if (!known.count(key)) throw FormatError("unknown parameter '" + key + "'");
  }
  get("delta", p.rf.delta);
  get("lambda", p.rf.lambda);
  get("sigma_p", p.sigma_p);
  get("sigma_q", p.sigma_q);
  get("sigma_r", p.sigma_r);
  get("eta", p.eta);
  get("zeta", p.zeta);
  get("xi", p.xi);
  get("w_lin", p.distance.w_lin);
  get("w_ang", p.distance.w_ang);
  get("n_c", p.config.n_c);
  get("alpha", p.config.alpha);
  get("beta", p.config.beta);
  get("sigma_hc", p.config.sigma_hc);
  get("n_q", p.n_q);
  get("phi", p.phi);
  get("rho", p.rho);
  get("h1", p.h1);
  get("K", p.schedule.steps);
  get("T_start", p.schedule.t_start);
  get("T_end", p.schedule.t_end);
  get("selection_steps", p.schedule.selection_steps);
  get("survivor_fraction", p.schedule.survivor_fraction);
  get("kappa", p.kappa);
  get("k_nn", p.k_nn);
  get("ap_damping", p.ap_damping);
  get("ap_max_iter", p.ap_max_iter);
  get("mc_samples", p.mc_samples);
  get("workspace_margin", p.workspace_margin);
  get("report_top", p.report_top);
  p.validate();
  return p;
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw FormatError(std::string("cannot open ") + what + " " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string params_to_json(const Params& p) { return params_json(p).dump(2); }

Params params_from_json(const std::string& text) {
  try {
    return params_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("parameters: ") + e.what());
  }
}

// ---------------------------------------------------------------- demonstrations

GraspExample load_demo(const std::string& dir) {
  const fs::path root(dir);
  json m;
  try {
    m = json::parse(read_file((root / "manifest.json").string(), "demo manifest"));
  } catch (const json::exception& e) {
    throw FormatError("demo " + dir + ": " + e.what());
  }
  try {
    if (m.value("schema", "") != "viewgrasp.demo") throw FormatError("schema must be 'viewgrasp.demo'");
    GraspExample ex;
    ex.name = m.value("name", root.filename().string());
    ex.wrist = pose_from(m.at("wrist"));
    if (m.contains("trajectory"))
      for (const auto& p : m["trajectory"]) ex.trajectory.push_back(pose_from(p));
    ex.h_g = vec_from(m.at("h_g"));
    ex.h_t = vec_from(m.at("h_t"));
    if (ex.h_g.size() != ex.h_t.size()) throw FormatError("h_g and h_t differ in length");
    ex.source = m.value("source", "");
    for (const auto& v : m.at("views")) {
      PointCloud c = load_ply((root / v.at("cloud").get<std::string>()).string());
      if (v.contains("camera")) {
        ex.cameras.push_back(pose_from(v["camera"]));
        c.viewpoint = ex.cameras.back().p;
      }
      ex.views.push_back(std::move(c));
    }
    if (ex.views.empty()) throw FormatError("no views");
    return ex;
  } catch (const json::exception& e) {
    throw FormatError("demo " + dir + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("demo " + dir + ": " + e.what());
  }
}

void save_demo(const std::string& dir, const GraspExample& ex) {
  fs::create_directories(dir);
  json m;
  m["schema"] = "viewgrasp.demo";
  m["version"] = 1;
  m["name"] = ex.name;
  m["wrist"] = pose_json(ex.wrist);
  json traj = json::array();
  for (const auto& p : ex.trajectory) traj.push_back(pose_json(p));
  m["trajectory"] = traj;
  m["h_g"] = vec_json(ex.h_g);
  m["h_t"] = vec_json(ex.h_t);
  if (!ex.source.empty()) m["source"] = ex.source;
  json views = json::array();
  for (std::size_t v = 0; v < ex.views.size(); ++v) {
    const std::string file = "view" + std::to_string(v) + ".ply";
    save_ply((fs::path(dir) / file).string(), ex.views[v]);
    json jv = {{"cloud", file}};
    if (v < ex.cameras.size()) jv["camera"] = pose_json(ex.cameras[v]);
    views.push_back(jv);
  }
  m["views"] = views;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << m.dump(2) << '\n';
}

std::vector<GraspExample> load_demos(const std::string& root) {
  if (!fs::is_directory(root)) throw FormatError("demo directory " + root + " does not exist");
  std::vector<std::string> dirs;
  if (fs::exists(fs::path(root) / "manifest.json")) dirs.push_back(root);
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<GraspExample> out;
  for (const auto& d : dirs) out.push_back(load_demo(d));
  if (out.empty()) throw FormatError("no demonstrations (manifest.json) under " + root);
  return out;
}

// ---------------------------------------------------------------- training

std::vector<ObjectViewModel> example_view_models(const GraspExample& ex, const Params& params, int grasp_id) {
  std::vector<ObjectViewModel> out(ex.views.size());
  parallel_for(ex.views.size(), [&](std::size_t m) {
    out[m] = build_object_view_model(ex.views[m], params.bandwidth(), params.k_nn, static_cast<int>(m), grasp_id);
  });
  return out;
}

namespace {

// Contact models for every (i, m) of one grasp, in [m][i] order.
std::vector<std::vector<ContactModel>> grasp_contact_models(const std::vector<ObjectViewModel>& views,
                                                            const std::vector<Pose>& link_poses,
                                                            const HandModel& hand, const Params& params, int g) {
  std::vector<std::vector<ContactModel>> out(views.size(), std::vector<ContactModel>(hand.num_links()));
  parallel_for(views.size() * hand.num_links(), [&](std::size_t k) {
    const std::size_t m = k / hand.num_links(), i = k % hand.num_links();
    out[m][i] = build_contact_model(views[m], hand.links()[i].geometry, link_poses[i], params.bandwidth(), params.rf,
                                    static_cast<int>(i), static_cast<int>(m), g);
  });
  return out;
}

ModelFamily select_family(std::vector<std::vector<std::vector<ContactModel>>> all, const Params& params) {
  ModelFamily f;
  f.norms.resize(all.size());
  for (std::size_t g = 0; g < all.size(); ++g) {
    f.norms[g].resize(all[g].size());
    for (std::size_t m = 0; m < all[g].size(); ++m)
      for (const auto& cm : all[g][m]) f.norms[g][m].push_back(cm.norm);
  }
  f.selection = select_contacts(f.norms, params.eta, params.zeta);
  for (const auto& [i, m, g] : f.selection.retained) f.models.push_back(std::move(all[g][m][i]));
  return f;
}

ObjectViewModel pooled_view(const std::vector<ObjectViewModel>& views, const Bandwidth& bw, int grasp_id) {
  std::vector<Feature> features;
  for (const auto& v : views)
    for (const auto& k : v.features.kernels()) features.push_back(k.center);
  return make_object_view_model(std::move(features), bw, 0, grasp_id);
}

}  // namespace

ModelStore train(std::vector<GraspExample> examples, const HandModel& hand, const Params& params) {
  params.validate();
  if (examples.empty()) throw std::invalid_argument("training needs at least one grasp example");
  for (const auto& ex : examples) {
    if (ex.views.empty()) throw std::invalid_argument("grasp '" + ex.name + "' has no views");
    if (ex.h_g.size() != hand.dof() || ex.h_t.size() != hand.dof())
      throw std::invalid_argument("grasp '" + ex.name + "': configuration length does not match the hand");
    require_finite(ex.wrist, "grasp wrist pose");
  }
  ModelStore store;
  store.params = params;
  store.hand = hand;
  std::vector<std::vector<std::vector<ContactModel>>> by_view, pooled;
  for (std::size_t g = 0; g < examples.size(); ++g) {
    const auto& ex = examples[g];
    const auto views = example_view_models(ex, params, static_cast<int>(g));
    const auto links = hand.forward_kinematics(ex.wrist, ex.h_g);
    by_view.push_back(grasp_contact_models(views, links, hand, params, static_cast<int>(g)));
    double total = 0.0;
    for (const auto& m : by_view.back())
      for (const auto& cm : m) total += cm.norm;
    if (!(total > 0.0))
      throw std::invalid_argument("grasp '" + ex.name + "': no hand link lies within delta of any view");
    pooled.push_back(grasp_contact_models({pooled_view(views, params.bandwidth(), static_cast<int>(g))}, links, hand, params,
                                          static_cast<int>(g)));
  }
  store.views = select_family(std::move(by_view), params);
  store.registered = select_family(std::move(pooled), params);
  if (store.views.models.empty()) throw InvalidState("no grasp-view pair survived contact/view selection");
  for (const auto& ex : examples) store.config_models.push_back(build_config_model(ex.h_g, ex.h_t, params.config));
  store.examples = std::move(examples);
  return store;
}

namespace {

void singleton_clusters(ModelFamily& f) {
  f.prototypes.clear();
  f.model_cluster.clear();
  for (std::size_t k = 0; k < f.models.size(); ++k) {
    f.prototypes.push_back(build_prototype({static_cast<int>(k)}, 0, {0.0}, 1.0));
    f.model_cluster.push_back(static_cast<int>(k));
  }
}

}  // namespace

void merge(ModelStore& store, bool enabled) {
  auto& f = store.views;
  f.ap_converged = true;
  if (!enabled || f.models.size() < 2) {
    singleton_clusters(f);
    f.merged = true;
    return;
  }
  std::vector<const ContactModel*> ptrs;
  for (const auto& m : f.models) ptrs.push_back(&m);
  const Eigen::MatrixXd d = distance_matrix(ptrs, store.params.distance);
  APOptions opt;
  opt.damping = store.params.ap_damping;
  opt.max_iter = store.params.ap_max_iter;
  const APResult ap = affinity_propagation(d, opt);
  f.ap_converged = ap.converged;
  f.prototypes.clear();
  f.model_cluster = ap.labels;
  for (std::size_t c = 0; c < ap.exemplars.size(); ++c) {
    std::vector<int> members;
    std::vector<double> dist;
    int exemplar = 0;
    for (std::size_t k = 0; k < ap.labels.size(); ++k) {
      if (ap.labels[k] != static_cast<int>(c)) continue;
      if (static_cast<int>(k) == ap.exemplars[c]) exemplar = static_cast<int>(members.size());
      members.push_back(static_cast<int>(k));
      dist.push_back(d(ap.exemplars[c], k));
    }
    f.prototypes.push_back(build_prototype(std::move(members), exemplar, dist, store.params.xi));
  }
  f.merged = true;
}

// ---------------------------------------------------------------- inference

InferenceResult infer(const ModelStore& store, const PointCloud& cloud, const InferOptions& opt) {
  using clock = std::chrono::steady_clock;
  if (cloud.empty()) throw std::invalid_argument("test cloud is empty");
  const Params& P = store.params;
  const bool registered = opt.variant == Variant::A1;
  const ModelFamily& family = registered ? store.registered : store.views;
  if (family.models.empty()) throw InvalidState("the store has no retained contact models for " + to_string(opt.variant));

  ModelFamily singles;
  const ModelFamily* clustered = &family;
  if (opt.variant == Variant::A4) {
    if (!family.merged) throw InvalidState("store is not merged; run merge before inferring with A4");
  } else {
    singles.models.clear();
    singles.prototypes.clear();
    for (std::size_t k = 0; k < family.models.size(); ++k) {
      singles.prototypes.push_back(build_prototype({static_cast<int>(k)}, 0, {0.0}, 1.0));
      singles.model_cluster.push_back(static_cast<int>(k));
    }
    clustered = &singles;
  }
  const auto& prototypes = clustered->prototypes;
  const auto& model_cluster = clustered->model_cluster;

  InferenceResult res;
  res.cloud_points = cloud.size();
  const auto t0 = clock::now();
  ObjectViewModel view;
  if (cloud.has_normals()) {
    view = make_object_view_model(principal_curvature_features(cloud, P.k_nn), P.bandwidth());
  } else {
    const auto est = estimate_normals(cloud, P.k_nn);
    res.dropped_normals = est.dropped;
    if (est.cloud.size() < 6) throw std::invalid_argument("test cloud has too few usable points");
    view = make_object_view_model(principal_curvature_features(est.cloud, P.k_nn), P.bandwidth());
  }
  const SurfaceIndex view_index = index_view(view, P.distance);
  QueryParams qp;
  qp.n_q = opt.n_q.value_or(P.n_q);
  qp.phi = P.phi;
  qp.rho = P.rho;
  qp.distance = P.distance;
  qp.mc_samples = P.mc_samples;
  qp.weighting = (opt.variant == Variant::A1 || opt.variant == Variant::A2) ? QueryWeighting::Marginal
                                                                              : QueryWeighting::Divergence;
  res.queries.resize(prototypes.size());
  for (std::size_t l = 0; l < prototypes.size(); ++l)
    res.queries[l] =
        form_query_density(view, view_index, prototypes[l], family.models, qp, opt.seed, static_cast<int>(l));
  const auto t1 = clock::now();

  // Grasp-view pairs that survived selection, each with its links' densities.
  for (std::size_t g = 0; g < family.selection.c.size(); ++g) {
    for (std::size_t m = 0; m < family.selection.c[g].size(); ++m) {
      if (!family.selection.c[g][m]) continue;
      PairQueries pq;
      pq.grasp = static_cast<int>(g);
      pq.view = static_cast<int>(m);
      pq.config = &store.config_models.at(g);
      for (std::size_t k = 0; k < family.models.size(); ++k) {
        const auto& cm = family.models[k];
        if (cm.grasp == static_cast<int>(g) && cm.view == static_cast<int>(m))
          pq.links.emplace_back(cm.link, &res.queries[model_cluster[k]]);
      }
      if (!pq.links.empty()) res.pairs.push_back(std::move(pq));
    }
  }
  if (res.pairs.empty()) throw InvalidState("no retained grasp-view pairs");
  for (const auto& pq : res.pairs) res.n_q_max = std::max(res.n_q_max, static_cast<int>(pq.links.size()));

  Vec3 lo = cloud.points.front(), hi = lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  WorkspaceBox box{lo - Vec3::Constant(P.workspace_margin), hi + Vec3::Constant(P.workspace_margin)};
  const CollisionExpert collision(cloud, P.kappa);
  auto seeds = generate_seeds(res.pairs, store.hand, opt.h1.value_or(P.h1), opt.seed, box);
  AnnealSchedule schedule = P.schedule;
  if (opt.steps) {
    schedule.steps = *opt.steps;
    std::vector<int> sel;
    for (int s : schedule.selection_steps)
      if (s <= schedule.steps) sel.push_back(s);
    schedule.selection_steps = sel;
  }
  const int n_q_max = res.n_q_max;
  GraspObjective objective = [&](GraspSolution& s, bool selection) {
    grasp_likelihood(s, store.hand, res.pairs[s.pair], n_q_max, selection ? &collision : nullptr);
  };
  auto ranked = optimize(std::move(seeds), schedule, objective, store.hand, opt.seed);
  std::erase_if(ranked, [&](const GraspSolution& s) { return !box.contains(s.h_w.p); });
  res.degenerate_ranking =
      std::all_of(ranked.begin(), ranked.end(), [](const GraspSolution& s) { return !std::isfinite(s.log_score); });
  res.grasps = std::move(ranked);
  const auto t2 = clock::now();
  res.timing.query_density_seconds = std::chrono::duration<double>(t1 - t0).count();
  res.timing.generation_optimisation_seconds = std::chrono::duration<double>(t2 - t1).count();
  if (res.grasps.empty()) throw InvalidState("no feasible grasp inside the workspace");
  return res;
}

std::string format_report(const InferenceResult& r, const ModelStore& store, const InferOptions& opt,
                          const std::string& cloud_name, std::optional<bool> success) {
  std::ostringstream os;
  const int top = std::min<int>(static_cast<int>(r.grasps.size()), std::max(1, store.params.report_top));
  for (int k = 0; k < top; ++k) {
    const auto& s = r.grasps[k];
    json j = {{"type", "grasp"},
              {"rank", k + 1},
              {"h_w", pose_json(s.h_w)},
              {"h_c", vec_json(s.h_c)},
              {"source", {{"grasp", s.grasp}, {"view", s.view}}},
              {"seed_link", s.seed_link},
              {"log_L_W", s.log_w},
              {"log_L_C", s.log_c},
              {"log_L_Q", s.log_q},
              {"N_Q", s.n_q},
              {"N_Q_max", r.n_q_max},
              {"log_score", s.log_score},
              {"score", std::exp(s.log_score)}};
    if (s.grasp >= 0 && s.grasp < static_cast<int>(store.examples.size()))
      j["source"]["name"] = store.examples[s.grasp].name;
    os << j.dump() << '\n';
  }
  json summary = {{"type", "summary"},
                  {"cloud", cloud_name},
                  {"variant", to_string(opt.variant)},
                  {"seed", opt.seed},
                  {"cloud_points", r.cloud_points},
                  {"dropped_normals", r.dropped_normals},
                  {"query_densities", r.queries.size()},
                  {"grasp_view_pairs", r.pairs.size()},
                  {"candidates", r.grasps.size()},
                  {"degenerate_ranking", r.degenerate_ranking},
                  {"timing",
                   {{"Query density computation", r.timing.query_density_seconds},
                    {"Generation & Optimisation", r.timing.generation_optimisation_seconds}}}};
  if (success) {
    summary["geometric_success"] = *success;
    summary["success_criterion"] = "geometric proxy: >=2 links within 3 mm, opposition >= 120 deg, penetration <= 3 mm";
  }
  os << summary.dump() << '\n';
  return os.str();
}

// ---------------------------------------------------------------- success check

SuccessReport geometric_success_check(const HandModel& hand, const Pose& h_w, const Config& h_c, const Scene& scene,
                                      const SuccessCriteria& c) {
  SuccessReport rep;
  if (scene.empty()) return rep;
  const auto poses = hand.forward_kinematics(h_w, h_c);
  std::vector<Vec3> normals;
  double pen = 0.0;
  for (std::size_t i = 0; i < hand.num_links(); ++i) {
    Rng rng = substream(0xc4ec, 1, i);
    std::vector<Vec3> pts, nrm;
    hand.links()[i].geometry.sample_surface(400, poses[i], rng, pts, nrm);
    double best = std::numeric_limits<double>::infinity();
    Vec3 at = Vec3::Zero();
    for (const auto& p : pts) {
      const double d = scene.sdf(p);
      if (d < best) {
        best = d;
        at = p;
      }
    }
    pen = std::max(pen, -best);
    if (best <= c.contact_tol) {
      rep.contact_links.push_back(static_cast<int>(i));
      normals.push_back(scene.normal(at));
    }
  }
  // Thin parts can pass between link samples: test object samples against the links too.
  Rng rng = substream(0xc4ec, 2, 0);
  std::vector<Vec3> surf, surf_n;
  scene.sample_surface(3000, rng, surf, surf_n);
  for (const auto& p : surf)
    for (std::size_t i = 0; i < hand.num_links(); ++i)
      pen = std::max(pen, -hand.links()[i].geometry.signed_distance(p, poses[i]));
  rep.penetration = pen;
  rep.contacts = static_cast<int>(normals.size());
  double widest = 0.0;
  for (std::size_t a = 0; a < normals.size(); ++a)
    for (std::size_t b = a + 1; b < normals.size(); ++b) widest = std::max(widest, vector_angle(normals[a], normals[b]));
  rep.opposition_deg = widest * 180.0 / std::numbers::pi;
  rep.success = rep.contacts >= c.min_contacts && rep.opposition_deg >= c.min_opposition_deg &&
                rep.penetration <= c.max_penetration;
  return rep;
}

// ---------------------------------------------------------------- store

namespace {

json model_json(const ContactModel& m) {
  json ks = json::array();
  for (const auto& k : m.kernels.kernels()) {
    const auto& p = k.center.pose;
    ks.push_back({p.p.x(), p.p.y(), p.p.z(), p.q.x(), p.q.y(), p.q.z(), p.q.w(), k.center.r[0], k.center.r[1],
                  k.weight});
  }
  return {{"link", m.link}, {"view", m.view}, {"grasp", m.grasp}, {"norm", m.norm},
          {"bandwidth", bandwidth_json(m.kernels.bandwidth())}, {"kernels", ks}};
}

ContactModel model_from(const json& j) {
  ContactModel m;
  m.link = j.at("link").get<int>();
  m.view = j.at("view").get<int>();
  m.grasp = j.at("grasp").get<int>();
  m.norm = j.at("norm").get<double>();
  std::vector<Kernel> ks;
  for (const auto& k : j.at("kernels")) {
    if (k.size() != 10) throw FormatError("contact-model kernel must have 10 numbers");
    Kernel kk;
    kk.center.pose.p = {k[0].get<double>(), k[1].get<double>(), k[2].get<double>()};
    kk.center.pose.q = Quat(k[6].get<double>(), k[3].get<double>(), k[4].get<double>(), k[5].get<double>());
    kk.center.r = {k[7].get<double>(), k[8].get<double>()};
    kk.weight = k[9].get<double>();
    ks.push_back(kk);
  }
  if (!ks.empty()) m.kernels = KernelSet::from_normalized(std::move(ks), bandwidth_from(j.at("bandwidth")));
  return m;
}

json family_json(const ModelFamily& f) {
  json models = json::array();
  for (const auto& m : f.models) models.push_back(model_json(m));
  json protos = json::array();
  for (const auto& p : f.prototypes)
    protos.push_back({{"members", p.members}, {"probabilities", p.probabilities}, {"exemplar", p.exemplar}});
  return {{"norms", f.norms},           {"models", models},         {"merged", f.merged},
          {"prototypes", protos},       {"model_cluster", f.model_cluster}, {"ap_converged", f.ap_converged}};
}

ModelFamily family_from(const json& j, const Params& params) {
  ModelFamily f;
  f.norms = j.at("norms").get<std::vector<std::vector<std::vector<double>>>>();
  f.selection = select_contacts(f.norms, params.eta, params.zeta);
  for (const auto& m : j.at("models")) f.models.push_back(model_from(m));
  if (f.models.size() != f.selection.retained.size())
    throw FormatError("store: retained contact models do not match the stored norms");
  f.merged = j.at("merged").get<bool>();
  f.model_cluster = j.at("model_cluster").get<std::vector<int>>();
  f.ap_converged = j.value("ap_converged", true);
  for (const auto& p : j.at("prototypes")) {
    ClusterPrototype cp;
    cp.members = p.at("members").get<std::vector<int>>();
    cp.probabilities = p.at("probabilities").get<std::vector<double>>();
    cp.exemplar = p.at("exemplar").get<int>();
    if (cp.members.empty() || cp.members.size() != cp.probabilities.size())
      throw FormatError("store: malformed prototype");
    double acc = 0.0;
    for (double w : cp.probabilities) cp.cumulative.push_back(acc += w);
    for (int m : cp.members)
      if (m < 0 || m >= static_cast<int>(f.models.size())) throw FormatError("store: prototype member out of range");
    f.prototypes.push_back(std::move(cp));
  }
  if (f.merged && f.model_cluster.size() != f.models.size()) throw FormatError("store: cluster map size mismatch");
  return f;
}

}  // namespace

std::string store_to_json(const ModelStore& store) {
  json doc;
  doc["schema"] = "viewgrasp.store";
  doc["version"] = store.schema_version;
  doc["params"] = params_json(store.params);
  doc["hand"] = json::parse(hand_to_json(store.hand));
  json exs = json::array();
  for (const auto& ex : store.examples) {
    json views = json::array();
    for (std::size_t v = 0; v < ex.views.size(); ++v) {
      json jv = cloud_json(ex.views[v]);
      if (v < ex.cameras.size()) jv["camera"] = pose_json(ex.cameras[v]);
      views.push_back(jv);
    }
    json traj = json::array();
    for (const auto& p : ex.trajectory) traj.push_back(pose_json(p));
    exs.push_back({{"name", ex.name},
                   {"wrist", pose_json(ex.wrist)},
                   {"trajectory", traj},
                   {"h_g", vec_json(ex.h_g)},
                   {"h_t", vec_json(ex.h_t)},
                   {"source", ex.source},
                   {"views", views}});
  }
  doc["examples"] = exs;
  doc["families"] = {{"views", family_json(store.views)}, {"registered", family_json(store.registered)}};
  return doc.dump();
}

ModelStore store_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("store: ") + e.what());
  }
  try {
    if (doc.value("schema", "") != "viewgrasp.store") throw FormatError("store: schema must be 'viewgrasp.store'");
    const int version = doc.at("version").get<int>();
    if (version != kStoreSchemaVersion)
      throw FormatError("store: schema version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kStoreSchemaVersion) + ")");
    ModelStore s;
    s.params = params_from(doc.at("params"));
    s.hand = parse_hand_json(doc.at("hand").dump());
    for (const auto& je : doc.at("examples")) {
      GraspExample ex;
      ex.name = je.at("name").get<std::string>();
      ex.wrist = pose_from(je.at("wrist"));
      for (const auto& p : je.at("trajectory")) ex.trajectory.push_back(pose_from(p));
      ex.h_g = vec_from(je.at("h_g"));
      ex.h_t = vec_from(je.at("h_t"));
      ex.source = je.value("source", "");
      for (const auto& jv : je.at("views")) {
        ex.views.push_back(cloud_from(jv));
        if (jv.contains("camera")) ex.cameras.push_back(pose_from(jv["camera"]));
      }
      s.config_models.push_back(build_config_model(ex.h_g, ex.h_t, s.params.config));
      s.examples.push_back(std::move(ex));
    }
    s.views = family_from(doc.at("families").at("views"), s.params);
    s.registered = family_from(doc.at("families").at("registered"), s.params);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("store: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("store: ") + e.what());
  }
}

void save_store(const std::string& path, const ModelStore& store) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write store " + path);
    out << store_to_json(store);
  }
  fs::rename(tmp, path);
}

ModelStore load_store(const std::string& path) { return store_from_json(read_file(path, "store")); }

// ---------------------------------------------------------------- autonomous training

std::vector<SelfTrainScene> load_scenes(const std::string& dir) {
  if (!fs::is_directory(dir)) throw FormatError("scene directory " + dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".scene") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SelfTrainScene> out;
  for (const auto& f : files) {
    SelfTrainScene s{f.stem().string(), load_scene(f.string())};
    if (!s.scene.camera) throw FormatError("scene " + f.string() + " has no camera line");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw FormatError("no .scene files in " + dir);
  return out;
}

namespace {

ModelStore retrain(const ModelStore& like, std::vector<GraspExample> examples) {
  ModelStore s = train(std::move(examples), like.hand, like.params);
  if (like.views.merged) merge(s, true);
  return s;
}

}  // namespace

std::vector<SelfTrainRound> selftrain(ModelStore& store, const std::vector<SelfTrainScene>& scenes,
                                      const SelfTrainOptions& opt) {
  if (opt.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (opt.variant == Variant::A4 && !store.views.merged) merge(store, true);
  std::vector<SelfTrainRound> rounds;
  for (int r = 1; r <= opt.rounds; ++r) {
    SelfTrainRound round;
    round.round = r;
    std::vector<GraspExample> fresh;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      const auto& sc = scenes[si];
      const bool has_prior = std::any_of(store.examples.begin(), store.examples.end(),
                                         [&](const GraspExample& e) { return e.source == sc.name; });
      std::optional<ModelStore> loo;
      if (has_prior) {
        std::vector<GraspExample> keep;
        for (const auto& e : store.examples)
          if (e.source != sc.name) keep.push_back(e);
        try {
          loo = retrain(store, std::move(keep));
        } catch (const std::exception&) {
          continue;  // nothing left to learn from without this scene
        }
      }
      const ModelStore& model = loo ? *loo : store;
      const PointCloud cloud = simulate_depth_view(sc.scene, *sc.scene.camera, sc.scene.intrinsics);
      InferOptions io;
      io.variant = opt.variant;
      io.seed = mix64(opt.seed ^ mix64(static_cast<std::uint64_t>(r) * 1000003ULL + si));
      io.n_q = opt.n_q;
      io.h1 = opt.h1;
      io.steps = opt.steps;
      ++round.attempted;
      InferenceResult res;
      try {
        res = infer(model, cloud, io);
      } catch (const std::exception&) {
        continue;
      }
      const auto& best = res.grasps.front();
      if (!geometric_success_check(model.hand, best.h_w, best.h_c, sc.scene).success || has_prior) continue;
      GraspExample ex;
      ex.name = "self:" + sc.name + ":r" + std::to_string(r);
      ex.wrist = best.h_w;
      ex.h_g = best.h_c;
      ex.h_t = best.h_c - Config::Constant(best.h_c.size(), opt.open_offset);
      store.hand.clamp(ex.h_t);
      ex.views = {cloud};
      ex.cameras = {*sc.scene.camera};
      ex.source = sc.name;
      fresh.push_back(std::move(ex));
      round.succeeded.push_back(sc.name);
    }
    round.new_successes = static_cast<int>(fresh.size());
    rounds.push_back(round);
    if (fresh.empty()) break;
    std::vector<GraspExample> all = store.examples;
    for (auto& e : fresh) all.push_back(std::move(e));
    store = retrain(store, std::move(all));
  }
  return rounds;
}

}  // namespace viewgrasp
