#pragma once

// End-to-end learning and inference: training examples, the model store,
// variant-specific inference and the autonomous training loop.

#include "viewgrasp/cluster.hpp"
#include "viewgrasp/hand.hpp"
#include "viewgrasp/planner.hpp"
#include "viewgrasp/query.hpp"
#include "viewgrasp/scene.hpp"
#include "viewgrasp/surface.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace viewgrasp {

inline constexpr int kStoreSchemaVersion = 1;

struct Params {
  ReceptiveField rf;            // δ = 0.01, λ = 50
  double sigma_p = 0.005;       // meters
  double sigma_q = 0.5;         // angular bandwidth, radians
  double sigma_r = 10.0;
  double eta = 0.2;
  int zeta = 3;
  double xi = 1.0;
  DistanceWeights distance;     // w_lin = 1, w_ang = 0.01
  ConfigModelParams config;     // N_C = 1000, α = 100, β = 1, σ_hc = 0.05
  int n_q = 5000;
  double phi = 1.0;
  double rho = 0.02;            // 2δ
  int h1 = 50000;
  AnnealSchedule schedule;      // K = 500, T 0.05 → 0.005, selection {1, 50}
  double kappa = 1000.0;        // collision sharpness, 1/m
  int k_nn = 25;
  double ap_damping = 0.9;
  int ap_max_iter = 1000;
  int mc_samples = 1000;
  double workspace_margin = 0.5;  // wrist must stay within the cloud's box grown by this, meters
  int report_top = 10;

  /// Kernel bandwidth. The angular σ_q becomes the vMF concentration 4/σ_q²,
  /// which matches a rotation-angle standard deviation of σ_q for small angles.
  Bandwidth bandwidth() const { return {sigma_p, 4.0 / (sigma_q * sigma_q), sigma_r}; }

  void validate() const;
};

/// One demonstrated (or self-generated) grasp.
struct GraspExample {
  std::string name;
  Pose wrist;                     // h_w at contact
  std::vector<Pose> trajectory;   // approach wrist poses, informational
  Config h_g;                     // joint angles at contact
  Config h_t;                     // joint angles shortly before contact
  std::vector<PointCloud> views;  // single-view clouds with sensor viewpoints
  std::vector<Pose> cameras;
  std::string source;             // scene name for self-generated examples, empty for demonstrations
};

/// Demonstration directory: manifest.json plus one PLY per view.
GraspExample load_demo(const std::string& dir);
void save_demo(const std::string& dir, const GraspExample& ex);
/// Every subdirectory holding a manifest.json, sorted by name.
std::vector<GraspExample> load_demos(const std::string& root);

/// Retained contact models of one organisation of the training data plus their clustering.
struct ModelFamily {
  std::vector<ContactModel> models;                        // retained (i, m, g) only
  std::vector<std::vector<std::vector<double>>> norms;     // [g][m][i], all candidates
  SelectionResult selection;
  bool merged = false;
  std::vector<ClusterPrototype> prototypes;                // empty until merged
  std::vector<int> model_cluster;                          // model -> prototype
  bool ap_converged = true;

  /// Number of retained models over number of clusters.
  double compression_ratio() const;
};

struct ModelStore {
  int schema_version = kStoreSchemaVersion;
  Params params;
  HandModel hand;
  std::vector<GraspExample> examples;
  std::vector<HandConfigModel> config_models;  // one per example, rebuilt from h_g/h_t
  ModelFamily views;       // one object-view model per view
  ModelFamily registered;  // all views of a grasp pooled into one model
};

enum class Variant { A1, A2, A3, A4 };
Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

/// Per-view object models of an example (normals + curvature features).
std::vector<ObjectViewModel> example_view_models(const GraspExample& ex, const Params& params, int grasp_id);

/// Builds contact models for both families, applies selection and builds config models.
/// Throws std::invalid_argument naming the grasp when no link touches any of its views,
/// and InvalidState when no view survives selection.
ModelStore train(std::vector<GraspExample> examples, const HandModel& hand, const Params& params);

/// Clusters the view family. With `enabled` false every model becomes its own cluster.
void merge(ModelStore& store, bool enabled = true);

struct Timing {
  double query_density_seconds = 0.0;
  double generation_optimisation_seconds = 0.0;
};

struct InferenceResult {
  std::vector<GraspSolution> grasps;  // ranked, best first
  std::vector<PairQueries> pairs;
  std::vector<QueryDensity> queries;
  int n_q_max = 0;
  Timing timing;
  std::size_t cloud_points = 0;
  std::size_t dropped_normals = 0;
  bool degenerate_ranking = false;  // every score was −∞
};

struct InferOptions {
  Variant variant = Variant::A4;
  std::uint64_t seed = 0;
  std::optional<int> n_q;   // override params.n_q
  std::optional<int> h1;    // override params.h1
  std::optional<int> steps; // override params.schedule.steps
};

InferenceResult infer(const ModelStore& store, const PointCloud& cloud, const InferOptions& opt);

/// One JSON object per ranked grasp followed by a summary line with timings.
std::string format_report(const InferenceResult& r, const ModelStore& store, const InferOptions& opt,
                          const std::string& cloud_name, std::optional<bool> success = std::nullopt);

struct SuccessCriteria {
  double contact_tol = 0.003;
  double min_opposition_deg = 120.0;
  double max_penetration = 0.003;
  int min_contacts = 2;
};

struct SuccessReport {
  bool success = false;
  int contacts = 0;
  double opposition_deg = 0.0;
  double penetration = 0.0;
  std::vector<int> contact_links;
};

/// Desk-scale stand-in for executing a grasp: contacts, opposition and penetration
/// measured against the ground-truth scene.
SuccessReport geometric_success_check(const HandModel& hand, const Pose& h_w, const Config& h_c, const Scene& scene,
                                      const SuccessCriteria& c = {});

/// Store as a single schema-versioned JSON document.
std::string store_to_json(const ModelStore& store);
ModelStore store_from_json(const std::string& text);
void save_store(const std::string& path, const ModelStore& store);
ModelStore load_store(const std::string& path);

std::string params_to_json(const Params& p);
Params params_from_json(const std::string& text);

struct SelfTrainScene {
  std::string name;
  Scene scene;  // must carry a camera
};

struct SelfTrainRound {
  int round = 0;
  int attempted = 0;
  int new_successes = 0;
  std::vector<std::string> succeeded;
};

struct SelfTrainOptions {
  int rounds = 1;
  std::uint64_t seed = 0;
  Variant variant = Variant::A4;
  std::optional<int> n_q;
  std::optional<int> h1;
  std::optional<int> steps;
  double open_offset = 0.25;  // h_t = h_g − offset for self-generated examples
};

/// Leave-one-out autonomous training: every scene is attempted with a model that
/// excludes its own earlier success; successes become new examples. A round
/// without new successes ends the loop.
std::vector<SelfTrainRound> selftrain(ModelStore& store, const std::vector<SelfTrainScene>& scenes,
                                      const SelfTrainOptions& opt);

std::vector<SelfTrainScene> load_scenes(const std::string& dir);

}  // namespace viewgrasp
