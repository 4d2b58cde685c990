#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"
#include "viewgrasp/pipeline.hpp"
#include "viewgrasp/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace viewgrasp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parameters: defaults, then --config file, then --set key=value pairs.
Params build_params(const Params& base, const std::string& config, const std::vector<std::string>& sets) {
  auto doc = nlohmann::json::parse(params_to_json(base));
  if (!config.empty()) {
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(slurp(config));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("config " + config + ": " + e.what());
    }
    for (const auto& [k, v] : patch.items()) doc[k] = v;
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    try {
      doc[key] = nlohmann::json::parse(s.substr(eq + 1));
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("--set " + key + ": value is not a number, list or boolean");
    }
  }
  return params_from_json(doc.dump());
}

HandModel hand_from(const std::string& path) { return path == "default" ? default_hand() : load_hand(path); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning dexterous grasps from single-view demonstrations"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores)");

  // train
  std::string demos, hand_file, out_store, config;
  std::vector<std::string> sets;
  auto* train_cmd = app.add_subcommand("train", "learn contact and hand-configuration models from demonstrations");
  train_cmd->add_option("--demos", demos, "directory of demonstration folders")->required();
  train_cmd->add_option("--hand", hand_file, "hand description JSON, or 'default'")->required();
  train_cmd->add_option("--out", out_store, "model store to write")->required();
  train_cmd->add_option("--config", config, "JSON file of parameter overrides");
  train_cmd->add_option("--set", sets, "parameter override key=value (repeatable)");

  // merge
  std::string store_path, merge_out;
  bool no_merge = false;
  auto* merge_cmd = app.add_subcommand("merge", "cluster contact models into prototypes");
  merge_cmd->add_option("--store", store_path, "model store")->required();
  merge_cmd->add_flag("--no-merge", no_merge, "one singleton cluster per contact model");
  merge_cmd->add_option("--out", merge_out, "write here instead of updating the store");

  // infer
  std::string cloud_file, variant = "A4", report = "report.jsonl", scene_file;
  std::uint64_t seed = 0;
  std::optional<int> n_q, h1, steps;
  auto* infer_cmd = app.add_subcommand("infer", "generate and rank grasps for a test point cloud");
  infer_cmd->add_option("--store", store_path, "model store")->required();
  infer_cmd->add_option("--cloud", cloud_file, "test view (PLY)")->required();
  infer_cmd->add_option("--variant", variant, "A1|A2|A3|A4")->check(CLI::IsMember({"A1", "A2", "A3", "A4"}));
  infer_cmd->add_option("--seed", seed, "master seed");
  infer_cmd->add_option("--out", report, "ranked grasps (JSON lines)");
  infer_cmd->add_option("--scene", scene_file, "ground-truth scene for the geometric success check");
  infer_cmd->add_option("--nq", n_q, "query kernels per prototype");
  infer_cmd->add_option("--h1", h1, "initial grasp candidates");
  infer_cmd->add_option("--steps", steps, "annealing steps");

  // selftrain
  std::string scenes_dir, self_out;
  int rounds = 1;
  auto* self_cmd = app.add_subcommand("selftrain", "add successful self-generated grasps as training data");
  self_cmd->add_option("--store", store_path, "model store")->required();
  self_cmd->add_option("--scenes", scenes_dir, "directory of .scene files with cameras")->required();
  self_cmd->add_option("--rounds", rounds, "maximum rounds")->check(CLI::PositiveNumber);
  self_cmd->add_option("--variant", variant, "A1|A2|A3|A4")->check(CLI::IsMember({"A1", "A2", "A3", "A4"}));
  self_cmd->add_option("--seed", seed, "master seed");
  self_cmd->add_option("--nq", n_q, "query kernels per prototype");
  self_cmd->add_option("--h1", h1, "initial grasp candidates");
  self_cmd->add_option("--steps", steps, "annealing steps");
  self_cmd->add_option("--out", self_out, "write here instead of updating the store");

  // simulate-views
  std::string camera, ply_out;
  double noise = 0.0;
  std::optional<int> width, height;
  std::optional<double> fov;
  auto* sim_cmd = app.add_subcommand("simulate-views", "render a single depth view of a scene as a PLY cloud");
  sim_cmd->add_option("--scene", scene_file, "scene file")->required();
  sim_cmd->add_option("--camera", camera, "camera pose 'px py pz qx qy qz qw' (defaults to the scene camera)");
  sim_cmd->add_option("--out", ply_out, "output PLY")->required();
  sim_cmd->add_option("--noise", noise, "depth noise std-dev along rays, meters");
  sim_cmd->add_option("--seed", seed, "noise seed");
  sim_cmd->add_option("--width", width);
  sim_cmd->add_option("--height", height);
  sim_cmd->add_option("--fov", fov, "horizontal field of view, degrees");

  // synthetic corpus helpers
  std::string synth_out, synth_set = "training";
  int views = 4;
  auto* synth_cmd = app.add_subcommand("synth-demos", "write scripted demonstrations on synthetic objects");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--set", synth_set, "training|thick|box")->check(CLI::IsMember({"training", "thick", "box"}));
  synth_cmd->add_option("--views", views, "views per demonstration")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--hand", hand_file, "hand description JSON, or 'default'");
  int suite_count = 20;
  auto* scenes_cmd = app.add_subcommand("synth-scenes", "write the synthetic test suite as .scene files");
  scenes_cmd->add_option("--out", synth_out, "output directory")->required();
  scenes_cmd->add_option("--count", suite_count, "number of scenes")->check(CLI::PositiveNumber);
  scenes_cmd->add_option("--seed", seed, "suite seed");
  auto* hand_cmd = app.add_subcommand("write-hand", "write the built-in hand description");
  hand_cmd->add_option("--out", synth_out, "output JSON")->required();

  CLI11_PARSE(app, argc, argv);
  set_thread_count(threads);

  try {
    if (*train_cmd) {
      const Params params = build_params(Params{}, config, sets);
      const HandModel hand = hand_from(hand_file);
      ModelStore store = train(load_demos(demos), hand, params);
      save_store(out_store, store);
      std::cerr << "trained " << store.examples.size() << " grasps: " << store.views.models.size()
                << " view contact models, " << store.registered.models.size() << " registered\n";
    } else if (*merge_cmd) {
      ModelStore store = load_store(store_path);
      if (store.views.merged) {
        std::cerr << "store already merged; nothing to do\n";
      } else {
        if (store.views.models.size() < 2) std::cerr << "fewer than 2 contact models: one cluster per model\n";
        merge(store, !no_merge);
        std::cerr << "clusters " << store.views.prototypes.size() << " from " << store.views.models.size()
                  << " contact models, compression ratio " << store.views.compression_ratio()
                  << (store.views.ap_converged ? "" : " (affinity propagation did not converge)") << '\n';
      }
      save_store(merge_out.empty() ? store_path : merge_out, store);
    } else if (*infer_cmd) {
      const ModelStore store = load_store(store_path);
      const PointCloud cloud = load_ply(cloud_file);
      InferOptions opt;
      opt.variant = parse_variant(variant);
      opt.seed = seed;
      opt.n_q = n_q;
      opt.h1 = h1;
      opt.steps = steps;
      const InferenceResult res = infer(store, cloud, opt);
      std::optional<bool> success;
      if (!scene_file.empty()) {
        const auto& b = res.grasps.front();
        success = geometric_success_check(store.hand, b.h_w, b.h_c, load_scene(scene_file)).success;
      }
      write_text(report, format_report(res, store, opt, cloud_file, success));
      std::cerr << "query densities " << res.timing.query_density_seconds << " s, generation & optimisation "
                << res.timing.generation_optimisation_seconds << " s; best log score "
                << res.grasps.front().log_score << '\n';
    } else if (*self_cmd) {
      ModelStore store = load_store(store_path);
      const std::size_t before = store.examples.size();
      SelfTrainOptions opt;
      opt.rounds = rounds;
      opt.seed = seed;
      opt.variant = parse_variant(variant);
      opt.n_q = n_q;
      opt.h1 = h1;
      opt.steps = steps;
      const auto report_rounds = selftrain(store, load_scenes(scenes_dir), opt);
      for (const auto& r : report_rounds) {
        std::cerr << "round " << r.round << ": " << r.new_successes << " new successes out of " << r.attempted
                  << " attempts";
        for (const auto& s : r.succeeded) std::cerr << ' ' << s;
        std::cerr << '\n';
      }
      if (!report_rounds.empty() && report_rounds.back().new_successes == 0)
        std::cerr << "no new successes: stopping\n";
      save_store(self_out.empty() ? store_path : self_out, store);
      std::cerr << "examples " << before << " -> " << store.examples.size() << '\n';
    } else if (*sim_cmd) {
      const Scene scene = load_scene(scene_file);
      Pose cam;
      if (!camera.empty())
        cam = parse_pose(camera);
      else if (scene.camera)
        cam = *scene.camera;
      else
        throw std::invalid_argument("no --camera given and the scene has no camera line");
      Intrinsics in = scene.intrinsics;
      if (width) in.width = *width;
      if (height) in.height = *height;
      if (fov) in.fov_deg = *fov;
      const PointCloud cloud = simulate_depth_view(scene, cam, in, noise, seed);
      save_ply(ply_out, cloud);
      std::cerr << cloud.size() << " points\n";
    } else if (*synth_cmd) {
      const HandModel hand = hand_from(hand_file.empty() ? "default" : hand_file);
      std::vector<SyntheticTask> tasks = synth_set == "thick"  ? thick_tasks()
                                         : synth_set == "box" ? std::vector<SyntheticTask>{box_pinch_task()}
                                                              : training_tasks();
      const auto examples = demonstrate_tasks(hand, tasks, views);
      for (const auto& ex : examples) save_demo((fs::path(synth_out) / ex.name).string(), ex);
      for (const auto& t : tasks) {
        fs::create_directories(fs::path(synth_out) / "scenes");
        write_text((fs::path(synth_out) / "scenes" / (t.name + ".scene")).string(), format_scene(t.scene));
      }
      std::cerr << examples.size() << " demonstrations written to " << synth_out << '\n';
    } else if (*scenes_cmd) {
      fs::create_directories(synth_out);
      for (const auto& t : test_suite(suite_count, seed))
        write_text((fs::path(synth_out) / (t.name + ".scene")).string(), format_scene(t.scene));
    } else if (*hand_cmd) {
      write_text(synth_out, hand_to_json(default_hand()));
    }
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
