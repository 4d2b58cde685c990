#include "viewgrasp/density.hpp"
#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"
#include "viewgrasp/pipeline.hpp"
#include "viewgrasp/scene.hpp"
#include "viewgrasp/surface.hpp"
#include "viewgrasp/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace viewgrasp;

namespace {

using PoseVec = Eigen::Matrix<double, 7, 1>;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Pose to_pose(const PoseVec& v) {
  Pose p(v.head<3>(), Quat(v[6], v[3], v[4], v[5]));
  require_finite(p);
  p.q = normalized(p.q);
  return p;
}

PoseVec from_pose(const Pose& p) {
  PoseVec v;
  v << p.p, p.q.x(), p.q.y(), p.q.z(), p.q.w();
  return v;
}

Points to_matrix(const std::vector<Vec3>& pts) {
  Points m(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(i) = pts[i].transpose();
  return m;
}

std::vector<Vec3> to_points(const Points& m) {
  std::vector<Vec3> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = m.row(i).transpose();
  return out;
}

py::dict grasp_dict(const GraspSolution& g) {
  py::dict d;
  d["h_w"] = from_pose(g.h_w);
  d["h_c"] = Eigen::VectorXd(g.h_c);
  d["grasp"] = g.grasp;
  d["view"] = g.view;
  d["log_L_W"] = g.log_w;
  d["log_L_C"] = g.log_c;
  d["log_L_Q"] = g.log_q;
  d["N_Q"] = g.n_q;
  d["log_score"] = g.log_score;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grasp learning from single-view point clouds";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InvalidState>(m, "InvalidState", PyExc_RuntimeError);
  py::register_exception<DegenerateConditional>(m, "DegenerateConditional", PyExc_ArithmeticError);

  m.def("set_thread_count", &set_thread_count, py::arg("n"));
  m.def("thread_count", &thread_count);

  m.def("vmf_log_normalizer", &vmf_log_normalizer, py::arg("kappa"));
  m.def(
      "eval_vmf_pair",
      [](const Eigen::Vector4d& q, const Eigen::Vector4d& mu, double kappa) {
        return eval_vmf_pair(Quat(q[3], q[0], q[1], q[2]).normalized(), Quat(mu[3], mu[0], mu[1], mu[2]).normalized(),
                             kappa);
      },
      py::arg("q"), py::arg("mu"), py::arg("kappa"), "Antipodal vMF pair density; quaternions as (x, y, z, w).");

  m.def(
      "look_at",
      [](const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
        return from_pose(look_at(eye, target, up));
      },
      py::arg("eye"), py::arg("target"), py::arg("up") = Eigen::Vector3d::UnitZ(),
      "Camera pose (x y z qx qy qz qw) at `eye` with +z toward `target`.");

  py::class_<PointCloud>(m, "PointCloud")
      .def(py::init([](const Points& points, const Eigen::Vector3d& viewpoint) {
             PointCloud c;
             c.points = to_points(points);
             c.viewpoint = viewpoint;
             return c;
           }),
           py::arg("points"), py::arg("viewpoint") = Eigen::Vector3d::Zero())
      .def_property_readonly("points", [](const PointCloud& c) { return to_matrix(c.points); })
      .def_property_readonly("normals", [](const PointCloud& c) { return to_matrix(c.normals); })
      .def_readwrite("viewpoint", &PointCloud::viewpoint)
      .def("__len__", &PointCloud::size);
  m.def("load_ply", &load_ply, py::arg("path"));
  m.def("save_ply", &save_ply, py::arg("path"), py::arg("cloud"));
  m.def(
      "estimate_normals", [](const PointCloud& c, int k) { return estimate_normals(c, k).cloud; }, py::arg("cloud"),
      py::arg("k_nn") = kDefaultNeighbors);
  m.def(
      "curvature_features",
      [](const PointCloud& cloud, int k) {
        const auto f = principal_curvature_features(cloud, k);
        Eigen::MatrixXd r(f.size(), 2), poses(f.size(), 7);
        for (std::size_t i = 0; i < f.size(); ++i) {
          r.row(i) = f[i].r.transpose();
          poses.row(i) = from_pose(f[i].pose).transpose();
        }
        return py::make_tuple(poses, r);
      },
      py::arg("cloud"), py::arg("k_nn") = kDefaultNeighbors,
      "Frames (n×7) and principal curvatures (n×2) of a cloud with normals.");

  m.def(
      "select_contacts",
      [](const std::vector<std::vector<std::vector<double>>>& norms, double eta, int zeta) {
        const auto s = select_contacts(norms, eta, zeta);
        std::vector<std::vector<std::vector<bool>>> b;
        std::vector<std::vector<bool>> c;
        for (const auto& g : s.b) {
          auto& bg = b.emplace_back();
          for (const auto& v : g) bg.emplace_back(v.begin(), v.end());
        }
        for (const auto& g : s.c) c.emplace_back(g.begin(), g.end());
        return py::make_tuple(b, c);
      },
      py::arg("norms"), py::arg("eta") = 0.2, py::arg("zeta") = 3);

  py::class_<Scene>(m, "Scene")
      .def_static("load", &load_scene, py::arg("path"))
      .def_static("parse", &parse_scene, py::arg("text"))
      .def("format", &format_scene)
      .def("sdf", &Scene::sdf, py::arg("x"))
      .def_property_readonly("camera", [](const Scene& s) -> std::optional<PoseVec> {
        if (!s.camera) return std::nullopt;
        return from_pose(*s.camera);
      });
  m.def(
      "simulate_depth_view",
      [](const Scene& scene, std::optional<PoseVec> camera, double noise, std::uint64_t seed) {
        if (!camera && !scene.camera) throw std::invalid_argument("scene has no camera; pass one");
        return simulate_depth_view(scene, camera ? to_pose(*camera) : *scene.camera, scene.intrinsics, noise, seed);
      },
      py::arg("scene"), py::arg("camera") = std::nullopt, py::arg("noise") = 0.0, py::arg("seed") = 0);

  py::class_<HandModel>(m, "HandModel")
      .def_static("default", &default_hand)
      .def_static("load", &load_hand, py::arg("path"))
      .def("to_json", &hand_to_json)
      .def_property_readonly("num_links", &HandModel::num_links)
      .def_property_readonly("dof", &HandModel::dof)
      .def_property_readonly("link_names",
                             [](const HandModel& h) {
                               std::vector<std::string> names;
                               for (const auto& l : h.links()) names.push_back(l.name);
                               return names;
                             })
      .def(
          "forward_kinematics",
          [](const HandModel& h, const PoseVec& wrist, const Eigen::VectorXd& config) {
            if (config.size() != h.dof()) throw std::invalid_argument("configuration has the wrong length");
            const auto poses = h.forward_kinematics(to_pose(wrist), config);
            Eigen::MatrixXd out(poses.size(), 7);
            for (std::size_t i = 0; i < poses.size(); ++i) out.row(i) = from_pose(poses[i]).transpose();
            return out;
          },
          py::arg("wrist"), py::arg("config"), "World link poses (links×7).");

  m.def(
      "default_params", [] { return params_to_json(Params{}); }, "Default parameters as JSON.");

  py::class_<ModelStore>(m, "ModelStore")
      .def_static("load", &load_store, py::arg("path"))
      .def_static("from_json", &store_from_json, py::arg("text"))
      .def_static(
          "train",
          [](const std::string& demos, const HandModel& hand, const std::string& params_json) {
            return train(load_demos(demos), hand, params_from_json(params_json));
          },
          py::arg("demos"), py::arg("hand"), py::arg("params") = "{}",
          "Trains from a directory of demonstrations; params is a JSON object of overrides.")
      .def("save", [](const ModelStore& s, const std::string& path) { save_store(path, s); }, py::arg("path"))
      .def("to_json", &store_to_json)
      .def("merge", [](ModelStore& s, bool enabled) { merge(s, enabled); }, py::arg("enabled") = true)
      .def_property_readonly("params", [](const ModelStore& s) { return params_to_json(s.params); })
      .def_property_readonly("num_examples", [](const ModelStore& s) { return s.examples.size(); })
      .def_property_readonly("num_contact_models", [](const ModelStore& s) { return s.views.models.size(); })
      .def_property_readonly("num_clusters", [](const ModelStore& s) { return s.views.prototypes.size(); })
      .def_property_readonly("merged", [](const ModelStore& s) { return s.views.merged; })
      .def(
          "infer",
          [](const ModelStore& s, const PointCloud& cloud, const std::string& variant, std::uint64_t seed,
             std::optional<int> n_q, std::optional<int> h1, std::optional<int> steps) {
            InferOptions opt;
            opt.variant = parse_variant(variant);
            opt.seed = seed;
            opt.n_q = n_q;
            opt.h1 = h1;
            opt.steps = steps;
            InferenceResult r;
            {
              py::gil_scoped_release release;
              r = infer(s, cloud, opt);
            }
            py::list grasps;
            for (const auto& g : r.grasps) grasps.append(grasp_dict(g));
            py::dict timing;
            timing["Query density computation"] = r.timing.query_density_seconds;
            timing["Generation & Optimisation"] = r.timing.generation_optimisation_seconds;
            return py::make_tuple(grasps, timing);
          },
          py::arg("cloud"), py::arg("variant") = "A4", py::arg("seed") = 0, py::arg("n_q") = std::nullopt,
          py::arg("h1") = std::nullopt, py::arg("steps") = std::nullopt,
          "Ranked grasps (best first) and the timing table.");

  m.def(
      "geometric_success",
      [](const HandModel& hand, const PoseVec& wrist, const Eigen::VectorXd& config, const Scene& scene) {
        return geometric_success_check(hand, to_pose(wrist), config, scene).success;
      },
      py::arg("hand"), py::arg("wrist"), py::arg("config"), py::arg("scene"));

  m.def(
      "write_synthetic_demos",
      [](const std::string& out, int views) {
        const HandModel hand = default_hand();
        const auto examples = demonstrate_tasks(hand, training_tasks(), views);
        for (const auto& ex : examples) save_demo(out + "/" + ex.name, ex);
        return examples.size();
      },
      py::arg("out"), py::arg("views") = 4, "Scripted demonstrations on the built-in training objects.");
}
