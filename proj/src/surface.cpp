#include "viewgrasp/surface.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/kdtree.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace viewgrasp {

namespace {

KdTree<3> index_of(const std::vector<Vec3>& points) { return KdTree<3>(std::vector<Vec3>(points.begin(), points.end())); }

// Any unit vector orthogonal to n.
Vec3 some_tangent(const Vec3& n) {
  Vec3 t = Vec3::UnitX() - n.x() * n;
  if (t.norm() < 1e-6) t = Vec3::UnitY() - n.y() * n;
  return t.normalized();
}

}  // namespace

NormalEstimate estimate_normals(const PointCloud& cloud, int k_nn) {
  if (k_nn < 3) throw std::invalid_argument("estimate_normals: k_nn must be >= 3");
  NormalEstimate out;
  out.cloud.viewpoint = cloud.viewpoint;
  if (cloud.size() < 3) {
    out.dropped = cloud.size();
    return out;
  }
  const auto tree = index_of(cloud.points);
  const std::size_t k = std::min<std::size_t>(k_nn, cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const auto nn = tree.knn(p, k);
    Vec3 mean = Vec3::Zero();
    for (const auto& n : nn) mean += tree.point(n.index);
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& n : nn) {
      const Vec3 d = tree.point(n.index) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();
    if (!(ev[2] > 0.0) || ev[1] <= 1e-10 * ev[2]) {
      ++out.dropped;
      continue;
    }
    Vec3 normal = es.eigenvectors().col(0).normalized();
    if (normal.dot(cloud.viewpoint - p) < 0.0) normal = -normal;
    out.cloud.points.push_back(p);
    out.cloud.normals.push_back(normal);
  }
  return out;
}

std::vector<Feature> principal_curvature_features(const PointCloud& cloud, int k_nn) {
  if (!cloud.has_normals()) throw std::invalid_argument("principal_curvature_features: normals required");
  if (k_nn < 6) throw std::invalid_argument("principal_curvature_features: k_nn must be >= 6 for a quadric fit");
  if (cloud.size() < 6) throw std::invalid_argument("principal_curvature_features: fewer than 6 points");
  const auto tree = index_of(cloud.points);
  const std::size_t k = std::min<std::size_t>(k_nn, cloud.size());
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());

  std::vector<Feature> features;
  features.reserve(cloud.size());
  Eigen::MatrixXd A(k, 6);
  Eigen::VectorXd b(k);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Vec3 n = cloud.normals[i].normalized();
    const Vec3 t1 = some_tangent(n);
    const Vec3 t2 = n.cross(t1);
    const auto nn = tree.knn(p, k);
    double h = 0.0;
    for (const auto& m : nn) h = std::max(h, (tree.point(m.index) - p).norm());
    if (!(h > 0.0)) h = 1.0;
    // z = a x² + b xy + c y² + d x + e y + f in the (t1, t2, n) frame, scaled by 1/h.
    for (std::size_t j = 0; j < nn.size(); ++j) {
      const Vec3 d = (tree.point(nn[j].index) - p) / h;
      const double x = d.dot(t1), y = d.dot(t2);
      A.row(j) << x * x, x * y, y * y, x, y, 1.0;
      b[j] = d.dot(n);
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    const double fx = c[3], fy = c[4];
    Eigen::Matrix2d first, second;
    first << 1.0 + fx * fx, fx * fy, fx * fy, 1.0 + fy * fy;
    second << 2.0 * c[0], c[1], c[1], 2.0 * c[2];
    second /= h * std::sqrt(1.0 + fx * fx + fy * fy);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> ges(second, first);
    // Shape-operator eigenvalues are ascending; negate so convex surfaces read positive.
    const double r1 = -ges.eigenvalues()[0];
    const double r2 = -ges.eigenvalues()[1];
    Vec3 k1;
    if (std::abs(r1 - r2) < 1e-8) {
      k1 = Vec3::UnitX() - Vec3::UnitX().dot(n) * n;
      if (k1.norm() < 1e-9) k1 = Vec3::UnitY() - Vec3::UnitY().dot(n) * n;
    } else {
      const Eigen::Vector2d v = ges.eigenvectors().col(0);
      k1 = v[0] * t1 + v[1] * t2;
      const double toward = k1.dot(centroid - p);
      if (toward < 0.0 || (toward == 0.0 && k1.x() < 0.0)) k1 = -k1;
    }
    Feature f;
    f.pose = Pose(p, frame_from_axes(k1.normalized(), n));
    f.r = Descriptor(r1, r2);
    features.push_back(f);
  }
  return features;
}

ObjectViewModel make_object_view_model(std::vector<Feature> features, const Bandwidth& bw, int view_id, int grasp_id) {
  std::vector<Kernel> kernels;
  kernels.reserve(features.size());
  for (auto& f : features) kernels.push_back({f, 1.0});
  return {KernelSet(std::move(kernels), bw), view_id, grasp_id};
}

ObjectViewModel build_object_view_model(const PointCloud& cloud, const Bandwidth& bw, int k_nn, int view_id,
                                        int grasp_id) {
  if (cloud.has_normals())
    return make_object_view_model(principal_curvature_features(cloud, k_nn), bw, view_id, grasp_id);
  const auto est = estimate_normals(cloud, k_nn);
  return make_object_view_model(principal_curvature_features(est.cloud, k_nn), bw, view_id, grasp_id);
}

PointCloud parse_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw FormatError("PLY: missing 'ply' magic");
  PointCloud cloud;
  std::size_t vertex_count = 0;
  bool in_vertex = false, seen_vertex = false, ascii = false;
  std::map<std::string, int> column;
  int ncols = 0;
  std::vector<std::pair<std::size_t, int>> trailing;  // (count, columns) of elements before vertex
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (kw == "comment") {
      std::string tag;
      ls >> tag;
      if (tag == "viewpoint") {
        double x, y, z;
        if (!(ls >> x >> y >> z)) throw FormatError("PLY: bad viewpoint comment");
        cloud.viewpoint = {x, y, z};
      }
    } else if (kw == "element") {
      std::string name;
      std::size_t n;
      if (!(ls >> name >> n)) throw FormatError("PLY: bad element line");
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = n;
        seen_vertex = true;
      } else if (!seen_vertex) {
        trailing.push_back({n, 0});
      }
    } else if (kw == "property") {
      std::string type, name;
      ls >> type;
      if (type == "list" && in_vertex) throw FormatError("PLY: list properties on vertices are not supported");
      if (in_vertex) {
        ls >> name;
        column[name] = ncols++;
      } else if (!seen_vertex && !trailing.empty()) {
        ++trailing.back().second;
      }
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!ascii) throw FormatError("PLY: only 'format ascii 1.0' is supported");
  if (!seen_vertex) throw FormatError("PLY: no vertex element");
  for (const char* c : {"x", "y", "z"})
    if (!column.count(c)) throw FormatError(std::string("PLY: missing vertex property ") + c);
  if (!trailing.empty()) throw FormatError("PLY: vertex must be the first element");
  const bool normals = column.count("nx") && column.count("ny") && column.count("nz");
  std::vector<double> row(ncols);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) throw FormatError("PLY: truncated vertex list");
    std::istringstream ls(line);
    for (int c = 0; c < ncols; ++c)
      if (!(ls >> row[c])) throw FormatError("PLY: malformed vertex line " + std::to_string(i));
    const Vec3 p(row[column["x"]], row[column["y"]], row[column["z"]]);
    if (!p.allFinite()) throw FormatError("PLY: non-finite vertex " + std::to_string(i));
    cloud.points.push_back(p);
    if (normals) {
      Vec3 n(row[column["nx"]], row[column["ny"]], row[column["nz"]]);
      if (!(n.norm() > 0.0)) throw FormatError("PLY: zero normal at vertex " + std::to_string(i));
      cloud.normals.push_back(n.normalized());
    }
  }
  return cloud;
}

PointCloud load_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open point cloud " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ply(ss.str());
}

std::string format_ply(const PointCloud& cloud) {
  std::ostringstream os;
  os.precision(17);
  const bool normals = cloud.has_normals();
  os << "ply\nformat ascii 1.0\n";
  os << "comment viewpoint " << cloud.viewpoint.x() << ' ' << cloud.viewpoint.y() << ' ' << cloud.viewpoint.z()
     << '\n';
  os << "element vertex " << cloud.size() << '\n';
  os << "property double x\nproperty double y\nproperty double z\n";
  if (normals) os << "property double nx\nproperty double ny\nproperty double nz\n";
  os << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z();
    if (normals) os << ' ' << cloud.normals[i].x() << ' ' << cloud.normals[i].y() << ' ' << cloud.normals[i].z();
    os << '\n';
  }
  return os.str();
}

void save_ply(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_ply(cloud);
}

}  // namespace viewgrasp
