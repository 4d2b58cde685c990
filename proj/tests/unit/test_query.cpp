#include "support.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/parallel.hpp"
#include "viewgrasp/pipeline.hpp"
#include "viewgrasp/query.hpp"
#include "viewgrasp/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace viewgrasp;
using namespace test_support;

namespace {

struct Fixture {
  HandModel hand = default_hand();
  Params params;
  SyntheticTask task = box_pinch_task();
  Demonstration demo;
  ObjectViewModel view;
  std::vector<Pose> links;
  std::vector<ContactModel> models;  // one per link touching the view

  Fixture() {
    demo = demonstrate(hand, task.scene, task.start);
    const PointCloud cloud = simulate_depth_view(task.scene, *task.scene.camera, task.scene.intrinsics);
    view = build_object_view_model(estimate_normals(cloud).cloud, params.bandwidth());
    links = hand.forward_kinematics(demo.wrist, demo.h_g);
    for (std::size_t i = 0; i < links.size(); ++i) {
      ContactModel m = build_contact_model(view, hand.links()[i].geometry, links[i], params.bandwidth(), params.rf,
                                           static_cast<int>(i));
      if (!m.empty()) models.push_back(std::move(m));
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("query") {
  TEST_CASE("transforming a contact model") {
    ContactModel id;
    id.kernels = KernelSet({Kernel{{Pose(), Descriptor(1, 2)}, 1.0}}, Bandwidth{});
    const auto f = transform_contact_model(Pose(), id);
    REQUIRE(f.size() == 1);
    CHECK(identical(f[0].pose, Pose()));
    CHECK(f[0].r == Descriptor(1, 2));

    Rng rng = substream(8, 0, 0);
    std::vector<Kernel> ks;
    for (int j = 0; j < 20; ++j) ks.push_back({{random_pose(rng, 0.02), Descriptor::Zero()}, 1.0});
    ContactModel m;
    m.kernels = KernelSet(ks, Bandwidth{});
    const Pose s = random_pose(rng);
    const auto placed = transform_contact_model(s, m);
    for (std::size_t j = 0; j < placed.size(); ++j)
      CHECK(same_transform(relative_link_pose(placed[j].pose, s), m.kernels[j].center.pose, 1e-9));
  }

  TEST_CASE("a contact model placed at its training pose overlays its view") {
    const Fixture& fx = fixture();
    REQUIRE(!fx.models.empty());
    const SurfaceIndex idx = index_view(fx.view);
    for (const auto& m : fx.models) {
      const Pose& s = fx.links[m.link];
      CHECK(placed_divergence(s, m.surface_poses(), idx, fx.params.rho) < 1e-3);
      std::vector<Pose> placed;
      for (const auto& f : transform_contact_model(s, m)) placed.push_back(f.pose);
      CHECK(divergence(placed, idx) < 1e-3);
      // a displaced placement is penalized
      CHECK(placed_divergence(compose(Pose::translation(Vec3(0, 0, 0.05)), s), m.surface_poses(), idx, fx.params.rho) >
            1e-3);
    }
  }

  TEST_CASE("importance weights") {
    CHECK(query_weight(0.0, 1.0) == 1.0);
    CHECK(query_weight(0.5, 1.0) == doctest::Approx(0.606531).epsilon(1e-6));
    CHECK(query_weight(0.3, 0.0) == 1.0);
  }

  TEST_CASE("evaluation") {
    Rng rng = substream(8, 1, 0);
    const WeightedPose k{random_pose(rng, 0.1), 1.0};
    const QueryDensity one({k}, 0.005, 16.0);
    const double peak = std::pow(2 * std::numbers::pi * 0.005 * 0.005, -1.5) * eval_vmf_pair(k.pose.q, k.pose.q, 16.0);
    CHECK(one.eval(k.pose) == doctest::Approx(peak).epsilon(1e-12));
    Pose flipped = k.pose;
    flipped.q.coeffs() *= -1.0;
    CHECK(one.eval(flipped) == doctest::Approx(one.eval(k.pose)).epsilon(1e-12));

    std::vector<WeightedPose> ks;
    for (int j = 0; j < 500; ++j) ks.push_back({Pose(normal3(rng, 0.02), uniform_quaternion(rng)), uniform01(rng)});
    const QueryDensity q(ks, 0.005, 16.0);
    double sum = 0.0;
    for (const auto& x : q.kernels()) sum += x.weight;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int t = 0; t < 200; ++t) {
      const Pose s = t % 2 ? q.sample(rng) : Pose(normal3(rng, 0.02), uniform_quaternion(rng));
      const double naive = q.eval_naive(s);
      CHECK(q.eval(s) == doctest::Approx(naive).epsilon(1e-6));
    }
    const Pose far(Vec3(5, 5, 5), Quat::Identity());
    CHECK(std::isfinite(q.log_eval(far)));
    CHECK_THROWS_AS(QueryDensity().eval(Pose()), InvalidState);
    const auto r = q.ranked();
    for (std::size_t j = 1; j < r.size(); ++j) CHECK(q.kernels()[r[j - 1]].weight >= q.kernels()[r[j]].weight);
  }

  TEST_CASE("query density formation") {
    const Fixture& fx = fixture();
    const auto proto = build_prototype({0}, 0, {0.0});
    QueryParams qp;
    qp.n_q = 1500;
    const QueryDensity q = form_query_density(fx.view, proto, fx.models, qp, 11, 0);
    CHECK(q.size() == 1500);
    double sum = 0.0, hi = 0.0;
    for (const auto& k : q.kernels()) {
      sum += k.weight;
      hi = std::max(hi, k.weight);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    // identical seeds give identical densities whatever the thread count
    const unsigned threads = thread_count();
    set_thread_count(1);
    const QueryDensity a = form_query_density(fx.view, proto, fx.models, qp, 11, 0);
    set_thread_count(3);
    const QueryDensity b = form_query_density(fx.view, proto, fx.models, qp, 11, 0);
    set_thread_count(threads);
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a.kernels()[j].pose.p == b.kernels()[j].pose.p);
      CHECK(a.kernels()[j].weight == b.kernels()[j].weight);
    }

    QueryParams bad = qp;
    bad.n_q = 0;
    CHECK_THROWS_AS(form_query_density(fx.view, proto, fx.models, bad, 1), std::invalid_argument);
    CHECK_THROWS_AS(form_query_density(ObjectViewModel{}, proto, fx.models, qp, 1), std::invalid_argument);
  }

  TEST_CASE("larger phi never raises the weight of the worst kernel") {
    const Fixture& fx = fixture();
    const auto proto = build_prototype({0}, 0, {0.0});
    QueryParams qp;
    qp.n_q = 800;
    const SurfaceIndex idx = index_view(fx.view);
    const auto surface = fx.models[0].surface_poses();
    double prev = std::numeric_limits<double>::infinity();
    for (double phi : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
      qp.phi = phi;
      const QueryDensity q = form_query_density(fx.view, idx, proto, fx.models, qp, 5, 0);
      std::size_t worst = 0;
      double worst_d = -1;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = placed_divergence(q.kernels()[j].pose, surface, idx, qp.rho);
        if (d > worst_d) worst_d = d, worst = j;
      }
      CHECK(q.kernels()[worst].weight <= prev * (1 + 1e-12));
      prev = q.kernels()[worst].weight;
    }
  }

  TEST_CASE("degenerate descriptors exhaust the retries") {
    const Fixture& fx = fixture();
    std::vector<Kernel> ks = fx.models[0].kernels.kernels();
    for (auto& k : ks) k.center.r = Descriptor(1e6, 1e6);
    ContactModel odd = fx.models[0];
    odd.kernels = KernelSet(ks, fx.models[0].kernels.bandwidth());
    QueryParams qp;
    qp.n_q = 10;
    qp.max_retries = 5;
    CHECK_THROWS_AS(form_query_density(fx.view, build_prototype({0}, 0, {0.0}), {odd}, qp, 1), DegenerateConditional);
  }

  TEST_CASE("self-transfer: the demonstrated link pose lies in the query density's mass") {
    // Flat faces are self-similar, so the density spreads over each face; it
    // must still cover the demonstrated pose and vanish off the surface.
    const Fixture& fx = fixture();
    QueryParams qp;
    qp.n_q = 3000;
    const SurfaceIndex idx = index_view(fx.view);
    for (std::size_t k = 0; k < fx.models.size(); ++k) {
      const auto proto = build_prototype({static_cast<int>(k)}, 0, {0.0});
      const QueryDensity q = form_query_density(fx.view, idx, proto, fx.models, qp, 21, static_cast<int>(k));
      const Pose& target = fx.links[fx.models[k].link];
      std::vector<double> at_kernels;
      for (const auto& x : q.kernels()) at_kernels.push_back(q.log_eval(x.pose));
      std::nth_element(at_kernels.begin(), at_kernels.begin() + at_kernels.size() / 2, at_kernels.end());
      const double median = at_kernels[at_kernels.size() / 2];
      const Vec3 outward = (target.p - fx.task.scene.centroid()).normalized();
      const Pose lifted = compose(Pose::translation(0.03 * outward), target);
      CHECK_MESSAGE(q.log_eval(target) > median - 2.0, "link " << fx.models[k].link);
      CHECK_MESSAGE(q.log_eval(lifted) < q.log_eval(target) - 3.0, "link " << fx.models[k].link);
    }
  }
}
