#include "support.hpp"

#include "viewgrasp/errors.hpp"
#include "viewgrasp/pipeline.hpp"
#include "viewgrasp/synthetic.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace viewgrasp;
using namespace test_support;
namespace fs = std::filesystem;

namespace {

// One view holding two flat patches just beyond the tips of two distal links.
GraspExample two_patch_example(const HandModel& hand) {
  GraspExample ex;
  ex.name = "two-patch";
  ex.wrist = Pose();
  ex.h_g = hand.zero_config();
  ex.h_t = hand.zero_config();
  PointCloud c;
  for (const Vec3& tip : {Vec3(0.025, 0.03, 0.12), Vec3(0.0, -0.03, 0.12)})
    for (int a = 0; a < 12; ++a)
      for (int b = 0; b < 12; ++b) c.points.push_back(tip + Vec3(-0.0075 + 0.015 * a / 11, -0.0075 + 0.015 * b / 11, 0));
  c.viewpoint = Vec3(0, 0, 0.5);
  ex.views = {c};
  ex.cameras = {look_at(c.viewpoint, Vec3(0, 0, 0.12), Vec3::UnitX())};
  return ex;
}

struct PinchFixture {
  HandModel hand = default_hand();
  Params params;
  std::vector<GraspExample> demos;
  ModelStore store;
  PointCloud cloud;

  PinchFixture() {
    params.n_q = 300;
    params.h1 = 200;
    params.schedule.steps = 40;
    params.schedule.selection_steps = {1, 20};
    demos = demonstrate_tasks(hand, {box_pinch_task()}, 1);
    store = train(demos, hand, params);
    cloud = demos[0].views[0];
  }
};

const PinchFixture& pinch() {
  static const PinchFixture f;
  return f;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("viewgrasp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("default parameters follow the published table") {
    const Params p;
    const auto j = nlohmann::json::parse(params_to_json(p));
    CHECK(j["delta"] == 0.01);
    CHECK(j["lambda"] == 50.0);
    CHECK(j["sigma_r"] == 10.0);
    CHECK(j["sigma_p"] == 0.005);
    CHECK(j["sigma_q"] == 0.5);
    CHECK(j["eta"] == 0.2);
    CHECK(j["zeta"] == 3);
    CHECK(j["xi"] == 1.0);
    CHECK(j["w_lin"] == 1.0);
    CHECK(j["w_ang"] == 0.01);
    CHECK(j["n_c"] == 1000);
    CHECK(j["alpha"] == 100.0);
    CHECK(j["beta"] == 1.0);
    CHECK(j["n_q"] == 5000);
    CHECK(j["phi"] == 1.0);
    CHECK(j["h1"] == 50000);
    CHECK(j["K"] == 500);
    CHECK(j["selection_steps"] == std::vector<int>{1, 50});
    CHECK(p.bandwidth().sigma_q == doctest::Approx(16.0));
  }

  TEST_CASE("parameter documents") {
    Params p;
    p.zeta = 1;
    p.phi = 3.5;
    p.schedule.selection_steps = {1, 7};
    const Params q = params_from_json(params_to_json(p));
    CHECK(q.zeta == 1);
    CHECK(q.phi == 3.5);
    CHECK(q.schedule.selection_steps == std::vector<int>{1, 7});
    CHECK(params_from_json(R"({"eta": 0.3})").eta == 0.3);
    CHECK(params_from_json(R"({"eta": 0.3})").zeta == 3);
    CHECK_THROWS_AS(params_from_json(R"({"etaa": 0.3})"), FormatError);
    CHECK_THROWS_AS(params_from_json("[1,2"), FormatError);
    Params bad;
    bad.sigma_q = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }

  TEST_CASE("variants") {
    for (Variant v : {Variant::A1, Variant::A2, Variant::A3, Variant::A4}) CHECK(parse_variant(to_string(v)) == v);
    CHECK_THROWS_AS(parse_variant("A5"), std::invalid_argument);
  }

  TEST_CASE("training on one view with two touching links") {
    const HandModel hand = default_hand();
    Params p;
    p.zeta = 1;
    const ModelStore s = train({two_patch_example(hand)}, hand, p);
    REQUIRE(s.views.models.size() == 2);
    CHECK(s.views.models[0].link == 2);
    CHECK(s.views.models[1].link == 6);
    CHECK(s.config_models.size() == 1);
    CHECK(s.config_models[0].size() == 1000);

    p.zeta = 3;
    CHECK_THROWS_AS(train({two_patch_example(hand)}, hand, p), InvalidState);
  }

  TEST_CASE("training errors name the grasp") {
    const HandModel hand = default_hand();
    GraspExample ex = two_patch_example(hand);
    ex.name = "far-away";
    for (auto& pt : ex.views[0].points) pt += Vec3(1, 0, 0);
    try {
      train({ex}, hand, Params{});
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("far-away") != std::string::npos);
    }
    CHECK_THROWS_AS(train({}, hand, Params{}), std::invalid_argument);
  }

  TEST_CASE("merging") {
    const PinchFixture& fx = pinch();
    ModelStore s = fx.store;
    merge(s, false);
    CHECK(s.views.merged);
    CHECK(s.views.prototypes.size() == s.views.models.size());
    CHECK(s.views.compression_ratio() == 1.0);

    ModelStore m = fx.store;
    merge(m, true);
    const auto protos = m.views.prototypes.size();
    const auto labels = m.views.model_cluster;
    merge(m, true);
    CHECK(m.views.prototypes.size() == protos);
    CHECK(m.views.model_cluster == labels);

    // duplicated demonstrations cluster together
    std::vector<GraspExample> twice = fx.demos;
    twice.push_back(fx.demos[0]);
    twice.back().name += "-copy";
    ModelStore d = train(twice, fx.hand, fx.params);
    merge(d, true);
    CHECK(d.views.compression_ratio() > 1.0);
  }

  TEST_CASE("inference is deterministic and survives a store round trip") {
    const PinchFixture& fx = pinch();
    ModelStore s = fx.store;
    merge(s, true);
    InferOptions opt;
    opt.seed = 5;
    const InferenceResult a = infer(s, fx.cloud, opt);
    const InferenceResult b = infer(s, fx.cloud, opt);
    const ModelStore loaded = store_from_json(store_to_json(s));
    const InferenceResult c = infer(loaded, fx.cloud, opt);
    REQUIRE(!a.grasps.empty());
    REQUIRE(a.grasps.size() == b.grasps.size());
    REQUIRE(a.grasps.size() == c.grasps.size());
    for (std::size_t j = 0; j < a.grasps.size(); ++j) {
      CHECK(a.grasps[j].log_score == b.grasps[j].log_score);
      CHECK(identical(a.grasps[j].h_w, b.grasps[j].h_w));
      CHECK(a.grasps[j].log_score == c.grasps[j].log_score);
      CHECK(identical(a.grasps[j].h_w, c.grasps[j].h_w));
      CHECK(a.grasps[j].h_c == c.grasps[j].h_c);
    }
    CHECK(a.timing.query_density_seconds > 0.0);
    CHECK(a.timing.generation_optimisation_seconds > 0.0);
    for (std::size_t j = 1; j < a.grasps.size(); ++j) CHECK(a.grasps[j - 1].log_score >= a.grasps[j].log_score);

    InferOptions a4;
    a4.variant = Variant::A4;
    CHECK_THROWS_AS(infer(fx.store, fx.cloud, a4), InvalidState);
    CHECK_THROWS_AS(infer(s, PointCloud{}, opt), std::invalid_argument);
  }

  TEST_CASE("report lines") {
    const PinchFixture& fx = pinch();
    InferOptions opt;
    opt.variant = Variant::A3;
    const InferenceResult r = infer(fx.store, fx.cloud, opt);
    std::istringstream in(format_report(r, fx.store, opt, "cloud.ply", true));
    std::string line;
    int grasps = 0;
    nlohmann::json summary;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      if (j["type"] == "grasp") {
        ++grasps;
        CHECK(j["rank"] == grasps);
        CHECK(j["h_w"].size() == 7);
        CHECK(j["h_c"].size() == 6);
        const double score = j["log_score"];
        const double recomputed =
            normalized_log_score(j["log_L_W"], j["log_L_C"], j["log_L_Q"], j["N_Q"], j["N_Q_max"]);
        CHECK(score == doctest::Approx(recomputed).epsilon(1e-9));
      } else {
        summary = j;
      }
    }
    CHECK(grasps >= 1);
    CHECK(summary["timing"].contains("Query density computation"));
    CHECK(summary["timing"].contains("Generation & Optimisation"));
    CHECK(summary["geometric_success"] == true);
  }

  TEST_CASE("geometric success check") {
    const HandModel hand = default_hand();
    std::vector<SyntheticTask> tasks = training_tasks();
    const auto extra = test_suite(6, 3);
    tasks.insert(tasks.end(), extra.begin(), extra.end());
    int agree = 0, total = 0;
    for (const auto& t : tasks) {
      const Demonstration d = demonstrate(hand, t.scene, t.start);
      // demonstrator closures that pinch the object are labeled successes
      const bool label = d.contact_links.size() >= 2 && d.penetration <= 0.003;
      agree += geometric_success_check(hand, d.wrist, d.h_g, t.scene).success == label;
      ++total;
      // the same hand lifted 5 cm off the object is a failure
      const Pose away = compose(Pose::translation(-0.05 * d.wrist.axis_z()), d.wrist);
      agree += !geometric_success_check(hand, away, open_config(hand), t.scene).success;
      ++total;
    }
    CHECK(total >= 20);
    CHECK(agree >= 0.9 * total);

    const SyntheticTask box = box_pinch_task();
    const Demonstration d = demonstrate(hand, box.scene, box.start);
    const SuccessReport ok = geometric_success_check(hand, d.wrist, d.h_g, box.scene);
    CHECK(ok.success);
    CHECK(ok.contacts >= 2);
    CHECK(ok.opposition_deg >= 120.0);
    // pushed 1 cm into the object
    const Pose deep = compose(Pose::translation(0.01 * d.wrist.axis_z()), d.wrist);
    CHECK(!geometric_success_check(hand, deep, d.h_g, box.scene).success);
  }

  TEST_CASE("demonstration directories") {
    const PinchFixture& fx = pinch();
    const fs::path root = scratch_dir("demos");
    save_demo((root / "b").string(), fx.demos[0]);
    GraspExample other = fx.demos[0];
    other.name = "first";
    save_demo((root / "a").string(), other);
    const auto loaded = load_demos(root.string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].name == "first");
    const GraspExample& back = loaded[1];
    CHECK(back.name == fx.demos[0].name);
    CHECK(identical(back.wrist, fx.demos[0].wrist));
    CHECK(back.h_g == fx.demos[0].h_g);
    CHECK(back.h_t == fx.demos[0].h_t);
    REQUIRE(back.views.size() == 1);
    CHECK(back.views[0].size() == fx.demos[0].views[0].size());
    CHECK((back.views[0].viewpoint - fx.demos[0].views[0].viewpoint).norm() < 1e-12);

    std::ofstream(root / "a" / "manifest.json") << "{\"schema\": \"nope\"}";
    CHECK_THROWS_AS(load_demos(root.string()), FormatError);
    CHECK_THROWS_AS(load_demos((root / "missing").string()), FormatError);
    fs::remove_all(root);
  }

  TEST_CASE("store documents") {
    const PinchFixture& fx = pinch();
    ModelStore s = fx.store;
    merge(s, true);
    const ModelStore back = store_from_json(store_to_json(s));
    CHECK(store_to_json(back) == store_to_json(s));
    REQUIRE(back.views.models.size() == s.views.models.size());
    for (std::size_t k = 0; k < s.views.models.size(); ++k) {
      const auto& a = s.views.models[k].kernels;
      const auto& b = back.views.models[k].kernels;
      REQUIRE(a.size() == b.size());
      for (std::size_t j = 0; j < a.size(); ++j) {
        CHECK(a[j].weight == b[j].weight);
        CHECK(identical(a[j].center.pose, b[j].center.pose));
        CHECK(a[j].center.r == b[j].center.r);
      }
    }
    CHECK(back.views.model_cluster == s.views.model_cluster);

    const fs::path dir = scratch_dir("store");
    save_store((dir / "store.json").string(), s);
    CHECK(load_store((dir / "store.json").string()).views.models.size() == s.views.models.size());
    auto doc = nlohmann::json::parse(store_to_json(s));
    doc["version"] = 99;
    CHECK_THROWS_AS(store_from_json(doc.dump()), FormatError);
    CHECK_THROWS_AS(store_from_json("{}"), FormatError);
    CHECK_THROWS_AS(load_store((dir / "none.json").string()), FormatError);
    fs::remove_all(dir);
  }

  TEST_CASE("autonomous training bookkeeping") {
    const PinchFixture& fx = pinch();
    ModelStore s = fx.store;
    Params p = fx.params;
    s.params = p;

    // an object far too large for the hand never succeeds: the store is unchanged
    Scene huge;
    Primitive big;
    big.kind = PrimitiveKind::Box;
    big.dims = Vec3(0.4, 0.4, 0.4);
    huge.add(big);
    huge.camera = look_at(Vec3(0.6, -0.6, 0.5), Vec3::Zero());
    huge.intrinsics = {80, 60, 40.0};
    SelfTrainOptions opt;
    opt.variant = Variant::A3;
    opt.rounds = 2;
    const std::string before = store_to_json(s);
    const auto none = selftrain(s, {{"huge", huge}}, opt);
    REQUIRE(none.size() == 1);
    CHECK(none[0].new_successes == 0);
    CHECK(store_to_json(s) == before);

    // the training object itself: successes are appended one per scene and round
    const SyntheticTask task = box_pinch_task();
    opt.rounds = 1;
    const auto rounds = selftrain(s, {{"pinch", task.scene}, {"huge", huge}}, opt);
    REQUIRE(rounds.size() == 1);
    CHECK(rounds[0].attempted == 2);
    CHECK(s.examples.size() == fx.store.examples.size() + rounds[0].new_successes);
    for (std::size_t k = fx.store.examples.size(); k < s.examples.size(); ++k) {
      CHECK(s.examples[k].source == "pinch");
      CHECK(s.examples[k].name == "self:pinch:r1");
      CHECK(s.examples[k].views.size() == 1);
    }
    CHECK_THROWS_AS(selftrain(s, {}, SelfTrainOptions{0}), std::invalid_argument);
  }
}
