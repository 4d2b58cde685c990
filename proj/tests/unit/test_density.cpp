#include "support.hpp"

#include "viewgrasp/density.hpp"
#include "viewgrasp/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace viewgrasp;
using namespace test_support;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent scalar formulas.
double gauss3(const Vec3& x, const Vec3& mu, double s) {
  return std::exp(-(x - mu).squaredNorm() / (2 * s * s)) / std::pow(2 * kPi * s * s, 1.5);
}
double gauss2(const Descriptor& x, const Descriptor& mu, double s) {
  return std::exp(-(x - mu).squaredNorm() / (2 * s * s)) / (2 * kPi * s * s);
}
double vmf_pair(const Quat& q, const Quat& mu, double k) {
  const double c4 = k / (4 * kPi * kPi * std::cyl_bessel_i(1.0, k));
  return c4 * std::cosh(k * q.coeffs().dot(mu.coeffs()));
}

KernelSet random_set(Rng& rng, int n, const Bandwidth& bw) {
  std::vector<Kernel> ks;
  for (int j = 0; j < n; ++j) {
    Kernel k;
    k.center.pose = random_pose(rng, 0.05);
    k.center.r = {30.0 * uniform01(rng), -10.0 + 20.0 * uniform01(rng)};
    k.weight = 0.1 + uniform01(rng);
    ks.push_back(k);
  }
  return KernelSet(ks, bw);
}

}  // namespace

TEST_SUITE("density") {
  TEST_CASE("vMF pair is antipodally symmetric and equals C4 on orthogonal quaternions") {
    Rng rng = substream(2, 0, 0);
    const Quat mu = uniform_quaternion(rng);
    Quat neg = mu;
    neg.coeffs() = -mu.coeffs();
    CHECK(eval_vmf_pair(mu, mu, 3.0) == doctest::Approx(eval_vmf_pair(neg, mu, 3.0)).epsilon(1e-14));
    const Quat orth(mu.x(), -mu.w(), mu.z(), -mu.y());  // (w,x,y,z) ⟂ mu
    REQUIRE(std::abs(orth.coeffs().dot(mu.coeffs())) < 1e-15);
    CHECK(eval_vmf_pair(orth, mu, 3.0) == doctest::Approx(std::exp(vmf_log_normalizer(3.0))).epsilon(1e-12));
    CHECK_THROWS_AS(eval_vmf_pair(mu, mu, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(eval_vmf_pair(mu, mu, -1.0), std::invalid_argument);
  }

  TEST_CASE("vMF normalizer matches the Bessel-function formula") {
    for (double k : {0.01, 0.5, 1.0, 4.0, 16.0, 29.9, 30.1, 100.0, 700.0}) {
      const double expect = std::log(k / (4 * kPi * kPi)) - std::log(std::cyl_bessel_i(1.0, k));
      CHECK(vmf_log_normalizer(k) == doctest::Approx(expect).epsilon(1e-10));
    }
    CHECK(vmf_log_normalizer(5000.0) < vmf_log_normalizer(1000.0) + 10.0);
    CHECK(std::isfinite(vmf_log_normalizer(1e5)));
  }

  TEST_CASE("vMF pair integrates to one over the quaternion sphere") {
    Rng rng = substream(2, 1, 0);
    const Quat mu = uniform_quaternion(rng);
    for (double k : {0.5, 4.0}) {
      double sum = 0.0;
      const int n = 200000;
      for (int i = 0; i < n; ++i) sum += eval_vmf_pair(uniform_quaternion(rng), mu, k);
      CHECK(sum / n * 2 * kPi * kPi == doctest::Approx(1.0).epsilon(0.01));
    }
  }

  TEST_CASE("kernel value factorizes and matches the scalar formula") {
    const Bandwidth bw{0.01, 5.0, 2.0};
    Feature mu;
    mu.pose = {Vec3(0.1, -0.2, 0.3), axis_angle(Vec3(1, 2, 3).normalized(), 0.7)};
    mu.r = {3.0, -1.0};
    Feature x;
    x.pose = {Vec3(0.105, -0.19, 0.3), axis_angle(Vec3(0, 1, 0), 0.2) * mu.pose.q};
    x.r = {2.0, 0.5};
    const double expect = gauss3(x.pose.p, mu.pose.p, 0.01) * vmf_pair(x.pose.q, mu.pose.q, 5.0) * gauss2(x.r, mu.r, 2.0);
    CHECK(eval_kernel(x, mu, bw) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(eval_kernel(x, mu, bw) ==
          doctest::Approx(eval_gauss3(x.pose.p, mu.pose.p, 0.01) * eval_vmf_pair(x.pose.q, mu.pose.q, 5.0) *
                          eval_gauss_descriptor(x.r, mu.r, 2.0))
              .epsilon(1e-12));
    const double peak = gauss3(mu.pose.p, mu.pose.p, 0.01) * vmf_pair(mu.pose.q, mu.pose.q, 5.0) * gauss2(mu.r, mu.r, 2.0);
    CHECK(eval_kernel(mu, mu, bw) == doctest::Approx(peak).epsilon(1e-12));
  }

  TEST_CASE("pdf of one kernel, of duplicated kernels and against a naive sum") {
    const Bandwidth bw{0.02, 3.0, 5.0};
    Rng rng = substream(2, 2, 0);
    Kernel k;
    k.center.pose = random_pose(rng, 0.1);
    k.center.r = {10, 2};
    const KernelSet one({k}, bw), two({k, k}, bw);
    for (int i = 0; i < 20; ++i) {
      Feature x{random_pose(rng, 0.1), Descriptor(10 + normal01(rng), 2 + normal01(rng))};
      CHECK(eval_pdf(one, x) == doctest::Approx(eval_kernel(x, k.center, bw)).epsilon(1e-14));
      CHECK(eval_pdf(two, x) == doctest::Approx(eval_pdf(one, x)).epsilon(1e-14));
    }
    const KernelSet s = random_set(rng, 40, bw);
    for (int i = 0; i < 50; ++i) {
      const Feature x = sample(s, rng);
      double naive = 0.0;
      for (const auto& kk : s.kernels())
        naive += kk.weight * gauss3(x.pose.p, kk.center.pose.p, bw.sigma_p) *
                 vmf_pair(x.pose.q, kk.center.pose.q, bw.sigma_q) * gauss2(x.r, kk.center.r, bw.sigma_r);
      CHECK(eval_pdf(s, x) == doctest::Approx(naive).epsilon(1e-10));
    }
    CHECK_THROWS_AS(eval_pdf(KernelSet(), Feature{}), InvalidState);
  }

  TEST_CASE("pdf is invariant under kernel quaternion sign flips") {
    Rng rng = substream(2, 3, 0);
    const Bandwidth bw{0.02, 3.0, 5.0};
    const KernelSet s = random_set(rng, 10, bw);
    std::vector<Kernel> flipped = s.kernels();
    for (auto& k : flipped) k.center.pose.q.coeffs() *= -1.0;
    const KernelSet f(flipped, bw);
    for (int i = 0; i < 20; ++i) {
      const Feature x = sample(s, rng);
      CHECK(eval_pdf(f, x) == doctest::Approx(eval_pdf(s, x)).epsilon(1e-12));
    }
  }

  TEST_CASE("weights are normalized and validated") {
    Rng rng = substream(2, 4, 0);
    const KernelSet s = random_set(rng, 17, Bandwidth{});
    double sum = 0.0;
    for (const auto& k : s.kernels()) sum += k.weight;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    std::vector<Kernel> bad = s.kernels();
    bad[0].weight = -1.0;
    CHECK_THROWS_AS(KernelSet(bad, Bandwidth{}), std::invalid_argument);
    CHECK_THROWS_AS(KernelSet(s.kernels(), Bandwidth{0.0, 1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(KernelSet::from_normalized(bad, Bandwidth{}), std::invalid_argument);
    const KernelSet again = KernelSet::from_normalized(s.kernels(), s.bandwidth());
    for (std::size_t j = 0; j < s.size(); ++j) CHECK(again[j].weight == s[j].weight);
  }

  TEST_CASE("descriptor marginal") {
    const Bandwidth bw{0.01, 2.0, 3.0};
    Rng rng = substream(2, 5, 0);
    Kernel k;
    k.center.pose = random_pose(rng);
    k.center.r = {4.0, 1.0};
    const KernelSet one({k}, bw);
    const Descriptor r(5.0, -1.0);
    CHECK(marginal_descriptor(one, r) == doctest::Approx(gauss2(r, k.center.r, 3.0)).epsilon(1e-14));

    const KernelSet s = random_set(rng, 8, bw);
    std::vector<Kernel> moved = s.kernels();
    for (auto& m : moved) m.center.pose = random_pose(rng);
    CHECK(marginal_descriptor(KernelSet(moved, bw), r) == doctest::Approx(marginal_descriptor(s, r)).epsilon(1e-14));
  }

  TEST_CASE("descriptor marginal equals the pose integral of the pdf") {
    // Importance sampling: positions from a widened Gaussian around a kernel, orientations uniform.
    const Bandwidth bw{0.01, 2.0, 3.0};
    Rng rng = substream(2, 6, 0);
    const KernelSet s = random_set(rng, 5, bw);
    const Descriptor r(12.0, 1.0);
    const double wide = 2.0 * bw.sigma_p;
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const auto& c = s[static_cast<std::size_t>(uniform01(rng) * s.size()) % s.size()];
      Feature x;
      x.pose.p = c.center.pose.p + normal3(rng, wide);
      x.pose.q = uniform_quaternion(rng);
      x.r = r;
      double g = 0.0;
      for (const auto& k : s.kernels()) g += gauss3(x.pose.p, k.center.pose.p, wide) / s.size();
      g /= 2 * kPi * kPi;
      sum += eval_pdf(s, x) / g;
    }
    CHECK(sum / n == doctest::Approx(marginal_descriptor(s, r)).epsilon(0.02));
  }

  TEST_CASE("conditional pose") {
    const Bandwidth bw{0.01, 2.0, 1.0};
    Rng rng = substream(2, 7, 0);
    std::vector<Kernel> ks;
    for (int j = 0; j < 4; ++j) {
      Kernel k;
      k.center.pose = random_pose(rng);
      k.center.r = {5.0, 5.0};
      k.weight = 1.0 + j;
      ks.push_back(k);
    }
    const KernelSet same(ks, bw);
    const PoseDensity c = conditional_pose(same, {1.0, 2.0});
    for (std::size_t j = 0; j < ks.size(); ++j)
      CHECK(c.kernels()[j].weight == doctest::Approx(same[j].weight).epsilon(1e-12));

    ks[1].center.r = {50.0, 50.0};
    for (std::size_t j : {0u, 2u, 3u}) ks[j].center.r = {0.0, 0.0};
    const PoseDensity c2 = conditional_pose(KernelSet(ks, bw), {50.0, 50.0});
    CHECK(c2.kernels()[1].weight == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(conditional_pose(KernelSet(ks, bw), {1e6, 1e6}), DegenerateConditional);
  }

  TEST_CASE("conditional times marginal reproduces the joint") {
    const Bandwidth bw{0.02, 4.0, 4.0};
    Rng rng = substream(2, 8, 0);
    const KernelSet s = random_set(rng, 30, bw);
    for (int i = 0; i < 100; ++i) {
      const Feature x = sample(s, rng);
      const double joint = eval_pdf(s, x);
      const double prod = conditional_pose(s, x.r).eval(x.pose) * marginal_descriptor(s, x.r);
      CHECK(std::abs(prod - joint) <= 1e-9 * joint);
    }
  }

  TEST_CASE("sampling") {
    Rng rng = substream(2, 9, 0);
    Kernel k;
    k.center.pose = random_pose(rng);
    k.center.r = {3.0, 1.0};
    const KernelSet tight({k}, Bandwidth{1e-12, 1e12, 1e-12});
    const Feature f = sample(tight, rng);
    CHECK((f.pose.p - k.center.pose.p).norm() < 1e-9);
    CHECK(quat_abs_dot(f.pose.q, k.center.pose.q) > 1.0 - 1e-9);
    CHECK((f.r - k.center.r).norm() < 1e-9);

    const double sp = 0.01;
    const KernelSet single({k}, Bandwidth{sp, 2.0, 1.0});
    Vec3 mean = Vec3::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += sample(single, rng).pose.p;
    mean /= n;
    CHECK((mean - k.center.pose.p).cwiseAbs().maxCoeff() <= 3 * sp / std::sqrt(double(n)));

    const KernelSet many = random_set(rng, 5, Bandwidth{});
    std::vector<int> counts(5, 0);
    const int m = 1000000;
    for (int i = 0; i < m; ++i) ++counts[sample_cumulative(rng, many.cumulative_weights())];
    for (int j = 0; j < 5; ++j) CHECK(std::abs(double(counts[j]) / m - many[j].weight) <= 0.01 * many[j].weight);
    CHECK_THROWS_AS(sample(KernelSet(), rng), InvalidState);
  }

  TEST_CASE("vMF samples concentrate around the mean as kappa grows") {
    Rng rng = substream(2, 10, 0);
    const Quat mu = uniform_quaternion(rng);
    double prev = 0.0;
    for (double kappa : {1.0, 10.0, 100.0, 1000.0}) {
      double mean_dot = 0.0;
      for (int i = 0; i < 20000; ++i) mean_dot += quat_abs_dot(sample_vmf_pair(rng, mu, kappa), mu);
      mean_dot /= 20000;
      CHECK(mean_dot > prev);
      prev = mean_dot;
    }
    CHECK(prev > 0.99);
  }
}
