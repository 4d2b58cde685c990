#include "viewgrasp/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace viewgrasp {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng substream(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  const std::uint64_t a = mix64(master);
  const std::uint64_t b = mix64(a ^ mix64(tag + 0x632be59bd9b4e019ULL));
  const std::uint64_t c = mix64(b ^ mix64(index + 0x2545f4914f6cdd1dULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double normal01(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Vec3 normal3(Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

Quat uniform_quaternion(Rng& rng) {
  Eigen::Vector4d v;
  do {
    for (int i = 0; i < 4; ++i) v[i] = normal01(rng);
  } while (v.norm() < 1e-12);
  v.normalize();
  return Quat(v[3], v[0], v[1], v[2]);
}

namespace {

double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

// Component of the sample along the mean direction for a vMF on S^{dim-1}.
double sample_vmf_cosine(Rng& rng, double kappa, int dim) {
  const double m1 = dim - 1.0;
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  for (;;) {
    const double z = sample_beta(rng, m1 / 2.0, m1 / 2.0);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = uniform01(rng);
    if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return w;
  }
}

}  // namespace

Quat sample_vmf_pair(Rng& rng, const Quat& mu, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("vMF concentration must be positive");
  const Eigen::Vector4d m = mu.coeffs().normalized();
  const double w = sample_vmf_cosine(rng, kappa, 4);
  // Uniform tangent direction orthogonal to m.
  Eigen::Vector4d t;
  do {
    for (int i = 0; i < 4; ++i) t[i] = normal01(rng);
    t -= t.dot(m) * m;
  } while (t.norm() < 1e-12);
  t.normalize();
  Eigen::Vector4d s = w * m + std::sqrt(std::max(0.0, 1.0 - w * w)) * t;
  if (uniform01(rng) < 0.5) s = -s;
  s.normalize();
  Quat out;
  out.coeffs() = s;
  return out;
}

std::size_t sample_cumulative(Rng& rng, const std::vector<double>& cumulative) {
  if (cumulative.empty() || !(cumulative.back() > 0.0)) throw std::invalid_argument("empty or zero-mass distribution");
  const double u = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace viewgrasp
