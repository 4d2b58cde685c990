#include "viewgrasp/density.hpp"

#include "viewgrasp/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace viewgrasp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2π)

std::vector<double> cumulative_of(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    c[i] = acc;
  }
  return c;
}

// log((e^{a} + e^{-a})/2) for a >= 0.
double log_cosh(double a) {
  a = std::abs(a);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

void Bandwidth::validate() const {
  if (!(sigma_p > 0.0) || !(sigma_q > 0.0) || !(sigma_r > 0.0))
    throw std::invalid_argument("bandwidth components must be strictly positive");
}

KernelSet::KernelSet(std::vector<Kernel> kernels, Bandwidth bandwidth)
    : kernels_(std::move(kernels)), bandwidth_(bandwidth) {
  bandwidth_.validate();
  double total = 0.0;
  for (const auto& k : kernels_) {
    if (!(k.weight >= 0.0) || !std::isfinite(k.weight)) throw std::invalid_argument("kernel weight must be >= 0");
    total += k.weight;
  }
  if (!kernels_.empty() && !(total > 0.0)) throw std::invalid_argument("kernel weights sum to zero");
  std::vector<double> w;
  w.reserve(kernels_.size());
  for (auto& k : kernels_) {
    k.weight /= total;
    k.center.pose.q = normalized(k.center.pose.q);
    w.push_back(k.weight);
  }
  cumulative_ = cumulative_of(w);
}

KernelSet KernelSet::from_normalized(std::vector<Kernel> kernels, Bandwidth bandwidth) {
  bandwidth.validate();
  KernelSet s;
  double total = 0.0;
  std::vector<double> w;
  w.reserve(kernels.size());
  for (const auto& k : kernels) {
    if (!(k.weight >= 0.0) || !std::isfinite(k.weight)) throw std::invalid_argument("kernel weight must be >= 0");
    if (std::abs(k.center.pose.q.norm() - 1.0) > 1e-9) throw std::invalid_argument("kernel quaternion is not unit");
    total += k.weight;
    w.push_back(k.weight);
  }
  if (!kernels.empty() && std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("kernel weights do not sum to one");
  s.kernels_ = std::move(kernels);
  s.bandwidth_ = bandwidth;
  s.cumulative_ = cumulative_of(w);
  return s;
}

double log_bessel_i1(double x) {
  if (x < 0.0) throw std::invalid_argument("log_bessel_i1: negative argument");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x < 30.0) {
    const double h = 0.5 * x;
    const double h2 = h * h;
    double term = h;
    double sum = term;
    for (int k = 0; k < 500; ++k) {
      term *= h2 / ((k + 1.0) * (k + 2.0));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return std::log(sum);
  }
  // I_ν(x) ~ e^x / sqrt(2πx) Σ_k (-1)^k a_k / x^k, a_k = Π_{j<=k}(4ν²-(2j-1)²) / (k! 8^k)
  double series = 1.0;
  double a = 1.0;
  for (int k = 1; k <= 8; ++k) {
    const double odd = 2.0 * k - 1.0;
    a *= (4.0 - odd * odd) / (k * 8.0);
    series += ((k % 2) ? -a : a) / std::pow(x, k);
  }
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(series);
}

double vmf_log_normalizer(double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("vMF concentration must be positive");
  return std::log(kappa) - std::log(4.0 * std::numbers::pi * std::numbers::pi) - log_bessel_i1(kappa);
}

double log_gauss3(const Vec3& x, const Vec3& mu, double sigma) {
  const double s2 = sigma * sigma;
  return -0.5 * (x - mu).squaredNorm() / s2 - 1.5 * (kLog2Pi + std::log(s2));
}

double log_gauss_descriptor(const Descriptor& r, const Descriptor& mu, double sigma) {
  const double s2 = sigma * sigma;
  return -0.5 * (r - mu).squaredNorm() / s2 - 0.5 * kDescriptorDim * (kLog2Pi + std::log(s2));
}

double log_vmf_pair(const Quat& q, const Quat& mu, double kappa) {
  return vmf_log_normalizer(kappa) + log_cosh(kappa * q.coeffs().dot(mu.coeffs()));
}

double eval_gauss3(const Vec3& x, const Vec3& mu, double sigma) { return std::exp(log_gauss3(x, mu, sigma)); }

double eval_gauss_descriptor(const Descriptor& r, const Descriptor& mu, double sigma) {
  return std::exp(log_gauss_descriptor(r, mu, sigma));
}

double eval_vmf_pair(const Quat& q, const Quat& mu, double kappa) { return std::exp(log_vmf_pair(q, mu, kappa)); }

double eval_kernel(const Feature& x, const Feature& mu, const Bandwidth& bw) {
  bw.validate();
  return std::exp(log_gauss3(x.pose.p, mu.pose.p, bw.sigma_p) + log_vmf_pair(x.pose.q, mu.pose.q, bw.sigma_q) +
                  log_gauss_descriptor(x.r, mu.r, bw.sigma_r));
}

double eval_pdf(const KernelSet& set, const Feature& x) {
  if (set.empty()) throw InvalidState("eval_pdf on an empty kernel set");
  double sum = 0.0;
  for (const auto& k : set.kernels()) sum += k.weight * eval_kernel(x, k.center, set.bandwidth());
  return sum;
}

double marginal_descriptor(const KernelSet& set, const Descriptor& r) {
  if (set.empty()) throw InvalidState("marginal on an empty kernel set");
  double sum = 0.0;
  for (const auto& k : set.kernels()) sum += k.weight * eval_gauss_descriptor(r, k.center.r, set.bandwidth().sigma_r);
  return sum;
}

PoseDensity::PoseDensity(std::vector<WeightedPose> kernels, double sigma_p, double sigma_q)
    : kernels_(std::move(kernels)), sigma_p_(sigma_p), sigma_q_(sigma_q) {
  if (!(sigma_p > 0.0) || !(sigma_q > 0.0)) throw std::invalid_argument("pose bandwidth must be positive");
  double total = 0.0;
  for (const auto& k : kernels_) {
    if (!(k.weight >= 0.0)) throw std::invalid_argument("pose kernel weight must be >= 0");
    total += k.weight;
  }
  if (!kernels_.empty() && !(total > 0.0)) throw std::invalid_argument("pose kernel weights sum to zero");
  std::vector<double> w;
  w.reserve(kernels_.size());
  for (auto& k : kernels_) {
    k.weight /= total;
    w.push_back(k.weight);
  }
  cumulative_ = cumulative_of(w);
}

double PoseDensity::eval(const Pose& s) const {
  if (empty()) throw InvalidState("eval on an empty pose density");
  double sum = 0.0;
  for (const auto& k : kernels_)
    sum += k.weight * std::exp(log_gauss3(s.p, k.pose.p, sigma_p_) + log_vmf_pair(s.q, k.pose.q, sigma_q_));
  return sum;
}

Pose sample_pose_kernel(const Pose& center, double sigma_p, double sigma_q, Rng& rng) {
  Pose out;
  out.p = center.p + normal3(rng, sigma_p);
  out.q = sample_vmf_pair(rng, center.q, sigma_q);
  return out;
}

Pose PoseDensity::sample(Rng& rng) const {
  if (empty()) throw InvalidState("sample from an empty pose density");
  const auto& k = kernels_[sample_cumulative(rng, cumulative_)];
  return sample_pose_kernel(k.pose, sigma_p_, sigma_q_, rng);
}

PoseDensity conditional_pose(const KernelSet& set, const Descriptor& r) {
  if (set.empty()) throw InvalidState("conditional on an empty kernel set");
  const auto& bw = set.bandwidth();
  std::vector<WeightedPose> out;
  out.reserve(set.size());
  double marginal = 0.0;
  for (const auto& k : set.kernels()) {
    const double w = k.weight * eval_gauss_descriptor(r, k.center.r, bw.sigma_r);
    marginal += w;
    out.push_back({k.center.pose, w});
  }
  if (!(marginal >= 1e-300)) throw DegenerateConditional("descriptor has vanishing marginal density");
  return PoseDensity(std::move(out), bw.sigma_p, bw.sigma_q);
}

Feature sample(const KernelSet& set, Rng& rng) {
  if (set.empty()) throw InvalidState("sample from an empty kernel set");
  const auto& bw = set.bandwidth();
  const auto& k = set[sample_cumulative(rng, set.cumulative_weights())];
  Feature f;
  f.pose = sample_pose_kernel(k.center.pose, bw.sigma_p, bw.sigma_q, rng);
  std::normal_distribution<double> n(0.0, bw.sigma_r);
  for (int i = 0; i < kDescriptorDim; ++i) f.r[i] = k.center.r[i] + n(rng);
  return f;
}

}  // namespace viewgrasp
