#pragma once

#include "viewgrasp/geometry.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace viewgrasp {

using Rng = std::mt19937_64;

/// Independent stream for work item `index` of the job tagged `tag`. Results
/// depend only on (master, tag, index), never on how work is split across threads.
Rng substream(std::uint64_t master, std::uint64_t tag, std::uint64_t index);

std::uint64_t mix64(std::uint64_t x);

double uniform01(Rng& rng);
double normal01(Rng& rng);
Vec3 normal3(Rng& rng, double sigma);

/// Uniform on S³ (Haar measure on SO(3) up to sign).
Quat uniform_quaternion(Rng& rng);

/// Draw from the antipodal von Mises-Fisher pair on S³ with mean ±mu and
/// concentration kappa (Wood's rejection sampler, then a fair sign flip).
Quat sample_vmf_pair(Rng& rng, const Quat& mu, double kappa);

/// Samples an index with probability proportional to cumulative[i]-cumulative[i-1].
std::size_t sample_cumulative(Rng& rng, const std::vector<double>& cumulative);

}  // namespace viewgrasp
