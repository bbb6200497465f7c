#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace sketchdav {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Derives an independent stream seed from a base seed. SplitMix64 finalizer
/// applied to seed ^ golden-ratio-scrambled stream id; stable across builds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Standard-normal sampler: mt19937_64 driven Box-Muller transform.
/// The uniform mapping is (x >> 11) * 2^-53 (and +1 ulp for the log argument),
/// so identical seeds give identical samples on every platform with the same
/// libm. Samples are drawn in pairs; the spare is cached.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : gen_(seed) {}

  double next();

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// n x l matrix of i.i.d. standard normal entries, filled column by column.
Matrix gaussian_matrix(Eigen::Index n, Eigen::Index l, std::uint64_t seed);

Vector gaussian_vector(Eigen::Index n, std::uint64_t seed);

}  // namespace sketchdav
