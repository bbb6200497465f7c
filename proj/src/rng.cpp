#include "sketchdav/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sketchdav {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double GaussianSampler::next() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1], u2 in [0, 1).
  const double u1 =
      static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  have_spare_ = true;
  return r * std::cos(t);
}

Matrix gaussian_matrix(Eigen::Index n, Eigen::Index l, std::uint64_t seed) {
  if (n < 1 || l < 1) {
    throw std::invalid_argument("gaussian_matrix: dimensions must be >= 1");
  }
  GaussianSampler sampler(seed);
  Matrix out(n, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, j) = sampler.next();
    }
  }
  return out;
}

Vector gaussian_vector(Eigen::Index n, std::uint64_t seed) {
  return gaussian_matrix(n, 1, seed).col(0);
}

}  // namespace sketchdav
