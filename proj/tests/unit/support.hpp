#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

#include "mfrate/grid.hpp"
#include "mfrate/rng.hpp"

namespace testing {

using mfrate::CMatrix;
using mfrate::CVector;
using mfrate::cplx;
using mfrate::GridSpec;

inline CVector random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CVector v(n);
  for (int i = 0; i < n; ++i) v[i] = {mfrate::uniform_symmetric(rng), mfrate::uniform_symmetric(rng)};
  return v;
}

inline CMatrix random_hermitian(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CMatrix a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = {mfrate::uniform_symmetric(rng), mfrate::uniform_symmetric(rng)};
  }
  return 0.5 * (a + a.adjoint());
}

// exp(-(x-c)^2 / (2 s)) evolved under i psi_t = -psi_xx, summed over periodic images.
inline cplx free_gaussian(double x, double t, double c, double sigma, double length) {
  const cplx s{sigma * sigma, 2.0 * t};
  cplx sum = 0.0;
  for (int image = -3; image <= 3; ++image) {
    const double d = x - c + image * length;
    sum += std::exp(-d * d / (2.0 * s));
  }
  return std::sqrt(cplx{sigma * sigma, 0.0} / s) * sum;
}

inline mfrate::Wavefunction gaussian_state(const GridSpec& grid, double c, double sigma) {
  CVector a(grid.points());
  for (int j = 0; j < grid.points(); ++j) a[j] = free_gaussian(grid.position(j), 0.0, c, sigma, grid.length());
  return mfrate::Wavefunction{grid, a, 0.0}.normalized();
}

// Least-squares slope of ln y against ln x.
template <class Xs, class Ys>
double loglog_slope(const Xs& xs, const Ys& ys) {
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]) / n;
    my += std::log(ys[i]) / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (std::log(xs[i]) - mx) * (std::log(xs[i]) - mx);
    sxy += (std::log(xs[i]) - mx) * (std::log(ys[i]) - my);
  }
  return sxy / sxx;
}

}  // namespace testing
