#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mfrate/grid.hpp"

namespace mfrate {

// 2^28 complex amplitudes (M = 16, N = 7).
inline constexpr std::size_t kDefaultAmplitudeBudget = std::size_t{1} << 28;

/// Symmetric N-particle wavefunction on the M^N tensor grid, stored as a
/// flat row-major array (x_1 is the slowest index).
struct NBodyState {
  GridSpec grid;
  int particles = 1;
  std::vector<cplx> amplitudes;
  double time = 0.0;

  std::size_t size() const { return amplitudes.size(); }
  double norm() const;
};

std::size_t tensor_size(int points, int particles);

NBodyState factorized_state(const Wavefunction& phi, int particles,
                            std::size_t amplitude_budget = kDefaultAmplitudeBudget);

using NBodyObserver = std::function<void(const NBodyState&)>;

/// Strang splitting for H_N = sum_j -Laplacian_j + (1/N) sum_{i<j} V(x_i - x_j):
/// N-dimensional FFT kinetic half steps around a diagonal potential phase.
/// When `sample_stride` > 0 the observer sees the state at t0 and after every
/// `sample_stride` steps (always including the final step).
NBodyState evolve_nbody(const NBodyState& psi, const PotentialSpec& potential, double horizon, double dt,
                        int sample_stride = 0, const NBodyObserver& observer = {});

/// Convenience wrapper that collects every sample (small systems only).
std::vector<NBodyState> nbody_trajectory(const NBodyState& psi, const PotentialSpec& potential, double horizon,
                                         double dt, int sample_stride);

// <psi, H_N psi>
double nbody_energy(const NBodyState& psi, const PotentialSpec& potential);

// ||psi o (p q) - psi|| with the dx^N quadrature.
double symmetry_defect(const NBodyState& psi, int p, int q);

struct MarginalDensity {
  GridSpec grid;
  CMatrix matrix;  // index (x_1..x_k) row-major, M^k x M^k
  int order = 1;

  double trace() const;  // trace * dx^k
};

MarginalDensity reduce_marginal(const NBodyState& psi, int order);

// |phi><phi| as a one-particle density kernel phi(x) conj(phi(y)).
MarginalDensity pure_state_density(const Wavefunction& phi);

// Tr_k over the last particle of a k-particle marginal.
MarginalDensity partial_trace_last(const MarginalDensity& gamma);

/// Trace norm of the Hermitian difference (sum of absolute eigenvalues of the
/// dx^k-weighted matrix); no factor 1/2.
double trace_distance(const MarginalDensity& gamma, const MarginalDensity& rho);
double hs_distance(const MarginalDensity& gamma, const MarginalDensity& rho);

/// Hilbert-Schmidt norm of the residual of the first BBGKY equation at the
/// middle of three consecutive, uniformly spaced samples:
///   i d/dt gamma1 - [T, gamma1] - (N-1)/N Tr_2 [V(x_1 - x_2), gamma2].
/// The time derivative is a central difference.
double bbgky_residual(std::span<const NBodyState> samples, const PotentialSpec& potential);

}  // namespace mfrate
