#pragma once

#include <functional>
#include <optional>

#include "mfrate/grid.hpp"
#include "mfrate/hartree.hpp"

namespace mfrate {

/// Kernels of U2^*(t) a_x U2(t) = sum_y dx [G1(x,y) a_y + G2(x,y) a_y^*].
/// G3 = conj(G2) and G4 = conj(G1) are not stored.
struct BogoliubovPair {
  GridSpec grid;
  CMatrix g1;
  CMatrix g2;
  double time = 0.0;
};

struct CouplingKernels {
  CMatrix k1;     // V(x-y) phi(x) conj(phi(y))
  CMatrix k2;     // V(x-y) phi(x) phi(y)
  RVector u_eff;  // V * |phi|^2
};

CouplingKernels coupling_kernels(const Wavefunction& phi, const PotentialSpec& potential);

// G1 = 1/dx on the diagonal (discrete delta), G2 = 0.
BogoliubovPair init_pair(const GridSpec& grid, double time = 0.0);

/// One Strang step of
///   i d/dt G1 = (T + U) G1 + K1 dx G1 + K2 dx conj(G2)
///   i d/dt G2 = (T + U) G2 + K1 dx G2 + K2 dx conj(G1)
/// with the kinetic half steps acting on the x index and the coupling part
/// integrated by one RK4 step with kernels frozen at phi_mid.
BogoliubovPair step_pair(const BogoliubovPair& pair, const Wavefunction& phi_mid, const PotentialSpec& potential,
                         double dt);

using PairObserver = std::function<void(const BogoliubovPair&)>;

/// Steps from the trajectory start to start + horizon; the midpoint state of
/// every step comes from HartreeTrajectory::at. The observer (if any) sees
/// the pair every `sample_stride` steps and at the end.
BogoliubovPair evolve_pair(const HartreeTrajectory& trajectory, double horizon, double dt, int sample_stride = 0,
                           const PairObserver& observer = {});

// Hilbert-Schmidt norm of (G1 G1^* - G2 G2^*) dx minus the discrete delta.
double symplectic_defect_hermitian(const BogoliubovPair& pair);
// Hilbert-Schmidt norm of (G1 G2^T - G2 G1^T) dx.
double symplectic_defect_symmetric(const BogoliubovPair& pair);

struct G2NormReport {
  double value = 0.0;  // sum |G2|^2 dx^2 = <U2 Omega, N U2 Omega>
  std::optional<double> relative_discrepancy;
};

G2NormReport g2_norm_check(const BogoliubovPair& pair, std::optional<double> fock_moment = std::nullopt);

struct E2Correction {
  GridSpec grid;
  CMatrix matrix;
  int particles = 2;
  double time = 0.0;

  double l2_norm() const;  // Frobenius * dx
};

E2Correction e2_correction(const BogoliubovPair& pair, const Wavefunction& phi0, const Wavefunction& phi_t,
                           int particles);

}  // namespace mfrate
