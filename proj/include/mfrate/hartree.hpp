#pragma once

#include <vector>

#include "mfrate/grid.hpp"

namespace mfrate {

struct HartreeSample {
  double t;
  Wavefunction phi;
};

/// Time-ordered samples of a Hartree solution. Immutable once returned.
class HartreeTrajectory {
 public:
  HartreeTrajectory(GridSpec grid, PotentialSpec potential, double dt, std::vector<HartreeSample> samples);

  const GridSpec& grid() const { return grid_; }
  const PotentialSpec& potential() const { return potential_; }
  double dt() const { return dt_; }
  const std::vector<HartreeSample>& samples() const { return samples_; }
  double start_time() const { return samples_.front().t; }
  double end_time() const { return samples_.back().t; }

  // Exact sample when t hits one, otherwise linear interpolation in t.
  Wavefunction at(double t) const;
  const Wavefunction& final_state() const { return samples_.back().phi; }

 private:
  GridSpec grid_;
  PotentialSpec potential_;
  double dt_;
  std::vector<HartreeSample> samples_;
};

/// Second-order Strang splitting for i d/dt phi = -Laplacian phi + (V * |phi|^2) phi:
/// half kinetic step, nonlinear phase with the post-half-step density, half
/// kinetic step. The number of steps is round(T / dt); samples are taken
/// every `sample_stride` steps (0: endpoints only) and always at t = 0 and t = T.
HartreeTrajectory evolve_hartree(const Wavefunction& phi0, const PotentialSpec& potential, double horizon,
                                 double dt, int sample_stride = 1);

// Kinetic plus half the double-convolution term.
double hartree_energy(const Wavefunction& phi, const PotentialSpec& potential);

// Discrete H^1 norm sqrt(||phi||^2 + ||grad phi||^2), recorded as a diagnostic.
double h1_norm(const Wavefunction& phi);

/// Complex conjugation; evolving conj(phi) forward is evolving phi backward.
Wavefunction conjugate(const Wavefunction& phi);

}  // namespace mfrate
