#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mfrate/types.hpp"

namespace mfrate {

/// Uniform periodic grid on [0, L) with M points.
///
/// All L2 inner products in the library are Riemann sums with weight
/// spacing(); the discrete delta at a grid point is 1/spacing().
class GridSpec {
 public:
  GridSpec(int points, double length);

  int points() const { return points_; }
  double length() const { return length_; }
  double spacing() const { return spacing_; }
  double position(int j) const { return j * spacing_; }

  // Angular frequencies 2*pi*n/L in FFT storage order (0, 1, ..., -M/2, ..., -1).
  const std::vector<double>& frequencies() const { return frequencies_; }

  bool operator==(const GridSpec& other) const {
    return points_ == other.points_ && length_ == other.length_;
  }

 private:
  int points_;
  double length_;
  double spacing_;
  std::vector<double> frequencies_;
};

GridSpec make_grid(int points, double length);

struct Wavefunction {
  GridSpec grid;
  CVector amplitudes;
  double time = 0.0;

  double norm() const;
  Wavefunction normalized() const;
};

// <f, g> = sum conj(f) g dx
cplx inner_product(const GridSpec& grid, const CVector& f, const CVector& g);
double l2_norm(const GridSpec& grid, const CVector& f);

struct PotentialSpec {
  enum class Kind { zero, gaussian, cosine, soft_coulomb };

  Kind kind = Kind::zero;
  double amplitude = 0.0;
  double width = 1.0;      // gaussian
  double softening = 1.0;  // soft_coulomb
  std::vector<int> harmonics;  // cosine: V(x) = A * sum_h cos(2 pi h x / L)

  static PotentialSpec zero() { return {}; }
  static PotentialSpec gaussian(double amplitude, double width);
  static PotentialSpec cosine(double amplitude, std::vector<int> harmonics);
  static PotentialSpec soft_coulomb(double amplitude, double softening);

  bool is_zero() const { return kind == Kind::zero || amplitude == 0.0; }
};

PotentialSpec::Kind potential_kind_from_string(std::string_view name);
std::string to_string(PotentialSpec::Kind kind);

/// V sampled at the minimal-image displacement j*dx for j = 0..M-1, so
/// that v[j] == v[M-j] holds bit for bit.
RVector sample_potential(const PotentialSpec& spec, const GridSpec& grid);

/// Dense M x M matrix of V(x_a - x_b).
RMatrix pair_potential_matrix(const RVector& samples);

/// Circular convolution (f * g)_i = dx * sum_j f_j g_{i-j}, computed by FFT.
CVector periodic_convolve(const CVector& f, const CVector& g, const GridSpec& grid);

/// V * |phi|^2 on the grid.
RVector mean_field_potential(const RVector& samples, const Wavefunction& phi);

/// Applies exp(-i k^2 dt) in Fourier space (the free propagator exp(i dt Laplacian)).
Wavefunction apply_kinetic_propagator(const Wavefunction& psi, double dt);

/// The discrete -Laplacian as a dense real symmetric matrix, consistent with
/// the FFT kinetic phase: T = F^-1 diag(k^2) F.
RMatrix kinetic_matrix(const GridSpec& grid);

void require_finite(const CVector& v, const char* what);

}  // namespace mfrate
