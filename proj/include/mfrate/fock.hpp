#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "mfrate/grid.hpp"
#include "mfrate/hartree.hpp"

namespace mfrate {

using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr std::size_t kDefaultFockBudget = std::size_t{1} << 22;

// Top-two-sector mass above which truncated results are not trusted.
inline constexpr double kLeakageThreshold = 1e-6;

/// Bosonic Fock space over the sites of a periodic lattice, truncated at total
/// occupation `cutoff`. Basis order: graded by total occupation, and within a
/// grade descending lexicographic in (n_1, ..., n_m).
///
/// Mode operators b_i are orthonormal; the pointwise operators are
/// a_x = b_x / sqrt(dx), so [a_x, a_y^*] = delta_xy / dx.
class LatticeFockSpace {
 public:
  LatticeFockSpace(int modes, double spacing, int cutoff, std::size_t dimension_budget = kDefaultFockBudget);

  // The lattice as a grid; needs at least two modes.
  GridSpec lattice() const;
  int modes() const { return modes_; }
  double spacing() const { return spacing_; }
  int cutoff() const { return cutoff_; }
  std::size_t dimension() const { return dimension_; }

  std::span<const int> occupation(std::size_t index) const;
  std::size_t index_of(std::span<const int> occupation) const;
  int sector_of(std::size_t index) const { return sector_[index]; }
  std::size_t sector_begin(int n) const { return offsets_[static_cast<std::size_t>(n)]; }
  std::size_t sector_end(int n) const { return offsets_[static_cast<std::size_t>(n) + 1]; }

 private:
  std::size_t compositions(int total, int parts) const;

  int modes_;
  double spacing_;
  int cutoff_;
  std::size_t dimension_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> table_;  // compositions(s, p) at s * (modes + 1) + p
  std::vector<int> occupations_;
  std::vector<int> sector_;
};

using FockSpacePtr = std::shared_ptr<const LatticeFockSpace>;

// Unit lattice spacing.
FockSpacePtr build_basis(int modes, int cutoff, std::size_t dimension_budget = kDefaultFockBudget);
FockSpacePtr build_basis(const GridSpec& lattice, int cutoff, std::size_t dimension_budget = kDefaultFockBudget);

struct FockVector {
  FockSpacePtr space;
  CVector coefficients;

  double norm() const { return coefficients.norm(); }
  double sector_mass(int n) const;
};

FockVector vacuum(const FockSpacePtr& space);
FockVector apply(const SparseOp& op, const FockVector& psi);

double top_sectors_mass(const FockVector& psi, int count = 2);
double odd_sector_mass(const FockVector& psi);

enum class LadderKind { create, annihilate };

// b_i or b_i^*.
SparseOp mode_operator(const LatticeFockSpace& space, int site, LadderKind kind);

/// a^*(f) = sqrt(dx) sum_i f_i b_i^* and a(f) = sqrt(dx) sum_i conj(f_i) b_i,
/// for a one-particle function f sampled on the lattice.
SparseOp ladder(const CVector& f, LadderKind kind, const LatticeFockSpace& space);

// Lattice function f with a^*(f) Omega equal to the one-particle sector of psi.
CVector one_particle_function(const FockVector& psi);

/// sum_n (n + shift)^power ||psi^(n)||^2, with 0^0 = 1.
double number_moment(const FockVector& psi, double shift, double power);

// <psi, N^j psi>; j = 0 gives ||psi||^2.
double number_functional(const FockVector& psi, int j);

/// exp(factor * op) v by a Taylor series on sub-steps sized from the 1-norm of
/// op. Throws NumericalError when a sub-step series does not converge.
CVector exp_action(const SparseOp& op, cplx factor, const CVector& v);
CMatrix exp_action(const SparseOp& op, cplx factor, const CMatrix& block);

struct WeylResult {
  FockVector state;
  double leakage = 0.0;  // top-two-sector mass
  bool reliable = true;
};

// exp(a^*(f) - a(f)) psi, projected onto the truncated space.
WeylResult weyl_apply(const CVector& f, const FockVector& psi, double leakage_threshold = kLeakageThreshold);

/// e^{-||f||^2/2} sum_{n <= cutoff} a^*(f)^n / n! Omega, the exact projection
/// of W(f) Omega onto the truncated space.
FockVector coherent_state(const CVector& f, const FockSpacePtr& space);

// a^*(phi)^n Omega / sqrt(n!).
FockVector product_state(const CVector& phi, int n, const FockSpacePtr& space);

/// d_N * (1/Q) sum_q e^{i theta_q N} W(e^{-i theta_q} sqrt(N) phi) Omega with
/// theta_q = 2 pi q / Q. Requires Q >= 2 * cutoff + 1 and cutoff >= N.
FockVector theta_reconstruct(const CVector& phi, int n, int quadrature, const FockSpacePtr& space);

enum class Generator { quadratic, full };

namespace parts {
inline constexpr unsigned kinetic = 1;    // H0
inline constexpr unsigned quadratic = 2;  // H2 - H0 = L + M + B
inline constexpr unsigned cubic = 4;      // H3
inline constexpr unsigned quartic = 8;    // H4
}  // namespace parts

/// Skeleton matrices for the fluctuation generators on the lattice. H2(t) and
/// H3(t) are contracted with a given phi at assembly time; `coupling` is the
/// mean-field parameter N entering H3 and H4 only.
class GeneratorSet {
 public:
  GeneratorSet(FockSpacePtr space, PotentialSpec potential, double coupling);

  const FockSpacePtr& space() const { return space_; }
  const PotentialSpec& potential() const { return potential_; }
  double coupling() const { return coupling_; }

  SparseOp assemble(const Wavefunction& phi, unsigned part_mask) const;
  SparseOp assemble(const Wavefunction& phi, Generator which) const;

 private:
  struct Entry {
    std::int64_t position;
    double value;
  };
  struct Skeleton {
    std::vector<Entry> direct;
    std::vector<Entry> adjoint;  // entries of the transpose (values real)
  };

  Skeleton make_skeleton(const SparseOp& op) const;
  void add(std::vector<cplx>& values, const Skeleton& s, cplx coefficient, bool hermitian_pair) const;

  FockSpacePtr space_;
  PotentialSpec potential_;
  double coupling_;
  RVector v_;
  RMatrix t_;
  SparseOp pattern_;
  std::vector<Skeleton> hop_;    // b_i^* b_j at i * m + j
  std::vector<Skeleton> pair_;   // b_i^* b_j^* at i * m + j (i <= j)
  std::vector<Skeleton> cubic_;  // b_i^* b_j^* b_i at i * m + j
  RVector quartic_diagonal_;
  std::vector<cplx> kinetic_values_;       // H0 on the pattern; time independent
  std::vector<Entry> diagonal_positions_;  // pattern position of (r, r)
};

struct Propagation {
  FockVector state;
  double max_leakage = 0.0;  // largest top-two-sector mass seen over the steps
};

using FockObserver = std::function<void(const FockVector&, double)>;

/// Time-ordered product of exp(-i H(t_mid) dt) over round(T/dt) steps starting
/// at the trajectory's start time; H is H2 or H2 + H3 + H4 at the midpoint phi.
Propagation propagate(const FockVector& psi0, const GeneratorSet& generators, Generator which,
                      const HartreeTrajectory& trajectory, double horizon, double dt, int sample_stride = 0,
                      const FockObserver& observer = {});

/// The adjoint U^*(t0 + T; t0) applied to psi: the same steps in reverse
/// order with exp(+i H dt).
Propagation propagate_adjoint(const FockVector& psi, const GeneratorSet& generators, Generator which,
                              const HartreeTrajectory& trajectory, double horizon, double dt);

// Several vectors at once; they share every assembled generator.
std::vector<Propagation> propagate_adjoint(const std::vector<FockVector>& psis, const GeneratorSet& generators,
                                          Generator which, const HartreeTrajectory& trajectory, double horizon,
                                          double dt);

struct ResidualField {
  double time = 0.0;
  std::vector<FockVector> per_site;   // R_y Omega
  std::array<double, 3> aggregates{};  // sum_y dx ||(N+1)^{j/2} R_y Omega||^2, j = 0, 1, 2
  double max_leakage = 0.0;
};

/// R_y Omega = U^* a_y U Omega - U2^* a_y U2 Omega at time T after the
/// trajectory start.
ResidualField residual_r(double horizon, const GeneratorSet& generators, const HartreeTrajectory& trajectory,
                         double dt);

struct ProbeRow {
  double coupling = 0.0;
  double quadratic_ratio = 0.0;  // ||N^j (H2 - H0) psi|| / ||(N + 2)^{j+1} psi||
  double cubic_ratio = 0.0;      // sqrt(N) ||N^j H3 psi|| / ||(N + 1)^{j+3/2} psi||
  double quartic_ratio = 0.0;    // N ||N^j H4 psi|| / ||N^{j+2} psi||
};

struct ProbeReport {
  int j = 0;
  std::vector<ProbeRow> rows;  // maxima over trials, one row per coupling
  bool bounded = false;        // finite, and each column varies by < 2x across couplings
};

/// Random test vectors supported on sectors 1..cutoff-2 (Omega would make the
/// quartic denominator vanish).
ProbeReport generator_bound_probe(const FockSpacePtr& space, const PotentialSpec& potential, const Wavefunction& phi,
                                  const std::vector<double>& couplings, int j, int trials, std::uint64_t seed);

}  // namespace mfrate
