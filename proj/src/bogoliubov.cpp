#include "mfrate/bogoliubov.hpp"

#include <cmath>
#include <string>

#include "mfrate/errors.hpp"
#include "mfrate/fft.hpp"

namespace mfrate {

namespace {

void check_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) throw ConfigError(std::string(what) + ": grid mismatch");
}

void half_kinetic(CMatrix& g, FftPlan& plan, const CVector& phase) {
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    std::span<cplx> col(g.col(c).data(), static_cast<std::size_t>(g.rows()));
    plan.forward(col);
    g.col(c).array() *= phase.array();
    plan.backward(col);
  }
}

struct Coupling {
  CMatrix a;  // diag(U) + K1 dx
  CMatrix b;  // K2 dx
};

// d/dt (X, Y) with X = G1, Y = conj(G2):
//   i X' = A X + B Y,  i Y' = -conj(A) Y - conj(B) X.
void coupling_rhs(const Coupling& c, const CMatrix& x, const CMatrix& y, CMatrix& dx, CMatrix& dy) {
  dx = -kI * (c.a * x + c.b * y);
  dy = kI * (c.a.conjugate() * y + c.b.conjugate() * x);
}

}  // namespace

CouplingKernels coupling_kernels(const Wavefunction& phi, const PotentialSpec& potential) {
  const RVector v = sample_potential(potential, phi.grid);
  const RMatrix vm = pair_potential_matrix(v);
  const CVector& p = phi.amplitudes;
  CouplingKernels k;
  k.k1 = vm.cast<cplx>().cwiseProduct(p * p.adjoint());
  k.k2 = vm.cast<cplx>().cwiseProduct(p * p.transpose());
  k.k2 = 0.5 * (k.k2 + k.k2.transpose()).eval();
  k.u_eff = mean_field_potential(v, phi);
  return k;
}

BogoliubovPair init_pair(const GridSpec& grid, double time) {
  const int m = grid.points();
  return {grid, CMatrix::Identity(m, m) / grid.spacing(), CMatrix::Zero(m, m), time};
}

BogoliubovPair step_pair(const BogoliubovPair& pair, const Wavefunction& phi_mid, const PotentialSpec& potential,
                         double dt) {
  if (!(dt > 0.0)) throw ConfigError("step_pair: dt must be positive");
  check_grid(pair.grid, phi_mid.grid, "step_pair");
  const GridSpec& grid = pair.grid;
  const int m = grid.points();
  const double h = grid.spacing();

  FftPlan plan({m});
  CVector phase(m);
  const auto& k = grid.frequencies();
  for (int j = 0; j < m; ++j) {
    phase[j] = std::polar(1.0 / m, -0.5 * dt * k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)]);
  }

  CMatrix x = pair.g1;
  CMatrix g2 = pair.g2;
  half_kinetic(x, plan, phase);
  half_kinetic(g2, plan, phase);
  CMatrix y = g2.conjugate();

  if (!potential.is_zero()) {
    const CouplingKernels kern = coupling_kernels(phi_mid, potential);
    Coupling c;
    c.a = kern.k1 * h;
    c.a.diagonal() += kern.u_eff.cast<cplx>();
    c.b = kern.k2 * h;

    CMatrix k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y;
    coupling_rhs(c, x, y, k1x, k1y);
    coupling_rhs(c, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y, k2x, k2y);
    coupling_rhs(c, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y, k3x, k3y);
    coupling_rhs(c, x + dt * k3x, y + dt * k3y, k4x, k4y);
    x += (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    y += (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
  }

  g2 = y.conjugate();
  half_kinetic(x, plan, phase);
  half_kinetic(g2, plan, phase);
  if (!x.allFinite() || !g2.allFinite()) throw NumericalError("step_pair: non-finite kernels");
  return {grid, std::move(x), std::move(g2), pair.time + dt};
}

BogoliubovPair evolve_pair(const HartreeTrajectory& trajectory, double horizon, double dt, int sample_stride,
                           const PairObserver& observer) {
  if (!(dt > 0.0)) throw ConfigError("evolve_pair: dt must be positive");
  if (!(horizon >= 0.0)) throw ConfigError("evolve_pair: horizon must be non-negative");
  const long steps = std::lround(horizon / dt);
  const double t0 = trajectory.start_time();
  BogoliubovPair pair = init_pair(trajectory.grid(), t0);
  const bool sampling = sample_stride > 0 && observer;
  if (sampling) observer(pair);
  for (long s = 1; s <= steps; ++s) {
    const double start = t0 + static_cast<double>(s - 1) * dt;
    pair = step_pair(pair, trajectory.at(start + 0.5 * dt), trajectory.potential(), dt);
    pair.time = t0 + static_cast<double>(s) * dt;
    if (sampling && (s % sample_stride == 0 || s == steps)) observer(pair);
  }
  return pair;
}

double symplectic_defect_hermitian(const BogoliubovPair& pair) {
  const double h = pair.grid.spacing();
  CMatrix d = (pair.g1 * pair.g1.adjoint() - pair.g2 * pair.g2.adjoint()) * h;
  d.diagonal().array() -= 1.0 / h;
  return d.norm() * h;
}

double symplectic_defect_symmetric(const BogoliubovPair& pair) {
  const double h = pair.grid.spacing();
  const CMatrix d = (pair.g1 * pair.g2.transpose() - pair.g2 * pair.g1.transpose()) * h;
  return d.norm() * h;
}

G2NormReport g2_norm_check(const BogoliubovPair& pair, std::optional<double> fock_moment) {
  const double h = pair.grid.spacing();
  G2NormReport r;
  r.value = pair.g2.squaredNorm() * h * h;
  if (fock_moment) r.relative_discrepancy = std::abs(r.value - *fock_moment) / (1.0 + std::abs(*fock_moment));
  return r;
}

double E2Correction::l2_norm() const { return matrix.norm() * grid.spacing(); }

E2Correction e2_correction(const BogoliubovPair& pair, const Wavefunction& phi0, const Wavefunction& phi_t,
                           int particles) {
  if (particles < 2) throw ConfigError("e2_correction: N must be >= 2");
  check_grid(pair.grid, phi0.grid, "e2_correction");
  check_grid(pair.grid, phi_t.grid, "e2_correction");
  const double h = pair.grid.spacing();
  const double n = particles;
  const CMatrix& g2 = pair.g2;

  const CVector a = g2 * phi0.amplitudes.conjugate() * h;  // sum_z G2(x,z) conj(phi0(z)) dx
  const CVector b = a.conjugate();                          // sum_z conj(G2)(y,z) phi0(z) dx
  const CMatrix s = g2 * g2.adjoint() * h;                  // sum_z G2(x,z) conj(G2)(y,z) dx

  CMatrix e = ((n - 1.0) / (n * n)) * s;
  e -= ((n - 2.0) / (n * n)) * (a * b.transpose());
  e -= (1.0 / n) * (a * phi_t.amplitudes.adjoint());
  e -= (1.0 / n) * (phi_t.amplitudes * b.transpose());
  return {pair.grid, std::move(e), particles, pair.time};
}

}  // namespace mfrate
