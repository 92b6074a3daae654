#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfrate/bogoliubov.hpp"
#include "mfrate/errors.hpp"
#include "mfrate/fock.hpp"
#include "mfrate/harness.hpp"
#include "mfrate/nbody.hpp"
#include "support.hpp"

using namespace mfrate;

namespace {

const PotentialSpec kGauss = PotentialSpec::gaussian(1.0, 1.0);

Wavefunction default_phi(const GridSpec& g) { return make_initial_state(g, InitialStateSpec{}); }

}  // namespace

TEST_CASE("initial pair") {
  const GridSpec g(12, 6.0);
  const BogoliubovPair p = init_pair(g);
  CHECK(symplectic_defect_hermitian(p) == 0.0);
  CHECK(symplectic_defect_symmetric(p) == 0.0);
  CHECK(p.g2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g2_norm_check(p).value == 0.0);
  // a_x(0) Omega has no one-particle part: its wavefunction is row x of G2.
  CHECK(p.g2.row(3).norm() == 0.0);
}

TEST_CASE("coupling kernels") {
  const GridSpec g(16, 16.0);
  const CouplingKernels k = coupling_kernels(default_phi(g), kGauss);
  CHECK((k.k2 - k.k2.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((k.k1 - k.k1.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(k.u_eff.allFinite());
}

TEST_CASE("free kernels") {
  const GridSpec g(16, 8.0);
  const HartreeTrajectory traj = evolve_hartree(default_phi(g), PotentialSpec::zero(), 0.3, 1e-2, 1);
  const BogoliubovPair p = evolve_pair(traj, 0.3, 1e-2);
  CHECK(p.g2.cwiseAbs().maxCoeff() == 0.0);
  for (int y = 0; y < g.points(); ++y) {
    CVector delta = CVector::Zero(g.points());
    delta[y] = 1.0 / g.spacing();
    const Wavefunction col = apply_kinetic_propagator({g, delta, 0.0}, 0.3);
    CHECK((p.g1.col(y) - col.amplitudes).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK(g2_norm_check(p).value == 0.0);
}

TEST_CASE("symplectic defects stay below c dt^2") {
  const GridSpec g(16, 16.0);
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    const HartreeTrajectory traj = evolve_hartree(default_phi(g), kGauss, 1.0, dt, 1);
    const BogoliubovPair p = evolve_pair(traj, 1.0, dt);
    CHECK(symplectic_defect_hermitian(p) <= dt * dt);
    CHECK(symplectic_defect_symmetric(p) <= dt * dt);
  }
}

TEST_CASE("kernels against the Fock engine on a 4-site lattice") {
  const GridSpec lattice(4, 4.0);
  const double dt = 1e-3, t = 0.5;
  const HartreeTrajectory traj = evolve_hartree(default_phi(lattice), kGauss, t, dt, 1);
  const BogoliubovPair pair = evolve_pair(traj, t, dt);

  const FockSpacePtr space = build_basis(lattice, 10);
  const GeneratorSet gens(space, kGauss, 1.0);
  const Propagation u2 = propagate(vacuum(space), gens, Generator::quadratic, traj, t, dt);
  // The residual mismatch is truncation leakage, which falls as the cutoff grows.
  const FockSpacePtr wider = build_basis(lattice, 12);
  const Propagation u2_wide = propagate(vacuum(wider), GeneratorSet(wider, kGauss, 1.0), Generator::quadratic, traj, t, dt);
  CHECK(u2.max_leakage <= 1e-5);
  CHECK(u2_wide.max_leakage < 0.5 * u2.max_leakage);

  const double fock_n = number_functional(u2.state, 1);
  const G2NormReport report = g2_norm_check(pair, fock_n);
  REQUIRE(report.relative_discrepancy.has_value());
  CHECK(*report.relative_discrepancy <= 1e-4);

  for (int x = 0; x < 4; ++x) {
    const SparseOp a_x = mode_operator(*space, x, LadderKind::annihilate) * cplx{1.0 / std::sqrt(lattice.spacing()), 0.0};
    const Propagation back = propagate_adjoint(mfrate::apply(a_x, u2.state), gens, Generator::quadratic, traj, t, dt);
    const CVector g2 = one_particle_function(back.state);
    CHECK((pair.g2.row(x).transpose() - g2).cwiseAbs().maxCoeff() <= 1e-4);
  }
}

TEST_CASE("E2 correction") {
  const GridSpec g(16, 16.0);
  const Wavefunction phi0 = default_phi(g);
  const HartreeTrajectory traj = evolve_hartree(phi0, kGauss, 0.5, 1e-3, 1);

  const E2Correction zero = e2_correction(init_pair(g), phi0, phi0, 10);
  CHECK(zero.matrix.cwiseAbs().maxCoeff() == 0.0);

  const BogoliubovPair pair = evolve_pair(traj, 0.5, 1e-3);
  const Wavefunction& phit = traj.final_state();
  SUBCASE("explicit rational dependence on N") {
    const double h = g.spacing();
    const CVector a = pair.g2 * phi0.amplitudes.conjugate() * h;
    const CMatrix s = pair.g2 * pair.g2.adjoint() * h;
    const CMatrix limit = s - a * a.adjoint() - a * phit.amplitudes.adjoint() - phit.amplitudes * a.adjoint();
    const double mag = limit.cwiseAbs().maxCoeff();
    const CMatrix n6 = 1e6 * e2_correction(pair, phi0, phit, 1000000).matrix;
    CHECK((n6 - limit).cwiseAbs().maxCoeff() <= 1e-5 * mag);
    const CMatrix n3 = 1e3 * e2_correction(pair, phi0, phit, 1000).matrix;
    const CMatrix first_order = (2.0 * a * a.adjoint() - s) / 1e3;
    CHECK((n3 - limit - first_order).cwiseAbs().maxCoeff() <= 1e-12 * mag);
  }
  SUBCASE("same order as the exact many-body error") {
    const int n = 4;
    const NBodyState psi = evolve_nbody(factorized_state(phi0, n), kGauss, 0.5, 1e-3);
    const MarginalDensity gamma = reduce_marginal(psi, 1);
    const double exact = (gamma.matrix - pure_state_density(phit).matrix).norm() * g.spacing();
    const double ratio = e2_correction(pair, phi0, phit, n).l2_norm() / exact;
    CHECK(ratio >= 0.2);
    CHECK(ratio <= 5.0);
  }
  SUBCASE("N times ||E2|| is bounded uniformly") {
    std::vector<double> v;
    for (int n : {4, 8, 16, 32, 64}) v.push_back(n * e2_correction(pair, phi0, phit, n).l2_norm());
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    CHECK(*hi / *lo <= 1.5);
  }
  CHECK_THROWS_AS(e2_correction(pair, phi0, phit, 1), ConfigError);
  CHECK_THROWS_AS(e2_correction(pair, default_phi(GridSpec(8, 16.0)), phit, 4), ConfigError);
}
