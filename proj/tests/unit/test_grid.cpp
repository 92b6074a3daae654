#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "mfrate/errors.hpp"
#include "mfrate/fft.hpp"
#include "mfrate/grid.hpp"
#include "support.hpp"

using namespace mfrate;
using std::numbers::pi;

TEST_CASE("grid construction") {
  const GridSpec g = make_grid(8, 2.0 * pi);
  CHECK(g.spacing() == doctest::Approx(pi / 4).epsilon(1e-15));
  std::vector<double> k = g.frequencies();
  std::sort(k.begin(), k.end());
  for (int j = 0; j < 8; ++j) CHECK(k[static_cast<std::size_t>(j)] == doctest::Approx(j - 4).epsilon(1e-14));
  CHECK(g.spacing() * g.points() == g.length());

  CHECK(make_grid(2, 1.0).spacing() == 0.5);
  CHECK_THROWS_AS(make_grid(0, 1.0), ConfigError);
  CHECK_THROWS_AS(make_grid(1, 1.0), ConfigError);
  CHECK_THROWS_AS(make_grid(8, 0.0), ConfigError);
  CHECK_THROWS_AS(make_grid(8, -1.0), ConfigError);
}

TEST_CASE("kinetic propagator on a plane wave") {
  const GridSpec g(32, 10.0);
  const double k = 2.0 * pi * 3.0 / g.length();
  const double dt = 0.37;
  CVector a(g.points());
  for (int j = 0; j < g.points(); ++j) a[j] = std::polar(1.0, k * g.position(j));
  const Wavefunction out = apply_kinetic_propagator({g, a, 0.0}, dt);
  const CVector expected = std::polar(1.0, -k * k * dt) * a;
  CHECK((out.amplitudes - expected).cwiseAbs().maxCoeff() < 1e-12);

  const Wavefunction same = apply_kinetic_propagator({g, a, 0.0}, 0.0);
  CHECK((same.amplitudes - a).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("free Gaussian against the closed-form propagator") {
  const GridSpec g(256, 40.0);
  const double c = 20.0, sigma = 1.0, t = 1.0;
  CVector a(g.points()), exact(g.points());
  for (int j = 0; j < g.points(); ++j) {
    a[j] = testing::free_gaussian(g.position(j), 0.0, c, sigma, g.length());
    exact[j] = testing::free_gaussian(g.position(j), t, c, sigma, g.length());
  }
  const Wavefunction out = apply_kinetic_propagator({g, a, 0.0}, t);
  CHECK((out.amplitudes - exact).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("kinetic propagator is unitary and composes") {
  const GridSpec g(64, 12.0);
  const CVector a = testing::random_vector(g.points(), 11);
  const Wavefunction psi{g, a, 0.0};
  const Wavefunction one = apply_kinetic_propagator(psi, 0.3);
  CHECK(std::abs(one.norm() - psi.norm()) <= 1e-12 * psi.norm());
  const Wavefunction two = apply_kinetic_propagator(one, 0.45);
  const Wavefunction direct = apply_kinetic_propagator(psi, 0.75);
  CHECK((two.amplitudes - direct.amplitudes).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(apply_kinetic_propagator({g, CVector::Zero(5), 0.0}, 0.1), ConfigError);
  CVector bad = a;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(apply_kinetic_propagator({g, bad, 0.0}, 0.1), NumericalError);
}

TEST_CASE("Parseval and FFT roundtrip") {
  const CVector a = testing::random_vector(48, 5);
  CVector hat = a;
  FftPlan plan({48});
  plan.forward(as_span(hat));
  CHECK(std::abs(hat.squaredNorm() / 48.0 - a.squaredNorm()) <= 1e-12 * a.squaredNorm());
  plan.backward(as_span(hat));
  hat /= 48.0;
  CHECK((hat - a).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("periodic convolution") {
  const GridSpec g(24, 6.0);
  const int m = g.points();
  const double h = g.spacing();
  const CVector f = testing::random_vector(m, 1);
  const CVector q = testing::random_vector(m, 2);

  CVector delta = CVector::Zero(m);
  delta[0] = 1.0 / h;
  CHECK((periodic_convolve(f, delta, g) - f).cwiseAbs().maxCoeff() <= 1e-12);

  const cplx c{0.7, -0.2};
  const CVector constant = CVector::Constant(m, c);
  const cplx expected = c * f.sum() * h;
  CHECK((periodic_convolve(f, constant, g).array() - expected).abs().maxCoeff() <= 1e-12);

  CVector direct = CVector::Zero(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) direct[i] += f[j] * q[((i - j) % m + m) % m] * h;
  }
  CHECK((periodic_convolve(f, q, g) - direct).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((periodic_convolve(f, q, g) - periodic_convolve(q, f, g)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(periodic_convolve(f, CVector::Zero(m - 1), g), ConfigError);
}

TEST_CASE("potential sampling") {
  const GridSpec g(16, 16.0);
  CHECK(sample_potential(PotentialSpec::zero(), g).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sample_potential(PotentialSpec::gaussian(1.7, 0.8), g)[0] == doctest::Approx(1.7));

  for (const PotentialSpec& p : {PotentialSpec::gaussian(1.0, 1.3), PotentialSpec::cosine(0.5, {1, 3}),
                                 PotentialSpec::soft_coulomb(2.0, 0.5)}) {
    const RVector v = sample_potential(p, g);
    for (int j = 1; j < g.points(); ++j) CHECK(v[j] == v[g.points() - j]);
    CHECK(v.allFinite());
  }
  CHECK_THROWS_AS(potential_kind_from_string("yukawa"), ConfigError);
  CHECK(potential_kind_from_string("soft_coulomb") == PotentialSpec::Kind::soft_coulomb);
}

TEST_CASE("kinetic matrix agrees with the FFT phase") {
  const GridSpec g(12, 5.0);
  const RMatrix t = kinetic_matrix(g);
  CHECK((t - t.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const double k = 2.0 * pi * 2.0 / g.length();
  CVector a(g.points());
  for (int j = 0; j < g.points(); ++j) a[j] = std::polar(1.0, k * g.position(j));
  CHECK((t.cast<cplx>() * a - k * k * a).cwiseAbs().maxCoeff() <= 1e-11);
}
