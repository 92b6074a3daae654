#include "mfrate/hartree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfrate/errors.hpp"
#include "mfrate/fft.hpp"

namespace mfrate {

namespace {

constexpr double kNormTolerance = 1e-10;

class HartreeStepper {
 public:
  HartreeStepper(const GridSpec& grid, const PotentialSpec& potential, double dt)
      : grid_(grid), plan_({grid.points()}), half_kinetic_(grid.points()), potential_hat_(grid.points()) {
    const int m = grid.points();
    const auto& k = grid.frequencies();
    for (int j = 0; j < m; ++j) {
      const double kk = k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)];
      half_kinetic_[j] = std::polar(1.0 / m, -0.5 * kk * dt);
    }
    potential_hat_ = sample_potential(potential, grid).cast<cplx>();
    plan_.forward(as_span(potential_hat_));
    dt_ = dt;
  }

  void step(CVector& phi) {
    half_kinetic(phi);
    // |phi|^2 is invariant under the phase multiplication, so the nonlinear
    // sub-flow is solved exactly.
    CVector rho = phi.cwiseAbs2().cast<cplx>();
    plan_.forward(as_span(rho));
    rho = rho.cwiseProduct(potential_hat_);
    plan_.backward(as_span(rho));
    const double scale = grid_.spacing() / grid_.points();
    for (Eigen::Index j = 0; j < phi.size(); ++j) {
      phi[j] *= std::polar(1.0, -rho[j].real() * scale * dt_);
    }
    half_kinetic(phi);
    if (!phi.allFinite()) throw NumericalError("evolve_hartree: non-finite amplitudes");
  }

 private:
  void half_kinetic(CVector& phi) {
    plan_.forward(as_span(phi));
    phi = phi.cwiseProduct(half_kinetic_);
    plan_.backward(as_span(phi));
  }

  GridSpec grid_;
  FftPlan plan_;
  CVector half_kinetic_;
  CVector potential_hat_;
  double dt_ = 0.0;
};

}  // namespace

HartreeTrajectory::HartreeTrajectory(GridSpec grid, PotentialSpec potential, double dt,
                                     std::vector<HartreeSample> samples)
    : grid_(std::move(grid)), potential_(std::move(potential)), dt_(dt), samples_(std::move(samples)) {
  if (samples_.empty()) throw ConfigError("HartreeTrajectory: no samples");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].t > samples_[i - 1].t)) throw ConfigError("HartreeTrajectory: times must increase");
  }
}

Wavefunction HartreeTrajectory::at(double t) const {
  const double slack = 1e-9 * std::max(1.0, std::abs(dt_));
  if (t < start_time() - slack || t > end_time() + slack) {
    throw ConfigError("HartreeTrajectory::at: t = " + std::to_string(t) + " outside the sampled range");
  }
  auto upper = std::lower_bound(samples_.begin(), samples_.end(), t,
                                [](const HartreeSample& s, double v) { return s.t < v; });
  if (upper == samples_.end()) return samples_.back().phi;
  if (std::abs(upper->t - t) <= slack) return upper->phi;
  if (upper == samples_.begin()) return upper->phi;
  auto lower = std::prev(upper);
  if (std::abs(lower->t - t) <= slack) return lower->phi;
  const double w = (t - lower->t) / (upper->t - lower->t);
  CVector amps = (1.0 - w) * lower->phi.amplitudes + w * upper->phi.amplitudes;
  return {grid_, std::move(amps), t};
}

HartreeTrajectory evolve_hartree(const Wavefunction& phi0, const PotentialSpec& potential, double horizon,
                                 double dt, int sample_stride) {
  require_finite(phi0.amplitudes, "evolve_hartree");
  if (phi0.amplitudes.size() != phi0.grid.points()) throw ConfigError("evolve_hartree: length mismatch");
  if (std::abs(phi0.norm() - 1.0) > kNormTolerance) {
    throw ConfigError("evolve_hartree: initial state must be normalized (norm = " + std::to_string(phi0.norm()) +
                      ")");
  }
  if (!(dt > 0.0)) throw ConfigError("evolve_hartree: dt must be positive");
  if (!(horizon >= 0.0)) throw ConfigError("evolve_hartree: horizon must be non-negative");
  if (sample_stride < 0) throw ConfigError("evolve_hartree: sample_stride must be >= 0");

  const long steps = std::lround(horizon / dt);
  const double t0 = phi0.time;
  std::vector<HartreeSample> samples;
  samples.push_back({t0, phi0});
  if (steps == 0) return HartreeTrajectory(phi0.grid, potential, dt, std::move(samples));

  HartreeStepper stepper(phi0.grid, potential, dt);
  CVector phi = phi0.amplitudes;
  for (long s = 1; s <= steps; ++s) {
    stepper.step(phi);
    if ((sample_stride > 0 && s % sample_stride == 0) || s == steps) {
      const double t = t0 + static_cast<double>(s) * dt;
      samples.push_back({t, Wavefunction{phi0.grid, phi, t}});
    }
  }
  return HartreeTrajectory(phi0.grid, potential, dt, std::move(samples));
}

double hartree_energy(const Wavefunction& phi, const PotentialSpec& potential) {
  const GridSpec& grid = phi.grid;
  const int m = grid.points();
  FftPlan plan({m});
  CVector hat = phi.amplitudes;
  plan.forward(as_span(hat));
  const auto& k = grid.frequencies();
  double kinetic = 0.0;
  for (int j = 0; j < m; ++j) kinetic += k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)] * std::norm(hat[j]);
  kinetic *= grid.spacing() / m;  // Parseval with dx quadrature

  if (potential.is_zero()) return kinetic;
  const RVector u = mean_field_potential(sample_potential(potential, grid), phi);
  const double interaction = 0.5 * grid.spacing() * phi.amplitudes.cwiseAbs2().dot(u);
  return kinetic + interaction;
}

double h1_norm(const Wavefunction& phi) {
  const int m = phi.grid.points();
  FftPlan plan({m});
  CVector hat = phi.amplitudes;
  plan.forward(as_span(hat));
  const auto& k = phi.grid.frequencies();
  double s = 0.0;
  for (int j = 0; j < m; ++j) s += (1.0 + k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)]) * std::norm(hat[j]);
  return std::sqrt(s * phi.grid.spacing() / m);
}

Wavefunction conjugate(const Wavefunction& phi) { return {phi.grid, phi.amplitudes.conjugate(), phi.time}; }

}  // namespace mfrate
