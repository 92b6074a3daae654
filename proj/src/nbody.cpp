#include "mfrate/nbody.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mfrate/errors.hpp"
#include "mfrate/fft.hpp"

namespace mfrate {

namespace {

using RowMajorCMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

double dx_power(const GridSpec& grid, int k) { return std::pow(grid.spacing(), k); }

void require_finite_amplitudes(const std::vector<cplx>& v, const char* what) {
  for (const cplx& z : v) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw NumericalError(std::string(what) + ": non-finite amplitudes");
    }
  }
}

// Diagonal phase exp(-i tau sum_d k_{n_d}^2) / scale, factored over two
// groups of axes so that only M^(N/2)-sized tables are stored.
class SeparablePhase {
 public:
  SeparablePhase(const GridSpec& grid, int particles, double tau, double scale) {
    const int m = grid.points();
    const int head_axes = particles / 2;
    head_.assign(ipow(static_cast<std::size_t>(m), head_axes), cplx{1.0 / scale, 0.0});
    tail_.assign(ipow(static_cast<std::size_t>(m), particles - head_axes), cplx{1.0, 0.0});
    std::vector<cplx> axis(static_cast<std::size_t>(m));
    const auto& k = grid.frequencies();
    for (int j = 0; j < m; ++j) axis[static_cast<std::size_t>(j)] = std::polar(1.0, -tau * k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)]);
    fill(head_, axis, head_axes, m);
    fill(tail_, axis, particles - head_axes, m);
  }

  void apply(std::vector<cplx>& data) const {
    const std::size_t tail = tail_.size();
    for (std::size_t a = 0; a < head_.size(); ++a) {
      const cplx ha = head_[a];
      cplx* row = data.data() + a * tail;
      for (std::size_t b = 0; b < tail; ++b) row[b] *= ha * tail_[b];
    }
  }

 private:
  static void fill(std::vector<cplx>& table, const std::vector<cplx>& axis, int axes, int m) {
    for (std::size_t idx = 0; idx < table.size(); ++idx) {
      std::size_t rest = idx;
      cplx p = table[idx];
      for (int d = 0; d < axes; ++d) {
        p *= axis[rest % static_cast<std::size_t>(m)];
        rest /= static_cast<std::size_t>(m);
      }
      table[idx] = p;
    }
  }

  std::vector<cplx> head_;
  std::vector<cplx> tail_;
};

// Visits every multi-index of the tensor in storage order with its digits.
template <class F>
void for_each_index(int points, int particles, std::size_t size, F&& f) {
  std::vector<int> digits(static_cast<std::size_t>(particles), 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    f(idx, digits);
    for (int d = particles - 1; d >= 0; --d) {
      if (++digits[static_cast<std::size_t>(d)] < points) break;
      digits[static_cast<std::size_t>(d)] = 0;
    }
  }
}

double pair_energy(const std::vector<int>& digits, const RVector& v, int m) {
  double w = 0.0;
  const auto n = digits.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      w += v[((digits[i] - digits[j]) % m + m) % m];
    }
  }
  return w;
}

// rows = M^k, cols = M^(N-k); gamma = A A^H dx^(N-k), hermitized.
CMatrix contract(const NBodyState& psi, int k) {
  const auto m = static_cast<std::size_t>(psi.grid.points());
  const std::size_t rows = ipow(m, k);
  const std::size_t cols = psi.size() / rows;
  Eigen::Map<const RowMajorCMatrix> a(psi.amplitudes.data(), static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(cols));
  CMatrix g = a * a.adjoint();
  g = 0.5 * (g + g.adjoint()).eval();
  return g * dx_power(psi.grid, psi.particles - k);
}

void check_same(const MarginalDensity& a, const MarginalDensity& b) {
  if (!(a.grid == b.grid)) throw ConfigError("marginal distance: grid mismatch");
  if (a.order != b.order || a.matrix.rows() != b.matrix.rows()) throw ConfigError("marginal distance: order mismatch");
}

}  // namespace

std::size_t tensor_size(int points, int particles) {
  std::size_t r = 1;
  for (int i = 0; i < particles; ++i) {
    if (r > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(points)) {
      return std::numeric_limits<std::size_t>::max();
    }
    r *= static_cast<std::size_t>(points);
  }
  return r;
}

double NBodyState::norm() const {
  double s = 0.0;
  for (const cplx& z : amplitudes) s += std::norm(z);
  return std::sqrt(s * dx_power(grid, particles));
}

NBodyState factorized_state(const Wavefunction& phi, int particles, std::size_t amplitude_budget) {
  if (particles < 1) throw ConfigError("factorized_state: particle count must be >= 1");
  const int m = phi.grid.points();
  const std::size_t size = tensor_size(m, particles);
  if (size > amplitude_budget) {
    throw CapacityError("factorized_state: N = " + std::to_string(particles) + " on M = " + std::to_string(m) +
                        " needs " + std::to_string(size) + " amplitudes, budget is " +
                        std::to_string(amplitude_budget));
  }
  require_finite(phi.amplitudes, "factorized_state");
  if (std::abs(phi.norm() - 1.0) > 1e-10) throw ConfigError("factorized_state: phi must be normalized");

  std::vector<cplx> amps{cplx{1.0, 0.0}};
  for (int p = 0; p < particles; ++p) {
    std::vector<cplx> next(amps.size() * static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < amps.size(); ++i) {
      for (int j = 0; j < m; ++j) next[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] = amps[i] * phi.amplitudes[j];
    }
    amps = std::move(next);
  }
  return {phi.grid, particles, std::move(amps), phi.time};
}

NBodyState evolve_nbody(const NBodyState& psi, const PotentialSpec& potential, double horizon, double dt,
                        int sample_stride, const NBodyObserver& observer) {
  if (!(dt > 0.0)) throw ConfigError("evolve_nbody: dt must be positive");
  if (!(horizon >= 0.0)) throw ConfigError("evolve_nbody: horizon must be non-negative");
  if (psi.size() != tensor_size(psi.grid.points(), psi.particles)) throw ConfigError("evolve_nbody: bad tensor size");
  require_finite_amplitudes(psi.amplitudes, "evolve_nbody");
  if (std::abs(psi.norm() - 1.0) > 1e-8) throw ConfigError("evolve_nbody: input must be normalized");

  const int m = psi.grid.points();
  const int n = psi.particles;
  const long steps = std::lround(horizon / dt);
  const double t0 = psi.time;
  const bool sampling = sample_stride > 0 && observer;

  NBodyState work = psi;
  if (sampling) observer(work);
  if (steps == 0) return work;

  FftPlan plan(std::vector<int>(static_cast<std::size_t>(n), m));
  const double scale = static_cast<double>(work.size());
  const SeparablePhase half(psi.grid, n, 0.5 * dt, scale);
  const SeparablePhase full(psi.grid, n, dt, scale);

  std::vector<cplx> potential_phase;
  const bool interacting = n >= 2 && !potential.is_zero();
  if (interacting) {
    const RVector v = sample_potential(potential, psi.grid);
    potential_phase.resize(work.size());
    for_each_index(m, n, work.size(), [&](std::size_t idx, const std::vector<int>& digits) {
      potential_phase[idx] = std::polar(1.0, -dt * pair_energy(digits, v, m) / n);
    });
  }

  auto kinetic = [&](const SeparablePhase& phase) {
    plan.forward(work.amplitudes);
    phase.apply(work.amplitudes);
    plan.backward(work.amplitudes);
  };

  kinetic(half);
  for (long s = 1; s <= steps; ++s) {
    if (interacting) {
      for (std::size_t i = 0; i < work.size(); ++i) work.amplitudes[i] *= potential_phase[i];
    }
    const bool sample = sampling && (s % sample_stride == 0 || s == steps);
    if (s == steps || sample) {
      kinetic(half);
      work.time = t0 + static_cast<double>(s) * dt;
      require_finite_amplitudes(work.amplitudes, "evolve_nbody");
      if (sample) observer(work);
      if (s < steps) kinetic(half);
    } else {
      kinetic(full);
    }
  }
  return work;
}

std::vector<NBodyState> nbody_trajectory(const NBodyState& psi, const PotentialSpec& potential, double horizon,
                                         double dt, int sample_stride) {
  if (sample_stride < 1) throw ConfigError("nbody_trajectory: sample_stride must be >= 1");
  std::vector<NBodyState> out;
  evolve_nbody(psi, potential, horizon, dt, sample_stride, [&](const NBodyState& s) { out.push_back(s); });
  return out;
}

double nbody_energy(const NBodyState& psi, const PotentialSpec& potential) {
  const int m = psi.grid.points();
  const int n = psi.particles;
  const auto& k = psi.grid.frequencies();
  FftPlan plan(std::vector<int>(static_cast<std::size_t>(n), m));
  std::vector<cplx> hat = psi.amplitudes;
  plan.forward(hat);
  double kinetic = 0.0;
  for_each_index(m, n, hat.size(), [&](std::size_t idx, const std::vector<int>& digits) {
    double kk = 0.0;
    for (int d : digits) kk += k[static_cast<std::size_t>(d)] * k[static_cast<std::size_t>(d)];
    kinetic += kk * std::norm(hat[idx]);
  });
  kinetic /= static_cast<double>(hat.size());

  double interaction = 0.0;
  if (n >= 2 && !potential.is_zero()) {
    const RVector v = sample_potential(potential, psi.grid);
    for_each_index(m, n, psi.size(), [&](std::size_t idx, const std::vector<int>& digits) {
      interaction += std::norm(psi.amplitudes[idx]) * pair_energy(digits, v, m);
    });
    interaction /= n;
  }
  return (kinetic + interaction) * dx_power(psi.grid, n);
}

double symmetry_defect(const NBodyState& psi, int p, int q) {
  const int n = psi.particles;
  if (p < 0 || q < 0 || p >= n || q >= n) throw ConfigError("symmetry_defect: axis out of range");
  if (p == q) return 0.0;
  const auto m = static_cast<std::size_t>(psi.grid.points());
  const std::size_t sp = ipow(m, n - 1 - p);
  const std::size_t sq = ipow(m, n - 1 - q);
  double s = 0.0;
  for (std::size_t idx = 0; idx < psi.size(); ++idx) {
    const auto dp = static_cast<long long>((idx / sp) % m);
    const auto dq = static_cast<long long>((idx / sq) % m);
    const auto swapped = static_cast<std::size_t>(static_cast<long long>(idx) + (dq - dp) * static_cast<long long>(sp) +
                                                  (dp - dq) * static_cast<long long>(sq));
    s += std::norm(psi.amplitudes[swapped] - psi.amplitudes[idx]);
  }
  return std::sqrt(s * dx_power(psi.grid, n));
}

double MarginalDensity::trace() const { return matrix.trace().real() * dx_power(grid, order); }

MarginalDensity reduce_marginal(const NBodyState& psi, int order) {
  if (order != 1 && order != 2) throw ConfigError("reduce_marginal: order must be 1 or 2");
  if (order >= psi.particles) {
    throw ConfigError("reduce_marginal: order " + std::to_string(order) + " needs more than " +
                      std::to_string(psi.particles) + " particles");
  }
  return {psi.grid, contract(psi, order), order};
}

MarginalDensity pure_state_density(const Wavefunction& phi) {
  return {phi.grid, phi.amplitudes * phi.amplitudes.adjoint(), 1};
}

MarginalDensity partial_trace_last(const MarginalDensity& gamma) {
  if (gamma.order < 2) throw ConfigError("partial_trace_last: needs order >= 2");
  const auto m = static_cast<Eigen::Index>(gamma.grid.points());
  const Eigen::Index rows = gamma.matrix.rows() / m;
  CMatrix out = CMatrix::Zero(rows, rows);
  for (Eigen::Index x = 0; x < rows; ++x) {
    for (Eigen::Index y = 0; y < rows; ++y) {
      cplx s{0.0, 0.0};
      for (Eigen::Index z = 0; z < m; ++z) s += gamma.matrix(x * m + z, y * m + z);
      out(x, y) = s * gamma.grid.spacing();
    }
  }
  return {gamma.grid, std::move(out), gamma.order - 1};
}

double trace_distance(const MarginalDensity& gamma, const MarginalDensity& rho) {
  check_same(gamma, rho);
  CMatrix diff = (gamma.matrix - rho.matrix) * dx_power(gamma.grid, gamma.order);
  diff = 0.5 * (diff + diff.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(diff, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("trace_distance: eigensolver failed");
  return eig.eigenvalues().cwiseAbs().sum();
}

double hs_distance(const MarginalDensity& gamma, const MarginalDensity& rho) {
  check_same(gamma, rho);
  return (gamma.matrix - rho.matrix).norm() * dx_power(gamma.grid, gamma.order);
}

double bbgky_residual(std::span<const NBodyState> samples, const PotentialSpec& potential) {
  if (samples.size() < 3) throw ConfigError("bbgky_residual: need at least 3 samples");
  const std::size_t mid = samples.size() / 2;
  const NBodyState& before = samples[mid - 1];
  const NBodyState& centre = samples[mid];
  const NBodyState& after = samples[mid + 1];
  const double h = centre.time - before.time;
  if (!(h > 0.0) || std::abs((after.time - centre.time) - h) > 1e-9 * h) {
    throw ConfigError("bbgky_residual: samples must be uniformly spaced in time");
  }
  for (const NBodyState* s : {&before, &after}) {
    if (s->particles != centre.particles || !(s->grid == centre.grid)) {
      throw ConfigError("bbgky_residual: samples from different systems");
    }
  }
  const GridSpec& grid = centre.grid;
  const int n = centre.particles;
  const auto m = static_cast<Eigen::Index>(grid.points());

  // For N = 1 the one-particle marginal is the full density.
  const CMatrix g_before = contract(before, 1);
  const CMatrix g_after = contract(after, 1);
  const CMatrix g_centre = contract(centre, 1);
  const RMatrix t = kinetic_matrix(grid);

  CMatrix residual = kI * (g_after - g_before) / (2.0 * h) - (t * g_centre - g_centre * t);
  if (n >= 2 && !potential.is_zero()) {
    const RVector v = sample_potential(potential, grid);
    const CMatrix g2 = contract(centre, 2);
    CMatrix collision = CMatrix::Zero(m, m);
    for (Eigen::Index x = 0; x < m; ++x) {
      for (Eigen::Index y = 0; y < m; ++y) {
        cplx s{0.0, 0.0};
        for (Eigen::Index z = 0; z < m; ++z) {
          s += (v[((x - z) % m + m) % m] - v[((y - z) % m + m) % m]) * g2(x * m + z, y * m + z);
        }
        collision(x, y) = s * grid.spacing();
      }
    }
    residual -= (static_cast<double>(n - 1) / n) * collision;
  }
  return residual.norm() * grid.spacing();
}

}  // namespace mfrate
