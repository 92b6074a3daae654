#include "mfrate/grid.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "mfrate/errors.hpp"
#include "mfrate/fft.hpp"

namespace mfrate {

GridSpec::GridSpec(int points, double length) : points_(points), length_(length) {
  if (points < 2) throw ConfigError("grid: need at least 2 points, got " + std::to_string(points));
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw ConfigError("grid: length must be positive and finite");
  }
  spacing_ = length / points;
  frequencies_.resize(static_cast<std::size_t>(points));
  const double base = 2.0 * std::numbers::pi / length;
  for (int j = 0; j < points; ++j) {
    const int n = j < (points + 1) / 2 ? j : j - points;
    frequencies_[static_cast<std::size_t>(j)] = base * n;
  }
}

GridSpec make_grid(int points, double length) { return GridSpec(points, length); }

double Wavefunction::norm() const { return l2_norm(grid, amplitudes); }

Wavefunction Wavefunction::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("cannot normalize a zero or non-finite wavefunction");
  return {grid, amplitudes / n, time};
}

cplx inner_product(const GridSpec& grid, const CVector& f, const CVector& g) {
  return f.dot(g) * grid.spacing();  // Eigen's dot conjugates the first argument
}

double l2_norm(const GridSpec& grid, const CVector& f) {
  return std::sqrt(f.squaredNorm() * grid.spacing());
}

void require_finite(const CVector& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite amplitudes");
}

PotentialSpec PotentialSpec::gaussian(double amplitude, double width) {
  if (!(width > 0.0)) throw ConfigError("gaussian potential: width must be positive");
  PotentialSpec s;
  s.kind = Kind::gaussian;
  s.amplitude = amplitude;
  s.width = width;
  return s;
}

PotentialSpec PotentialSpec::cosine(double amplitude, std::vector<int> harmonics) {
  if (harmonics.empty()) throw ConfigError("cosine potential: at least one harmonic required");
  PotentialSpec s;
  s.kind = Kind::cosine;
  s.amplitude = amplitude;
  s.harmonics = std::move(harmonics);
  return s;
}

PotentialSpec PotentialSpec::soft_coulomb(double amplitude, double softening) {
  if (!(softening > 0.0)) throw ConfigError("soft-coulomb potential: softening must be positive");
  PotentialSpec s;
  s.kind = Kind::soft_coulomb;
  s.amplitude = amplitude;
  s.softening = softening;
  return s;
}

PotentialSpec::Kind potential_kind_from_string(std::string_view name) {
  if (name == "zero") return PotentialSpec::Kind::zero;
  if (name == "gaussian") return PotentialSpec::Kind::gaussian;
  if (name == "cosine") return PotentialSpec::Kind::cosine;
  if (name == "soft-coulomb" || name == "soft_coulomb") return PotentialSpec::Kind::soft_coulomb;
  throw ConfigError("unknown potential kind '" + std::string(name) + "'");
}

std::string to_string(PotentialSpec::Kind kind) {
  switch (kind) {
    case PotentialSpec::Kind::zero: return "zero";
    case PotentialSpec::Kind::gaussian: return "gaussian";
    case PotentialSpec::Kind::cosine: return "cosine";
    case PotentialSpec::Kind::soft_coulomb: return "soft-coulomb";
  }
  return "unknown";
}

RVector sample_potential(const PotentialSpec& spec, const GridSpec& grid) {
  const int m = grid.points();
  RVector v = RVector::Zero(m);
  for (int j = 0; j < m; ++j) {
    const int image = std::min(j, m - j);
    const double d = image * grid.spacing();
    double value = 0.0;
    switch (spec.kind) {
      case PotentialSpec::Kind::zero:
        break;
      case PotentialSpec::Kind::gaussian:
        value = spec.amplitude * std::exp(-d * d / (2.0 * spec.width * spec.width));
        break;
      case PotentialSpec::Kind::cosine:
        for (int h : spec.harmonics) {
          value += std::cos(2.0 * std::numbers::pi * h * d / grid.length());
        }
        value *= spec.amplitude;
        break;
      case PotentialSpec::Kind::soft_coulomb:
        value = spec.amplitude / std::sqrt(d * d + spec.softening * spec.softening);
        break;
    }
    v[j] = value;
  }
  if (!v.allFinite()) throw NumericalError("sample_potential: non-finite samples");
  return v;
}

RMatrix pair_potential_matrix(const RVector& samples) {
  const auto m = samples.size();
  RMatrix out(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      out(a, b) = samples[((a - b) % m + m) % m];
    }
  }
  return out;
}

CVector periodic_convolve(const CVector& f, const CVector& g, const GridSpec& grid) {
  const int m = grid.points();
  if (f.size() != m || g.size() != m) {
    throw ConfigError("periodic_convolve: vectors must have length " + std::to_string(m));
  }
  FftPlan plan({m});
  CVector fh = f;
  CVector gh = g;
  plan.forward(as_span(fh));
  plan.forward(as_span(gh));
  CVector out = fh.cwiseProduct(gh);
  plan.backward(as_span(out));
  return out * (grid.spacing() / m);
}

RVector mean_field_potential(const RVector& samples, const Wavefunction& phi) {
  const CVector density = phi.amplitudes.cwiseAbs2().cast<cplx>();
  return periodic_convolve(samples.cast<cplx>(), density, phi.grid).real();
}

Wavefunction apply_kinetic_propagator(const Wavefunction& psi, double dt) {
  require_finite(psi.amplitudes, "apply_kinetic_propagator");
  const int m = psi.grid.points();
  if (psi.amplitudes.size() != m) throw ConfigError("apply_kinetic_propagator: length mismatch");
  FftPlan plan({m});
  CVector work = psi.amplitudes;
  plan.forward(as_span(work));
  const auto& k = psi.grid.frequencies();
  for (int j = 0; j < m; ++j) {
    work[j] *= std::polar(1.0 / m, -k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)] * dt);
  }
  plan.backward(as_span(work));
  return {psi.grid, std::move(work), psi.time + dt};
}

RMatrix kinetic_matrix(const GridSpec& grid) {
  const int m = grid.points();
  const auto& k = grid.frequencies();
  // T(a, b) depends only on the minimal image of a - b.
  RVector row(m);
  for (int d = 0; d <= m / 2; ++d) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      s += k[static_cast<std::size_t>(j)] * k[static_cast<std::size_t>(j)] *
           std::cos(2.0 * std::numbers::pi * j * d / m);
    }
    row[d] = s / m;
    row[(m - d) % m] = s / m;
  }
  RMatrix t(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) t(a, b) = row[((a - b) % m + m) % m];
  }
  return t;
}

}  // namespace mfrate
