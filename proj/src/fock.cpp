#include "mfrate/fock.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "mfrate/combinatorics.hpp"
#include "mfrate/errors.hpp"
#include "mfrate/rng.hpp"

namespace mfrate {

namespace {

constexpr std::size_t kSaturated = std::numeric_limits<std::size_t>::max();
constexpr int kMaxTaylorTerms = 60;

std::size_t saturating_add(std::size_t a, std::size_t b) { return a > kSaturated - b ? kSaturated : a + b; }

void enumerate_grade(int remaining, int site, int modes, std::vector<int>& occ, std::vector<int>& out) {
  if (site == modes - 1) {
    occ[static_cast<std::size_t>(site)] = remaining;
    out.insert(out.end(), occ.begin(), occ.end());
    return;
  }
  for (int v = remaining; v >= 0; --v) {
    occ[static_cast<std::size_t>(site)] = v;
    enumerate_grade(remaining - v, site + 1, modes, occ, out);
  }
}

double one_norm(const SparseOp& op) {
  Eigen::VectorXd col = Eigen::VectorXd::Zero(op.cols());
  for (Eigen::Index r = 0; r < op.outerSize(); ++r) {
    for (SparseOp::InnerIterator it(op, r); it; ++it) col[it.col()] += std::abs(it.value());
  }
  return op.cols() == 0 ? 0.0 : col.maxCoeff();
}

void require_same_space(const FockVector& a, const LatticeFockSpace& space, const char* what) {
  if (a.space.get() != &space && (a.space->modes() != space.modes() || a.space->cutoff() != space.cutoff())) {
    throw ConfigError(std::string(what) + ": vector belongs to a different Fock space");
  }
}

double weighted_norm(const FockVector& psi, const std::function<double(int)>& weight) {
  double s = 0.0;
  for (std::size_t i = 0; i < psi.space->dimension(); ++i) {
    const double w = weight(psi.space->sector_of(i));
    s += w * w * std::norm(psi.coefficients[static_cast<Eigen::Index>(i)]);
  }
  return std::sqrt(s);
}

}  // namespace

LatticeFockSpace::LatticeFockSpace(int modes, double spacing, int cutoff, std::size_t dimension_budget)
    : modes_(modes), spacing_(spacing), cutoff_(cutoff) {
  if (modes < 1) throw ConfigError("Fock space: need at least one mode");
  if (!(spacing > 0.0)) throw ConfigError("Fock space: lattice spacing must be positive");
  if (cutoff < 0) throw ConfigError("Fock space: cutoff must be >= 0");

  const auto cols = static_cast<std::size_t>(modes) + 1;
  table_.assign((static_cast<std::size_t>(cutoff) + 1) * cols, 0);
  table_[0] = 1;
  for (int s = 0; s <= cutoff; ++s) {
    for (int p = 1; p <= modes; ++p) {
      // C(s, p) = C(s, p - 1) + C(s - 1, p)
      std::size_t c = table_[static_cast<std::size_t>(s) * cols + static_cast<std::size_t>(p - 1)];
      if (s > 0) c = saturating_add(c, table_[static_cast<std::size_t>(s - 1) * cols + static_cast<std::size_t>(p)]);
      table_[static_cast<std::size_t>(s) * cols + static_cast<std::size_t>(p)] = c;
    }
  }
  offsets_.assign(static_cast<std::size_t>(cutoff) + 2, 0);
  for (int n = 0; n <= cutoff; ++n) {
    offsets_[static_cast<std::size_t>(n) + 1] = saturating_add(offsets_[static_cast<std::size_t>(n)], compositions(n, modes));
  }
  dimension_ = offsets_.back();
  if (dimension_ > dimension_budget) {
    throw CapacityError("Fock space: m = " + std::to_string(modes) + ", cutoff = " + std::to_string(cutoff) +
                        " exceeds the dimension budget " + std::to_string(dimension_budget));
  }

  occupations_.reserve(dimension_ * static_cast<std::size_t>(modes));
  sector_.reserve(dimension_);
  std::vector<int> occ(static_cast<std::size_t>(modes), 0);
  for (int n = 0; n <= cutoff; ++n) {
    enumerate_grade(n, 0, modes, occ, occupations_);
    sector_.resize(offsets_[static_cast<std::size_t>(n) + 1], n);
  }
}

GridSpec LatticeFockSpace::lattice() const { return GridSpec(modes_, modes_ * spacing_); }

std::size_t LatticeFockSpace::compositions(int total, int parts) const {
  return table_[static_cast<std::size_t>(total) * (static_cast<std::size_t>(modes_) + 1) + static_cast<std::size_t>(parts)];
}

std::span<const int> LatticeFockSpace::occupation(std::size_t index) const {
  if (index >= dimension_) throw ConfigError("Fock space: index out of range");
  return {occupations_.data() + index * static_cast<std::size_t>(modes_), static_cast<std::size_t>(modes_)};
}

std::size_t LatticeFockSpace::index_of(std::span<const int> occupation) const {
  if (occupation.size() != static_cast<std::size_t>(modes_)) throw ConfigError("Fock space: wrong occupation length");
  int total = 0;
  for (int n : occupation) {
    if (n < 0) throw ConfigError("Fock space: negative occupation");
    total += n;
  }
  if (total > cutoff_) throw ConfigError("Fock space: occupation above the cutoff");
  std::size_t rank = 0;
  int remaining = total;
  for (int i = 0; i + 1 < modes_; ++i) {
    const int after = modes_ - i - 1;
    for (int v = remaining; v > occupation[static_cast<std::size_t>(i)]; --v) rank += compositions(remaining - v, after);
    remaining -= occupation[static_cast<std::size_t>(i)];
  }
  return offsets_[static_cast<std::size_t>(total)] + rank;
}

FockSpacePtr build_basis(int modes, int cutoff, std::size_t dimension_budget) {
  return std::make_shared<const LatticeFockSpace>(modes, 1.0, cutoff, dimension_budget);
}

FockSpacePtr build_basis(const GridSpec& lattice, int cutoff, std::size_t dimension_budget) {
  return std::make_shared<const LatticeFockSpace>(lattice.points(), lattice.spacing(), cutoff, dimension_budget);
}

double FockVector::sector_mass(int n) const {
  if (n < 0 || n > space->cutoff()) return 0.0;
  const auto b = static_cast<Eigen::Index>(space->sector_begin(n));
  const auto e = static_cast<Eigen::Index>(space->sector_end(n));
  return coefficients.segment(b, e - b).squaredNorm();
}

FockVector vacuum(const FockSpacePtr& space) {
  CVector c = CVector::Zero(static_cast<Eigen::Index>(space->dimension()));
  c[0] = 1.0;
  return {space, std::move(c)};
}

FockVector apply(const SparseOp& op, const FockVector& psi) {
  if (op.cols() != psi.coefficients.size()) throw ConfigError("apply: dimension mismatch");
  return {psi.space, op * psi.coefficients};
}

double top_sectors_mass(const FockVector& psi, int count) {
  double s = 0.0;
  for (int k = 0; k < count; ++k) s += psi.sector_mass(psi.space->cutoff() - k);
  return s;
}

double odd_sector_mass(const FockVector& psi) {
  double s = 0.0;
  for (int n = 1; n <= psi.space->cutoff(); n += 2) s += psi.sector_mass(n);
  return s;
}

SparseOp mode_operator(const LatticeFockSpace& space, int site, LadderKind kind) {
  if (site < 0 || site >= space.modes()) throw ConfigError("mode_operator: site out of range");
  std::vector<Eigen::Triplet<cplx>> triplets;
  const std::size_t raise_end = space.sector_begin(space.cutoff());
  triplets.reserve(raise_end);
  std::vector<int> occ(static_cast<std::size_t>(space.modes()));
  for (std::size_t idx = 0; idx < raise_end; ++idx) {
    const auto o = space.occupation(idx);
    std::copy(o.begin(), o.end(), occ.begin());
    const int n = occ[static_cast<std::size_t>(site)];
    occ[static_cast<std::size_t>(site)] = n + 1;
    const std::size_t target = space.index_of(occ);
    const double amp = std::sqrt(static_cast<double>(n + 1));
    if (kind == LadderKind::create) {
      triplets.emplace_back(static_cast<int>(target), static_cast<int>(idx), amp);
    } else {
      triplets.emplace_back(static_cast<int>(idx), static_cast<int>(target), amp);
    }
  }
  const auto d = static_cast<Eigen::Index>(space.dimension());
  SparseOp op(d, d);
  op.setFromTriplets(triplets.begin(), triplets.end());
  return op;
}

SparseOp ladder(const CVector& f, LadderKind kind, const LatticeFockSpace& space) {
  if (f.size() != space.modes()) throw ConfigError("ladder: mode function has the wrong length");
  const double root = std::sqrt(space.spacing());
  const auto d = static_cast<Eigen::Index>(space.dimension());
  SparseOp out(d, d);
  for (int i = 0; i < space.modes(); ++i) {
    const cplx c = kind == LadderKind::create ? f[i] : std::conj(f[i]);
    if (c == cplx{0.0, 0.0}) continue;
    out += (root * c) * mode_operator(space, i, kind);
  }
  return out;
}

CVector one_particle_function(const FockVector& psi) {
  const LatticeFockSpace& space = *psi.space;
  CVector f = CVector::Zero(space.modes());
  if (space.cutoff() < 1) return f;
  std::vector<int> occ(static_cast<std::size_t>(space.modes()), 0);
  for (int i = 0; i < space.modes(); ++i) {
    occ[static_cast<std::size_t>(i)] = 1;
    f[i] = psi.coefficients[static_cast<Eigen::Index>(space.index_of(occ))] / std::sqrt(space.spacing());
    occ[static_cast<std::size_t>(i)] = 0;
  }
  return f;
}

double number_moment(const FockVector& psi, double shift, double power) {
  double s = 0.0;
  for (int n = 0; n <= psi.space->cutoff(); ++n) {
    const double mass = psi.sector_mass(n);
    if (mass == 0.0) continue;
    s += std::pow(n + shift, power) * mass;
  }
  return s;
}

double number_functional(const FockVector& psi, int j) {
  if (j < 0) throw ConfigError("number_functional: j must be >= 0");
  return number_moment(psi, 0.0, j);
}

namespace {

template <class Dense>
Dense taylor_exp(const SparseOp& op, cplx factor, const Dense& v) {
  const double scale = std::abs(factor) * one_norm(op);
  if (!std::isfinite(scale)) throw NumericalError("exp_action: non-finite operator norm");
  const long substeps = std::max(1L, static_cast<long>(std::ceil(scale)));
  const cplx tau = factor / static_cast<double>(substeps);
  Dense out = v;
  Dense term;
  for (long s = 0; s < substeps; ++s) {
    term = out;
    Dense sum = out;
    bool converged = false;
    for (int k = 1; k <= kMaxTaylorTerms; ++k) {
      term = (tau / static_cast<double>(k)) * (op * term);
      sum += term;
      if (term.norm() <= 1e-17 * std::max(sum.norm(), 1e-300)) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericalError("exp_action: Taylor series did not converge (|factor| * ||op||_1 = " +
                           std::to_string(scale) + ", substeps = " + std::to_string(substeps) + ")");
    }
    out = std::move(sum);
  }
  if (!out.allFinite()) throw NumericalError("exp_action: non-finite result");
  return out;
}

}  // namespace

CVector exp_action(const SparseOp& op, cplx factor, const CVector& v) { return taylor_exp(op, factor, v); }

CMatrix exp_action(const SparseOp& op, cplx factor, const CMatrix& block) { return taylor_exp(op, factor, block); }

WeylResult weyl_apply(const CVector& f, const FockVector& psi, double leakage_threshold) {
  // W(f) = e^{-||f||^2/2} exp(a^*(f)) exp(-a(f)). Both series terminate on the
  // truncated space and neither feeds truncated sectors back below the cutoff,
  // so every retained coefficient is exact.
  const LatticeFockSpace& space = *psi.space;
  require_finite(f, "weyl_apply: f");
  const double f2 = f.squaredNorm() * space.spacing();
  auto series = [&](const SparseOp& op, CVector v) {
    CVector sum = v;
    for (int k = 1; k <= space.cutoff(); ++k) {
      v = (op * v) / static_cast<double>(k);
      if (v.squaredNorm() == 0.0) break;
      sum += v;
    }
    return sum;
  };
  const SparseOp lower = -ladder(f, LadderKind::annihilate, space);
  const SparseOp raise = ladder(f, LadderKind::create, space);
  WeylResult r;
  r.state = {psi.space, std::exp(-0.5 * f2) * series(raise, series(lower, psi.coefficients))};
  const double total = r.state.coefficients.squaredNorm();
  r.leakage = total > 0.0 ? top_sectors_mass(r.state) / total : 0.0;
  r.reliable = r.leakage <= leakage_threshold;
  return r;
}

FockVector coherent_state(const CVector& f, const FockSpacePtr& space) {
  const SparseOp create = ladder(f, LadderKind::create, *space);
  const double f2 = f.squaredNorm() * space->spacing();
  FockVector term = vacuum(space);
  CVector sum = term.coefficients;
  for (int n = 1; n <= space->cutoff(); ++n) {
    term.coefficients = (create * term.coefficients) / static_cast<double>(n);
    sum += term.coefficients;
  }
  return {space, std::exp(-0.5 * f2) * sum};
}

FockVector product_state(const CVector& phi, int n, const FockSpacePtr& space) {
  if (n < 0 || n > space->cutoff()) throw ConfigError("product_state: n must lie in [0, cutoff]");
  const SparseOp create = ladder(phi, LadderKind::create, *space);
  FockVector v = vacuum(space);
  for (int k = 1; k <= n; ++k) v.coefficients = (create * v.coefficients) / std::sqrt(static_cast<double>(k));
  return v;
}

FockVector theta_reconstruct(const CVector& phi, int n, int quadrature, const FockSpacePtr& space) {
  if (n < 1) throw ConfigError("theta_reconstruct: N must be >= 1");
  if (space->cutoff() < n) throw ConfigError("theta_reconstruct: cutoff must be >= N");
  if (quadrature < 2 * space->cutoff() + 1) {
    throw ConfigError("theta_reconstruct: need Q >= 2 * cutoff + 1 = " + std::to_string(2 * space->cutoff() + 1) +
                      ", got " + std::to_string(quadrature));
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  CVector sum = CVector::Zero(static_cast<Eigen::Index>(space->dimension()));
  for (int q = 0; q < quadrature; ++q) {
    const double theta = 2.0 * std::numbers::pi * q / quadrature;
    const CVector f = std::polar(root_n, -theta) * phi;
    sum += std::polar(1.0, theta * n) * coherent_state(f, space).coefficients;
  }
  return {space, (std::exp(log_dN(n)) / quadrature) * sum};
}

GeneratorSet::GeneratorSet(FockSpacePtr space, PotentialSpec potential, double coupling)
    : space_(std::move(space)), potential_(std::move(potential)), coupling_(coupling) {
  if (!(coupling_ > 0.0)) throw ConfigError("GeneratorSet: coupling N must be positive");
  const LatticeFockSpace& sp = *space_;
  const GridSpec lattice = sp.lattice();
  const int m = sp.modes();
  v_ = sample_potential(potential_, lattice);
  t_ = kinetic_matrix(lattice);

  std::vector<SparseOp> create, annihilate;
  for (int i = 0; i < m; ++i) {
    create.push_back(mode_operator(sp, i, LadderKind::create));
    annihilate.push_back(mode_operator(sp, i, LadderKind::annihilate));
  }
  std::vector<SparseOp> hop_ops, pair_ops, cubic_ops;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      hop_ops.push_back(create[i] * annihilate[j]);
      pair_ops.push_back(i <= j ? SparseOp(create[i] * create[j]) : SparseOp(create[i].rows(), create[i].cols()));
      cubic_ops.push_back(create[i] * create[j] * annihilate[i]);
    }
  }

  const auto d = static_cast<Eigen::Index>(sp.dimension());
  SparseOp identity(d, d);
  identity.setIdentity();
  // All skeleton entries are positive, so the sum has the union pattern.
  pattern_ = identity;
  for (const auto* family : {&hop_ops, &pair_ops, &cubic_ops}) {
    for (const SparseOp& op : *family) {
      pattern_ += op;
      pattern_ += SparseOp(op.transpose());
    }
  }
  pattern_.makeCompressed();

  for (const SparseOp& op : hop_ops) hop_.push_back(make_skeleton(op));
  for (const SparseOp& op : pair_ops) pair_.push_back(make_skeleton(op));
  for (const SparseOp& op : cubic_ops) cubic_.push_back(make_skeleton(op));

  quartic_diagonal_ = RVector::Zero(d);
  for (std::size_t idx = 0; idx < sp.dimension(); ++idx) {
    const auto occ = sp.occupation(idx);
    double e = 0.0;
    for (int x = 0; x < m; ++x) {
      for (int y = 0; y < m; ++y) {
        const double nx = occ[static_cast<std::size_t>(x)];
        const double ny = occ[static_cast<std::size_t>(y)];
        e += v_[((x - y) % m + m) % m] * (nx * ny - (x == y ? nx : 0.0));
      }
    }
    quartic_diagonal_[static_cast<Eigen::Index>(idx)] = e / (2.0 * coupling_);
  }

  kinetic_values_.assign(static_cast<std::size_t>(pattern_.nonZeros()), cplx{0.0, 0.0});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) add(kinetic_values_, hop_[static_cast<std::size_t>(i * m + j)], t_(i, j), false);
  }
  diagonal_positions_ = make_skeleton(identity).direct;
}

GeneratorSet::Skeleton GeneratorSet::make_skeleton(const SparseOp& op) const {
  auto position = [&](Eigen::Index r, Eigen::Index c) -> std::int64_t {
    const auto* inner = pattern_.innerIndexPtr();
    const auto begin = pattern_.outerIndexPtr()[r];
    const auto end = pattern_.outerIndexPtr()[r + 1];
    const auto* it = std::lower_bound(inner + begin, inner + end, static_cast<int>(c));
    if (it == inner + end || *it != c) throw NumericalError("GeneratorSet: entry missing from pattern");
    return it - inner;
  };
  Skeleton s;
  for (Eigen::Index r = 0; r < op.outerSize(); ++r) {
    for (SparseOp::InnerIterator it(op, r); it; ++it) {
      s.direct.push_back({position(it.row(), it.col()), it.value().real()});
      s.adjoint.push_back({position(it.col(), it.row()), it.value().real()});
    }
  }
  return s;
}

void GeneratorSet::add(std::vector<cplx>& values, const Skeleton& s, cplx coefficient, bool hermitian_pair) const {
  if (coefficient == cplx{0.0, 0.0}) return;
  for (const Entry& e : s.direct) values[static_cast<std::size_t>(e.position)] += coefficient * e.value;
  if (hermitian_pair) {
    const cplx c = std::conj(coefficient);
    for (const Entry& e : s.adjoint) values[static_cast<std::size_t>(e.position)] += c * e.value;
  }
}

SparseOp GeneratorSet::assemble(const Wavefunction& phi, unsigned part_mask) const {
  const LatticeFockSpace& sp = *space_;
  const int m = sp.modes();
  if (phi.amplitudes.size() != m || std::abs(phi.grid.spacing() - sp.spacing()) > 1e-12 * sp.spacing()) {
    throw ConfigError("GeneratorSet::assemble: phi does not live on the Fock lattice");
  }
  const double h = sp.spacing();
  const CVector& p = phi.amplitudes;
  std::vector<cplx> values = (part_mask & parts::kinetic)
                                 ? kinetic_values_
                                 : std::vector<cplx>(static_cast<std::size_t>(pattern_.nonZeros()), cplx{0.0, 0.0});
  auto idx = [m](int i, int j) { return static_cast<std::size_t>(i * m + j); };
  auto v = [&](int i, int j) { return v_[((i - j) % m + m) % m]; };

  if ((part_mask & parts::quadratic) && !potential_.is_zero()) {
    const RVector u = mean_field_potential(v_, phi);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const cplx hop = h * v(i, j) * p[i] * std::conj(p[j]) + (i == j ? u[i] : 0.0);
        add(values, hop_[idx(i, j)], hop, false);
        if (i <= j) add(values, pair_[idx(i, j)], (i == j ? 0.5 : 1.0) * h * v(i, j) * p[i] * p[j], true);
      }
    }
  }
  if ((part_mask & parts::cubic) && !potential_.is_zero()) {
    const double pre = std::sqrt(h / coupling_);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) add(values, cubic_[idx(i, j)], pre * v(i, j) * p[j], true);
    }
  }
  if ((part_mask & parts::quartic) && !potential_.is_zero()) {
    for (std::size_t r = 0; r < diagonal_positions_.size(); ++r) {
      values[static_cast<std::size_t>(diagonal_positions_[r].position)] += quartic_diagonal_[static_cast<Eigen::Index>(r)];
    }
  }

  SparseOp out = pattern_;
  std::copy(values.begin(), values.end(), out.valuePtr());
  return out;
}

SparseOp GeneratorSet::assemble(const Wavefunction& phi, Generator which) const {
  const unsigned mask = which == Generator::quadratic
                            ? parts::kinetic | parts::quadratic
                            : parts::kinetic | parts::quadratic | parts::cubic | parts::quartic;
  return assemble(phi, mask);
}

namespace {

double relative_leakage(const FockVector& psi) {
  const double total = psi.coefficients.squaredNorm();
  return total > 0.0 ? top_sectors_mass(psi) / total : 0.0;
}

void check_trajectory(const GeneratorSet& g, const HartreeTrajectory& trajectory, double horizon, double dt) {
  if (!(dt > 0.0)) throw ConfigError("Fock propagation: dt must be positive");
  if (!(horizon >= 0.0)) throw ConfigError("Fock propagation: horizon must be non-negative");
  if (trajectory.grid().points() != g.space()->modes()) {
    throw ConfigError("Fock propagation: trajectory lattice differs from the Fock lattice");
  }
  if (trajectory.end_time() < trajectory.start_time() + horizon - 1e-9 * std::max(1.0, horizon)) {
    throw ConfigError("Fock propagation: trajectory does not cover the horizon");
  }
}

}  // namespace

Propagation propagate(const FockVector& psi0, const GeneratorSet& generators, Generator which,
                      const HartreeTrajectory& trajectory, double horizon, double dt, int sample_stride,
                      const FockObserver& observer) {
  require_same_space(psi0, *generators.space(), "propagate");
  check_trajectory(generators, trajectory, horizon, dt);
  const long steps = std::lround(horizon / dt);
  const double t0 = trajectory.start_time();
  Propagation out{psi0, relative_leakage(psi0)};
  const bool sampling = sample_stride > 0 && observer;
  if (sampling) observer(out.state, t0);
  for (long s = 1; s <= steps; ++s) {
    const double mid = t0 + (static_cast<double>(s) - 0.5) * dt;
    const SparseOp h = generators.assemble(trajectory.at(mid), which);
    out.state.coefficients = exp_action(h, cplx{0.0, -dt}, out.state.coefficients);
    out.max_leakage = std::max(out.max_leakage, relative_leakage(out.state));
    if (sampling && (s % sample_stride == 0 || s == steps)) observer(out.state, t0 + static_cast<double>(s) * dt);
  }
  return out;
}

Propagation propagate_adjoint(const FockVector& psi, const GeneratorSet& generators, Generator which,
                              const HartreeTrajectory& trajectory, double horizon, double dt) {
  require_same_space(psi, *generators.space(), "propagate_adjoint");
  check_trajectory(generators, trajectory, horizon, dt);
  const long steps = std::lround(horizon / dt);
  const double t0 = trajectory.start_time();
  Propagation out{psi, relative_leakage(psi)};
  for (long s = steps; s >= 1; --s) {
    const double mid = t0 + (static_cast<double>(s) - 0.5) * dt;
    const SparseOp h = generators.assemble(trajectory.at(mid), which);
    out.state.coefficients = exp_action(h, cplx{0.0, dt}, out.state.coefficients);
    out.max_leakage = std::max(out.max_leakage, relative_leakage(out.state));
  }
  return out;
}

std::vector<Propagation> propagate_adjoint(const std::vector<FockVector>& psis, const GeneratorSet& generators,
                                          Generator which, const HartreeTrajectory& trajectory, double horizon,
                                          double dt) {
  check_trajectory(generators, trajectory, horizon, dt);
  const FockSpacePtr& space = generators.space();
  const auto d = static_cast<Eigen::Index>(space->dimension());
  CMatrix block(d, static_cast<Eigen::Index>(psis.size()));
  std::vector<Propagation> out;
  for (std::size_t c = 0; c < psis.size(); ++c) {
    require_same_space(psis[c], *space, "propagate_adjoint");
    block.col(static_cast<Eigen::Index>(c)) = psis[c].coefficients;
    out.push_back({psis[c], relative_leakage(psis[c])});
  }
  const long steps = std::lround(horizon / dt);
  const double t0 = trajectory.start_time();
  for (long s = steps; s >= 1; --s) {
    const double mid = t0 + (static_cast<double>(s) - 0.5) * dt;
    block = exp_action(generators.assemble(trajectory.at(mid), which), cplx{0.0, dt}, block);
    for (std::size_t c = 0; c < psis.size(); ++c) {
      out[c].state.coefficients = block.col(static_cast<Eigen::Index>(c));
      out[c].max_leakage = std::max(out[c].max_leakage, relative_leakage(out[c].state));
    }
  }
  return out;
}

ResidualField residual_r(double horizon, const GeneratorSet& generators, const HartreeTrajectory& trajectory,
                         double dt) {
  const FockSpacePtr& space = generators.space();
  const FockVector omega = vacuum(space);
  const Propagation full = propagate(omega, generators, Generator::full, trajectory, horizon, dt);
  const Propagation quad = propagate(omega, generators, Generator::quadratic, trajectory, horizon, dt);

  ResidualField r;
  r.time = trajectory.start_time() + horizon;
  r.max_leakage = std::max(full.max_leakage, quad.max_leakage);
  const double h = space->spacing();
  std::vector<FockVector> full_in, quad_in;
  for (int y = 0; y < space->modes(); ++y) {
    const SparseOp a_y = mode_operator(*space, y, LadderKind::annihilate) * cplx{1.0 / std::sqrt(h), 0.0};
    full_in.push_back(mfrate::apply(a_y, full.state));
    quad_in.push_back(mfrate::apply(a_y, quad.state));
  }
  const std::vector<Propagation> back_full =
      propagate_adjoint(full_in, generators, Generator::full, trajectory, horizon, dt);
  const std::vector<Propagation> back_quad =
      propagate_adjoint(quad_in, generators, Generator::quadratic, trajectory, horizon, dt);
  for (int y = 0; y < space->modes(); ++y) {
    const auto k = static_cast<std::size_t>(y);
    r.max_leakage = std::max({r.max_leakage, back_full[k].max_leakage, back_quad[k].max_leakage});
    FockVector diff{space, back_full[k].state.coefficients - back_quad[k].state.coefficients};
    for (int j = 0; j < 3; ++j) r.aggregates[static_cast<std::size_t>(j)] += h * number_moment(diff, 1.0, j);
    r.per_site.push_back(std::move(diff));
  }
  return r;
}

ProbeReport generator_bound_probe(const FockSpacePtr& space, const PotentialSpec& potential, const Wavefunction& phi,
                                  const std::vector<double>& couplings, int j, int trials, std::uint64_t seed) {
  if (space->cutoff() < 3) throw ConfigError("generator_bound_probe: cutoff must be >= 3");
  if (j < 0 || trials < 1 || couplings.empty()) throw ConfigError("generator_bound_probe: bad arguments");
  ProbeReport report;
  report.j = j;
  const auto d = static_cast<Eigen::Index>(space->dimension());
  const auto support_end = static_cast<Eigen::Index>(space->sector_end(space->cutoff() - 2));
  const auto support_begin = static_cast<Eigen::Index>(space->sector_begin(1));

  for (double coupling : couplings) {
    const GeneratorSet g(space, potential, coupling);
    const SparseOp quad = g.assemble(phi, parts::quadratic);
    const SparseOp cubic = g.assemble(phi, parts::cubic);
    const SparseOp quartic = g.assemble(phi, parts::quartic);
    std::mt19937_64 rng(seed);
    ProbeRow row;
    row.coupling = coupling;
    for (int trial = 0; trial < trials; ++trial) {
      CVector c = CVector::Zero(d);
      for (Eigen::Index i = support_begin; i < support_end; ++i) {
        const double re = uniform_symmetric(rng);
        const double im = uniform_symmetric(rng);
        c[i] = cplx{re, im};
      }
      const FockVector psi{space, c / c.norm()};
      auto pow_weight = [](double shift, double power) {
        return [shift, power](int n) { return std::pow(n + shift, power); };
      };
      const double nj_quad = weighted_norm(mfrate::apply(quad, psi), pow_weight(0.0, j));
      const double nj_cubic = weighted_norm(mfrate::apply(cubic, psi), pow_weight(0.0, j));
      const double nj_quartic = weighted_norm(mfrate::apply(quartic, psi), pow_weight(0.0, j));
      row.quadratic_ratio = std::max(row.quadratic_ratio, nj_quad / weighted_norm(psi, pow_weight(2.0, j + 1.0)));
      row.cubic_ratio =
          std::max(row.cubic_ratio, std::sqrt(coupling) * nj_cubic / weighted_norm(psi, pow_weight(1.0, j + 1.5)));
      row.quartic_ratio =
          std::max(row.quartic_ratio, coupling * nj_quartic / weighted_norm(psi, pow_weight(0.0, j + 2.0)));
    }
    report.rows.push_back(row);
  }

  report.bounded = true;
  auto spread_ok = [&](double ProbeRow::*field) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const ProbeRow& r : report.rows) {
      const double v = r.*field;
      if (!std::isfinite(v)) return false;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return hi <= 2.0 * lo || hi == 0.0;
  };
  report.bounded = spread_ok(&ProbeRow::quadratic_ratio) && spread_ok(&ProbeRow::cubic_ratio) &&
                   spread_ok(&ProbeRow::quartic_ratio);
  return report;
}

}  // namespace mfrate
