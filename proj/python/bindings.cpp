#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfrate/bogoliubov.hpp"
#include "mfrate/combinatorics.hpp"
#include "mfrate/errors.hpp"
#include "mfrate/fock.hpp"
#include "mfrate/harness.hpp"
#include "mfrate/hartree.hpp"
#include "mfrate/nbody.hpp"

namespace py = pybind11;
using namespace mfrate;

namespace {

Wavefunction wave(const GridSpec& grid, const CVector& amplitudes) { return Wavefunction{grid, amplitudes, 0.0}; }

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["N"] = r.particles;
  d["t"] = r.time;
  d["trace_err"] = r.trace_err;
  d["hs_err"] = r.hs_err;
  d["e2_norm"] = r.e2_norm;
  d["e_minus_e2_norm"] = r.e_minus_e2_norm;
  d["energy_drift"] = r.energy_drift;
  d["sym_defect"] = r.sym_defect;
  d["boundary_mass"] = r.boundary_mass;
  return d;
}

py::list items_list(const std::vector<ReportItem>& items) {
  py::list out;
  for (const ReportItem& i : items) {
    py::dict d;
    d["name"] = i.name;
    d["status"] = to_string(i.status);
    d["measured"] = i.measured;
    d["threshold"] = i.threshold;
    d["detail"] = i.detail;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mean-field convergence-rate toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_MemoryError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init<int, double>(), py::arg("points"), py::arg("length"))
      .def_property_readonly("points", &GridSpec::points)
      .def_property_readonly("length", &GridSpec::length)
      .def_property_readonly("spacing", &GridSpec::spacing)
      .def("position", &GridSpec::position);

  py::class_<PotentialSpec>(m, "PotentialSpec")
      .def_static("zero", &PotentialSpec::zero)
      .def_static("gaussian", &PotentialSpec::gaussian, py::arg("amplitude"), py::arg("width"))
      .def_static("cosine", &PotentialSpec::cosine, py::arg("amplitude"), py::arg("harmonics"))
      .def_static("soft_coulomb", &PotentialSpec::soft_coulomb, py::arg("amplitude"), py::arg("softening"))
      .def_readonly("amplitude", &PotentialSpec::amplitude)
      .def("samples", [](const PotentialSpec& v, const GridSpec& g) { return sample_potential(v, g); });

  m.def(
      "gaussian_state",
      [](const GridSpec& g, double width, double center, double momentum) {
        InitialStateSpec s;
        s.width = width;
        s.center = center;
        s.momentum = momentum;
        return make_initial_state(g, s).amplitudes;
      },
      py::arg("grid"), py::arg("width") = 1.0, py::arg("center") = -1.0, py::arg("momentum") = 0.0);

  m.def(
      "evolve_hartree",
      [](const GridSpec& g, const CVector& phi0, const PotentialSpec& v, double horizon, double dt) {
        return evolve_hartree(wave(g, phi0), v, horizon, dt, 0).final_state().amplitudes;
      },
      py::arg("grid"), py::arg("phi0"), py::arg("potential"), py::arg("horizon"), py::arg("dt"));
  m.def(
      "hartree_energy", [](const GridSpec& g, const CVector& phi, const PotentialSpec& v) { return hartree_energy(wave(g, phi), v); },
      py::arg("grid"), py::arg("phi"), py::arg("potential"));

  m.def(
      "nbody_marginal",
      [](const GridSpec& g, const CVector& phi0, int particles, const PotentialSpec& v, double horizon, double dt) {
        const NBodyState psi = evolve_nbody(factorized_state(wave(g, phi0), particles), v, horizon, dt);
        return reduce_marginal(psi, 1).matrix;
      },
      "One-particle marginal of the evolved factorized state", py::arg("grid"), py::arg("phi0"), py::arg("particles"),
      py::arg("potential"), py::arg("horizon"), py::arg("dt"));
  m.def(
      "trace_distance",
      [](const GridSpec& g, const CMatrix& a, const CMatrix& b) { return trace_distance({g, a, 1}, {g, b, 1}); },
      py::arg("grid"), py::arg("gamma"), py::arg("rho"));
  m.def(
      "pure_density", [](const GridSpec& g, const CVector& phi) { return pure_state_density(wave(g, phi)).matrix; },
      py::arg("grid"), py::arg("phi"));

  m.def(
      "bogoliubov_kernels",
      [](const GridSpec& g, const CVector& phi0, const PotentialSpec& v, double horizon, double dt) {
        const BogoliubovPair p = evolve_pair(evolve_hartree(wave(g, phi0), v, horizon, dt, 1), horizon, dt);
        return py::make_tuple(p.g1, p.g2, symplectic_defect_hermitian(p), symplectic_defect_symmetric(p));
      },
      "(G1, G2, hermitian defect, symmetric defect) at the horizon", py::arg("grid"), py::arg("phi0"),
      py::arg("potential"), py::arg("horizon"), py::arg("dt"));
  m.def(
      "e2_correction",
      [](const GridSpec& g, const CVector& phi0, const PotentialSpec& v, double horizon, double dt, int particles) {
        const HartreeTrajectory traj = evolve_hartree(wave(g, phi0), v, horizon, dt, 1);
        return e2_correction(evolve_pair(traj, horizon, dt), wave(g, phi0), traj.final_state(), particles).matrix;
      },
      py::arg("grid"), py::arg("phi0"), py::arg("potential"), py::arg("horizon"), py::arg("dt"), py::arg("particles"));

  m.def(
      "fock_dimension", [](int modes, int cutoff) { return build_basis(modes, cutoff)->dimension(); }, py::arg("modes"),
      py::arg("cutoff"));
  m.def(
      "coherent_number_moment",
      [](const GridSpec& lattice, const CVector& f, int cutoff, int j) {
        const WeylResult w = weyl_apply(f, vacuum(build_basis(lattice, cutoff)));
        return py::make_tuple(number_functional(w.state, j), w.leakage);
      },
      "(<W(f) Omega, N^j W(f) Omega>, leakage)", py::arg("lattice"), py::arg("f"), py::arg("cutoff"), py::arg("j") = 1);

  m.def("log_dN", &log_dN, py::arg("n"));
  m.def("laguerre", &laguerre_assoc, py::arg("n"), py::arg("alpha"), py::arg("x"));
  m.def(
      "a_coeffs",
      [](int n) {
        const CoefficientTable t = a_coeffs(n);
        std::vector<double> v;
        for (int i = 0; i < n; ++i) v.push_back(t.value(i));
        return v;
      },
      py::arg("n"));
  m.def(
      "weighted_sum", [](int n) { return weighted_sum(n).value; }, py::arg("n"));
  m.def(
      "krasikov_ok", [](int n, int mm) { return krasikov_check(n, mm).ok; }, py::arg("n"), py::arg("m"));

  m.def("default_config", [] { return config_to_json(default_config()); }, "Canonical default configuration (JSON)");
  m.def(
      "config_hash", [](const std::string& text) { return config_hash(parse_config(text)); }, py::arg("config_json"));
  m.def(
      "fit_rate",
      [](const std::vector<std::pair<double, double>>& points) {
        const RateFit f = fit_rate(points);
        return py::make_tuple(f.slope, f.intercept, f.r_squared);
      },
      "(slope, intercept, R^2) of ln(value) against ln(N)", py::arg("points"));
  m.def(
      "run_convergence",
      [](const std::string& text) {
        const ConvergenceResult r = run_convergence(parse_config(text));
        py::list records;
        for (const RunRecord& rec : r.records) records.append(record_dict(rec));
        py::dict out;
        out["records"] = records;
        out["failures"] = r.failures;
        out["fit_valid"] = r.fit_valid;
        out["slope"] = r.fit.slope;
        out["r_squared"] = r.fit.r_squared;
        return out;
      },
      py::arg("config_json"));
  m.def(
      "cross_validate", [](const std::string& text) { return items_list(cross_validate(parse_config(text)).items); },
      py::arg("config_json"));
  m.def(
      "combinatorics_items", [](const std::string& text) { return items_list(combinatorics_items(parse_config(text))); },
      py::arg("config_json"));
}
