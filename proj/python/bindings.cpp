#include "certigrad/autotight.hpp"
#include "certigrad/certify.hpp"
#include "certigrad/diff.hpp"
#include "certigrad/experiments.hpp"
#include "certigrad/io.hpp"
#include "certigrad/sdp.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace certigrad;

namespace {

std::vector<ParamSymMatrix> dense_list(const std::vector<Matrix>& ms) {
  std::vector<ParamSymMatrix> out;
  for (const Matrix& m : ms) out.push_back(ParamSymMatrix::from_dense(m));
  return out;
}

// Cost sensitivities are given as dense dQ/dtheta_k.
HomQCQP make_problem(const Matrix& cost, const std::vector<Matrix>& constraints, Index homog_index,
                     std::vector<bool> redundant, const std::vector<Matrix>& cost_sensitivity) {
  const Index n = cost.rows();
  std::vector<std::vector<Triplet>> sens;
  for (const Matrix& s : cost_sensitivity) sens.push_back(ParamSymMatrix::from_dense(s).entries());
  ParamSymMatrix q(n, ParamSymMatrix::from_dense(cost).entries(), std::move(sens));
  return build_hom_qcqp(std::move(q), dense_list(constraints), homog_index, std::move(redundant));
}

}  // namespace

PYBIND11_MODULE(_certigrad, m) {
  m.doc() = "Certified QCQP solutions and their gradients via the Shor relaxation";

  py::register_exception<Error>(m, "CertigradError", PyExc_RuntimeError);

  py::enum_<Verdict>(m, "Verdict")
      .value("TightCertified", Verdict::TightCertified)
      .value("TightUncertified", Verdict::TightUncertified)
      .value("NotTight", Verdict::NotTight);
  py::enum_<SdpStatus>(m, "SdpStatus")
      .value("Optimal", SdpStatus::Optimal)
      .value("Infeasible", SdpStatus::Infeasible)
      .value("MaxIter", SdpStatus::MaxIter)
      .value("NumericalFailure", SdpStatus::NumericalFailure)
      .value("Unbounded", SdpStatus::Unbounded);
  py::enum_<BackpropMethod>(m, "BackpropMethod").value("IS", BackpropMethod::IS).value("CIFT", BackpropMethod::CIFT);

  py::class_<HomQCQP>(m, "HomQCQP")
      .def_property_readonly("dim", &HomQCQP::dim)
      .def_property_readonly("homog_index", &HomQCQP::homog_index)
      .def_property_readonly("constraint_count", &HomQCQP::constraint_count)
      .def_property_readonly("param_count", &HomQCQP::param_count)
      .def_property_readonly("cost", &HomQCQP::cost_dense)
      .def_property_readonly("constraints", &HomQCQP::constraints_dense)
      .def_property_readonly("redundant", &HomQCQP::redundant_flags)
      .def("chain_to_params", &HomQCQP::chain_to_params, py::arg("grad_Q"), py::arg("grad_A"))
      .def(
          "with_constraints",
          [](const HomQCQP& q, const std::vector<Matrix>& extra, bool redundant) {
            return q.with_constraints(dense_list(extra), redundant);
          },
          py::arg("extra"), py::arg("redundant") = true);

  m.def("make_problem", &make_problem, py::arg("cost"), py::arg("constraints"), py::arg("homog_index") = 0,
        py::arg("redundant") = std::vector<bool>{}, py::arg("cost_sensitivity") = std::vector<Matrix>{},
        "Homogenized QCQP from dense symmetric matrices; A_0 is appended automatically.");
  m.def(
      "load_problem", [](const std::string& path) { return io::load_problem(path).problem; }, py::arg("path"));
  m.def(
      "parse_problem", [](const std::string& text) { return io::parse_problem_text(text).problem; },
      py::arg("text"));

  py::class_<SdpOptions>(m, "SdpOptions")
      .def(py::init<>())
      .def_readwrite("tol", &SdpOptions::tol)
      .def_readwrite("max_iter", &SdpOptions::max_iter)
      .def_readwrite("optimal_tol", &SdpOptions::optimal_tol);
  py::class_<CertifyOptions>(m, "CertifyOptions")
      .def(py::init<>())
      .def_readwrite("ratio_threshold", &CertifyOptions::ratio_threshold)
      .def_readwrite("psd_tol", &CertifyOptions::psd_tol)
      .def_readwrite("stat_tol", &CertifyOptions::stat_tol)
      .def_readwrite("polish", &CertifyOptions::polish);

  py::class_<SDPPrimalDual>(m, "SDPPrimalDual")
      .def_readonly("X", &SDPPrimalDual::X)
      .def_readonly("lam", &SDPPrimalDual::lambda)
      .def_readonly("H", &SDPPrimalDual::H)
      .def_readonly("status", &SDPPrimalDual::status)
      .def_readonly("iterations", &SDPPrimalDual::iterations)
      .def_readonly("primal_objective", &SDPPrimalDual::primal_objective)
      .def_readonly("dual_objective", &SDPPrimalDual::dual_objective)
      .def_property_readonly("residuals", [](const SDPPrimalDual& s) {
        return py::dict(py::arg("primal") = s.residuals.primal, py::arg("dual") = s.residuals.dual,
                        py::arg("gap") = s.residuals.gap);
      });
  py::class_<CertifiedSolution>(m, "CertifiedSolution")
      .def_readonly("x", &CertifiedSolution::x)
      .def_readonly("lam", &CertifiedSolution::lambda)
      .def_readonly("H", &CertifiedSolution::H)
      .def_readonly("tightness_ratio", &CertifiedSolution::tightness_ratio)
      .def_readonly("certificate_min_eig", &CertifiedSolution::certificate_min_eig)
      .def_readonly("stationarity_residual", &CertifiedSolution::stationarity_residual)
      .def_readonly("verdict", &CertifiedSolution::verdict);
  py::class_<PipelineResult>(m, "PipelineResult")
      .def_readonly("sdp", &PipelineResult::sdp)
      .def_readonly("solution", &PipelineResult::solution);

  m.def("solve_and_certify", [](const HomQCQP& q, const SdpOptions& s, const CertifyOptions& c) {
    return solve_and_certify(q, s, c);
  }, py::arg("problem"), py::arg("sdp_options") = SdpOptions{}, py::arg("certify_options") = CertifyOptions{});
  m.def("tightness_ratio", &tightness_ratio, py::arg("X"));

  py::class_<GradientReport>(m, "GradientReport")
      .def_readonly("grad_Q", &GradientReport::grad_Q)
      .def_readonly("grad_A", &GradientReport::grad_A)
      .def_readonly("method", &GradientReport::method)
      .def_readonly("lsqr_iters", &GradientReport::lsqr_iters);

  m.def(
      "backprop",
      [](const HomQCQP& q, const CertifiedSolution& sol, const Vector& incoming, BackpropMethod method) {
        if (sol.verdict != Verdict::TightCertified) {
          throw Error(ErrorCode::TightnessLost, "backprop needs a TightCertified solution");
        }
        return method == BackpropMethod::IS ? backprop_is(make_kkt_workspace(q, sol.x, sol.lambda), incoming)
                                            : backprop_cift(q, sol.x, incoming);
      },
      py::arg("problem"), py::arg("solution"), py::arg("dL_dx"), py::arg("method") = BackpropMethod::IS);
  m.def(
      "jacobian",
      [](const HomQCQP& q, const CertifiedSolution& sol, BackpropMethod method) {
        return method == BackpropMethod::IS ? jacobian_is(q, make_kkt_workspace(q, sol.x, sol.lambda))
                                            : jacobian_cift(q, sol.x);
      },
      py::arg("problem"), py::arg("solution"), py::arg("method") = BackpropMethod::IS,
      "dx*/dtheta through the cost sensitivities.");

  m.def("poly_initial_theta", &experiments::poly_initial_theta);
  m.def("poly_problem", &experiments::poly_problem, py::arg("theta"));
  m.def("poly_problem_stripped", &experiments::poly_problem_stripped, py::arg("theta"));
  m.def("poly_constraint_matrices", &experiments::poly_constraint_matrices);

  py::class_<DiscoveredConstraints>(m, "DiscoveredConstraints")
      .def_readonly("matrices", &DiscoveredConstraints::matrices)
      .def_readonly("margins", &DiscoveredConstraints::margins)
      .def_readonly("data_rank", &DiscoveredConstraints::data_rank);
  m.def(
      "find_constraints",
      [](Index dim, const std::function<Vector(std::uint64_t)>& draw, Index samples, double tol, std::uint64_t seed) {
        // Samples are drawn on the calling thread, so the GIL is held throughout.
        return find_constraints(FeasibleSampler{dim, draw}, samples, tol, seed);
      },
      py::arg("dim"), py::arg("draw"), py::arg("samples") = 0, py::arg("tol") = 1e-8, py::arg("seed") = 0,
      "Quadratic constraints vanishing on draw(seed), draw(seed + 1), ...");
}
