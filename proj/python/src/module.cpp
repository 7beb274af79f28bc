#include "qns/conjugate_reference.hpp"
#include "qns/errors.hpp"
#include "qns/qn_algorithm.hpp"
#include "qns/quadratic_model.hpp"
#include "qns/trace.hpp"
#include "qns/verification.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace qns;

namespace {

// Traces, options and reports cross the boundary as JSON text; the Python
// package parses them into dicts.
std::string dump(const nlohmann::json& j) { return j.dump(); }

IterateTrace parse_trace(const std::string& text) { return trace_from_json(nlohmann::json::parse(text)); }

py::dict generate(Eigen::Index n, int grade, std::uint64_t seed, std::optional<std::vector<double>> eigenvalues,
                  std::optional<double> condition, bool random_start) {
  ProblemSpec spec;
  spec.n = n;
  spec.grade = grade;
  spec.seed = seed;
  spec.eigenvalues = std::move(eigenvalues);
  spec.condition = condition;
  spec.random_start = random_start;
  const GeneratedProblem gp = generate_problem(spec);
  py::dict out;
  out["H"] = gp.problem.hessian();
  out["c"] = gp.problem.linear();
  out["x0"] = gp.x0;
  out["eigenvalues"] = gp.eigenvalues;
  out["active"] = gp.active;
  return out;
}

Report verify(const std::string& check, const std::string& trace, const Matrix& H, const Vector& c,
              const Vector& x0) {
  const QuadraticProblem prob(H, c);
  const IterateTrace t = parse_trace(trace);
  if (check == "baseline") return check_baseline(t, prob, x0);
  if (check == "theorem1") return check_theorem1(t, prob, x0);
  if (check == "corollary-unit") return check_corollary_unit(t, prob, x0);
  if (check == "step-equivalence") return check_step_equivalence(t, prob, x0);
  throw InvalidSpec("unknown check '" + check + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadratic test problems, conjugate-direction baselines and the subspace quasi-Newton solver.";

  m.def("generate_problem", &generate, py::arg("n"), py::arg("grade"), py::arg("seed") = 0,
        py::arg("eigenvalues") = py::none(), py::arg("condition") = py::none(), py::arg("random_start") = false);

  m.def(
      "krylov_grade", [](const Matrix& H, const Vector& c, const Vector& x0) {
        return krylov_grade(QuadraticProblem(H, c), x0);
      },
      py::arg("H"), py::arg("c"), py::arg("x0"));

  m.def(
      "krylov_minimizer",
      [](const Matrix& H, const Vector& c, const Vector& x0, int k) {
        return Vector(krylov_minimizer(QuadraticProblem(H, c), x0, k));
      },
      py::arg("H"), py::arg("c"), py::arg("x0"), py::arg("k"));

  m.def(
      "cg_solve",
      [](const Matrix& H, const Vector& c, const Vector& x0, double tol, std::optional<int> max_iter) {
        return dump(trace_to_json(cg_solve(QuadraticProblem(H, c), x0, tol, max_iter)));
      },
      py::arg("H"), py::arg("c"), py::arg("x0"), py::arg("tol") = 1e-9, py::arg("max_iter") = py::none());

  m.def(
      "qn_exact_ls_solve",
      [](const Matrix& H, const Vector& c, const Vector& x0, const std::string& variant, double tol,
         std::optional<int> max_iter) {
        QuasiNewtonVariant v;
        if (variant == "bfgs") v = QuasiNewtonVariant::bfgs;
        else if (variant == "memoryless") v = QuasiNewtonVariant::memoryless;
        else throw InvalidSpec("variant must be bfgs or memoryless");
        return dump(trace_to_json(qn_exact_ls_solve(QuadraticProblem(H, c), x0, v, tol, max_iter)));
      },
      py::arg("H"), py::arg("c"), py::arg("x0"), py::arg("variant") = "bfgs", py::arg("tol") = 1e-9,
      py::arg("max_iter") = py::none());

  m.def(
      "run",
      [](const Matrix& H, const Vector& c, const Vector& x0, const std::string& options) {
        const RunOptions o = run_options_from_json(nlohmann::json::parse(options), "options");
        return dump(trace_to_json(run(QuadraticProblem(H, c), x0, o)));
      },
      py::arg("H"), py::arg("c"), py::arg("x0"), py::arg("options") = "{}");

  m.def(
      "verify",
      [](const std::string& check, const std::string& trace, const Matrix& H, const Vector& c, const Vector& x0) {
        return dump(verify(check, trace, H, c, x0).to_json());
      },
      py::arg("check"), py::arg("trace"), py::arg("H"), py::arg("c"), py::arg("x0"));

  m.def(
      "compare_traces",
      [](const std::string& a, const std::string& b) {
        const TraceComparison cmp = compare_traces(parse_trace(a), parse_trace(b));
        py::dict out;
        out["same_shape"] = cmp.same_shape;
        out["max_relative"] = cmp.max_relative;
        out["worst_field"] = cmp.worst_field;
        out["worst_iteration"] = cmp.worst_iteration;
        return out;
      },
      py::arg("a"), py::arg("b"));
}
