#pragma once

#include "qns/quadratic_model.hpp"
#include "qns/trace.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace qns {

enum class Verdict { pass, fail, not_applicable };

const char* to_string(Verdict v);

/// One named invariant: what was measured against which bound.
struct Finding {
  std::string name;
  Verdict verdict = Verdict::pass;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct Report {
  std::string check;
  int grade = 0;
  int iterations = 0;
  std::vector<Finding> findings;

  /// No finding failed.
  bool passed() const;
  Verdict verdict() const;
  const Finding* find(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Direction angle bound: 1e-6 rad, or 1e-4 rad when cond(H) > 1e6.
double parallel_tolerance(const QuadraticProblem& prob);

/// Conjugate-direction baseline traces (cg, bfgs, memoryless): termination in
/// exactly r steps, terminal gradient, mutual conjugacy, gradient
/// orthogonality, iterates equal to the Krylov minimizers, directions
/// parallel to q_hat_k.
Report check_baseline(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0);

/// Quasi-Newton subspace traces:
///  newton-step-onset      for k >= r, x_k + p_k = x*
///  termination-rule       the run ends exactly at the first unit step with k >= r
///                         (or at r when the final productive step is Newton-scaled)
///  conjugate-directions   q_k parallel to q_hat_k for k < r
///  subspace-newton-steps  g(x_{k+1} + pN_k) orthogonal to K_{k+1} for k < r
///  approximation-solve    p_k solves B_k p = -g_k with B_k rebuilt from the
///                         trace using exact H-products
/// plus recurrence consistency of the recorded vectors.
Report check_theorem1(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0);

/// Unit-step traces: every build used a single column, the step count is r or
/// r + 1, and it is r exactly when the final productive build used the Newton
/// sigma. Reruns with that sigma scaled by 1, 1.1 and 0.9 to confirm the
/// value is unique. Non-unit traces get a not-applicable report.
Report check_corollary_unit(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0);

/// Full-memory vs two-vector steps and the (1/sigma) q_k + pN_{k-1}
/// decomposition, at every iteration k < r of a quasi-Newton subspace trace.
Report check_step_equivalence(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0);

/// Largest field-wise deviation between two traces, each field measured
/// relative to the largest norm that field reaches in either trace.
struct TraceComparison {
  bool same_shape = true;
  double max_relative = 0.0;
  std::string worst_field;
  int worst_iteration = -1;
};

TraceComparison compare_traces(const IterateTrace& a, const IterateTrace& b);

/// Dispatches on trace.method.
std::vector<Report> verify_trace(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0);

}  // namespace qns
