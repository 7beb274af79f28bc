#pragma once

#include "qns/linalg.hpp"

#include <json.hpp>

#include <limits>
#include <string>
#include <vector>

namespace qns {

/// Which spanning set the approximation built after an iteration used.
enum class Branch {
  none,        // baseline solvers; no subspace approximation
  two_column,  // P = [pN q]
  collapsed,   // pN parallel to q (or negligible): P = [q]
  exhausted,   // Krylov subspace used up: q = 0, P = [pN] or empty
};

const char* to_string(Branch b);
Branch branch_from_string(const std::string& s);

/// One iteration k: the state at x_k and the step taken from it. Vectors that
/// do not apply to a method are left empty; scalars that do not apply are NaN.
struct IterationRecord {
  int k = 0;
  Vector x;
  Vector g;
  Vector p;
  Vector q;
  Vector pN;
  /// Curvature vectors H*p, H*q and H*pN as used by the solver (exact
  /// products or learned from gradient differences).
  Vector Hp;
  Vector Hq;
  Vector HpN;
  double alpha = 0.0;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  Branch branch = Branch::none;
  /// The parallel test fell within two decades of its threshold.
  bool near_threshold = false;
};

struct TraceStatus {
  enum class Kind { converged, max_iter, breakdown };
  Kind kind = Kind::converged;
  /// Steps taken; for converged runs the index of the accepted iterate.
  int iterations = 0;
  std::string reason;
};

const char* to_string(TraceStatus::Kind k);

struct IterateTrace {
  std::string method;
  std::vector<IterationRecord> iterations;
  Vector final_x;
  Vector final_g;
  double final_grad_norm = 0.0;
  double initial_grad_norm = 0.0;
  TraceStatus status;
  /// Solver settings sufficient to rerun (policies, tolerances, mode).
  nlohmann::json config;
  std::vector<std::string> warnings;

  bool converged() const { return status.kind == TraceStatus::Kind::converged; }
  /// Iterate x_k for 0 <= k <= iterations.size().
  const Vector& iterate(std::size_t k) const;
};

/// Schema: {"method", "config", "status": {"kind", "iterations", "reason"},
/// "initial_grad_norm", "final": {"x", "g", "grad_norm"}, "warnings",
/// "iterations": [{"k", "x", "g", "p", "q", "pN", "Hp", "Hq", "HpN",
/// "alpha", "sigma", "grad_norm", "branch", "near_threshold"}]}.
/// Inapplicable vectors are omitted and inapplicable scalars are null.
nlohmann::json trace_to_json(const IterateTrace& trace);
/// Throws InvalidSpec on schema mismatch.
IterateTrace trace_from_json(const nlohmann::json& j);

}  // namespace qns
