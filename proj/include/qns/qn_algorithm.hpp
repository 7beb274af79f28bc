#pragma once

#include "qns/hessian_approx.hpp"
#include "qns/policies.hpp"
#include "qns/quadratic_model.hpp"
#include "qns/trace.hpp"

#include <cstdint>
#include <optional>

namespace qns {

/// oracle: H-products come from the stored Hessian.
/// matrix_free: every H-product is recovered from gradient differences.
enum class Mode { oracle, matrix_free };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct RunOptions {
  Mode mode = Mode::oracle;
  StepPolicy steps = StepPolicy::unit();
  SigmaPolicy sigmas = SigmaPolicy::constant(1.0);
  /// Converged when ||g_k|| <= tol * (1 + ||g_0||).
  double tol = 1e-9;
  /// Defaults to n + 5.
  std::optional<int> max_iter;
  /// B_0 = initial_sigma * I.
  double initial_sigma = 1.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const RunOptions& o);
RunOptions run_options_from_json(const nlohmann::json& j, const std::string& where = "");

/// H-actions recovered from two consecutive gradients.
struct LearnedAction {
  Vector Hp;        // (g_next - g_curr) / alpha
  Vector Hq;        // Hp - H pN_prev
  double q_curvature = 0.0;
  /// pN_next = keep * pN_prev + along_q * q, with keep = 1 - alpha and
  /// along_q = -(g_curr'q / q'Hq + alpha).
  double keep = 0.0;
  double along_q = 0.0;
  Vector HpN_next;  // keep * H pN_prev + along_q * Hq
};

/// Throws InvalidSpec for alpha = 0. A nonpositive learned curvature q'Hq
/// leaves along_q as NaN; the caller decides between breakdown and convergence.
LearnedAction learn_h_action(const Vector& g_next, const Vector& g_curr, double alpha, const Vector& q,
                             const Vector& HpN_prev);

/// With pN != 0, ||g_hat|| <= factor * eps * max_j(||g_j|| + ||H pN_j||) * (max/min ||Hq||/||q||)
/// marks the Krylov subspace as used up: x + pN is already the minimizer and
/// what is left of g_hat is rounding.
inline constexpr double kExhaustedFactor = 1e3;

/// The quasi-Newton subspace method:
///   solve B_k p_k = -g_k;  x_{k+1} = x_k + alpha_k p_k;  q_k = p_k - pN_{k-1}
///   pN_k = (1 - alpha_k) pN_{k-1} - (g_k'q_k / q_k'Hq_k + alpha_k) q_k
///   B_{k+1} from (pN_k, q_k), or q_k alone when they are parallel.
/// The solve is carried out as B_k q_k = -g_hat_k with g_hat_k = g_k + H pN_{k-1},
/// where g_hat follows g_hat_{k+1} = g_hat_k - (g_hat_k'q_k / q_k'Hq_k) Hq_k.
/// Records one IterationRecord per step. Breakdown (q'Hq numerically zero
/// while not converged) is reported in the trace status, not thrown.
IterateTrace run(const QuadraticProblem& prob, const Vector& x0, const RunOptions& options);

}  // namespace qns
