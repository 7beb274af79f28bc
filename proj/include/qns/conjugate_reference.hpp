#pragma once

#include "qns/quadratic_model.hpp"
#include "qns/trace.hpp"

#include <optional>
#include <vector>

namespace qns {

/// Directions p_0..p_{k-1} together with their images H p_i.
struct DirectionHistory {
  std::vector<Vector> directions;
  std::vector<Vector> h_images;

  void push(Vector p, Vector hp);
  /// max over i != j of |p_i'H p_j| / (||H p_i|| ||p_j||).
  double max_conjugacy_defect() const;
};

/// Dense symmetric Hessian approximation B.
struct DenseApprox {
  Matrix B;

  /// Solves B p = -g by Cholesky. Throws NotPositiveDefinite.
  Vector direction(const Vector& g) const;
};

/// alpha = -g(x)'p / p'Hp. Throws NotPositiveDefinite if p'Hp <= 0.
double exact_line_search(const QuadraticProblem& prob, const Vector& x, const Vector& p);

/// Conjugate gradients with exact line search. Stops when
/// ||g_k|| <= tol * (1 + ||g_0||). When max_iter is not given the limit is
/// r + 1 with r the Krylov grade; running out is reported as breakdown.
IterateTrace cg_solve(const QuadraticProblem& prob, const Vector& x0, double tol,
                      std::optional<int> max_iter = std::nullopt);

/// B+ = B - B p p'B / p'Bp + Hp Hp' / p'Hp.
DenseApprox bfgs_update(const DenseApprox& b, const Vector& p, const Vector& hp);

/// The BFGS update applied to the identity.
DenseApprox memoryless_bfgs_update(const Vector& p, const Vector& hp);
/// -B^{-1} g for B = memoryless_bfgs_update(p, hp), via the product form
/// (I - rho p hp')(I - rho hp p') + rho p p' with rho = 1 / p'Hp.
Vector memoryless_bfgs_direction(const Vector& p, const Vector& hp, const Vector& g);

enum class QuasiNewtonVariant { bfgs, memoryless };

/// B_k p_k = -g_k, exact line search, B_0 = I, followed by the BFGS or
/// memoryless BFGS update. Same stopping rule and breakdown rule as cg_solve.
IterateTrace qn_exact_ls_solve(const QuadraticProblem& prob, const Vector& x0, QuasiNewtonVariant variant,
                               double tol, std::optional<int> max_iter = std::nullopt);

}  // namespace qns
