#pragma once

#include "qns/quadratic_model.hpp"

#include <vector>

namespace qns {

/// Mutually H-conjugate vectors q_0..q_{k-1} and their images H q_i.
struct ConjugateBasis {
  std::vector<Vector> q;
  std::vector<Vector> h_images;

  std::size_t size() const { return q.size(); }
  void push(Vector v, Vector hv);
  /// Columns ordered q_0, ..., q_{k-1}.
  Matrix as_matrix(Eigen::Index n) const;
  Matrix images_as_matrix(Eigen::Index n) const;
  /// max over i != j of |q_i'H q_j| / (||H q_i|| ||q_j||).
  double max_conjugacy_defect() const;
};

/// A step p^N from x together with the coefficients on the basis it was
/// expressed in.
struct SubspaceNewtonStep {
  Vector step;
  Vector scalings;
};

/// Newton scaling of q at a point with gradient g: beta = -g'q / q'Hq, the
/// coefficient making x + beta q optimal along q. Throws NotPositiveDefinite
/// if q'Hq <= 0.
double newton_scaling(const Vector& g, const Vector& q, const Vector& hq);

/// Minimizer step over x + span(S): solves (S'HS) beta = -S'g(x) and returns
/// S beta. When S spans K_k(c, H) and x lies in it, x + step = x_hat_k.
/// Throws DegenerateStep for a dependent basis.
SubspaceNewtonStep subspace_newton_general(const Matrix& basis, const QuadraticProblem& prob, const Vector& x);

/// Same step for an H-conjugate basis, where the system is diagonal and each
/// coefficient is the Newton scaling of its basis vector.
SubspaceNewtonStep subspace_newton_conjugate(const ConjugateBasis& basis, const Vector& g);

struct ExtendedStep {
  /// p^N_k(x) = p^N_{k-1}(x) + beta g_hat + gamma q_prev.
  Vector step;
  /// beta g_hat + gamma q_prev, parallel to q_hat_k.
  Vector increment;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Extends the step from x to x_hat_k into the step from x to x_hat_{k+1},
/// given g_hat = g(x_hat_k) and a q_prev parallel to q_hat_{k-1}:
///   D     = g_hat'H g_hat * q'Hq - (g_hat'H q)^2
///   beta  = -(g_hat'g_hat * q'Hq) / D
///   gamma =  (g_hat'g_hat * q'H g_hat) / D
/// An empty q_prev is the first extension (k = 0), where the step is the
/// Newton scaling along g_hat.
/// Throws DegenerateStep when g_hat = 0 or D <= 1e-14 ||g_hat||^2 q'Hq.
ExtendedStep extend_step(const Vector& pN_prev, const Vector& q_prev, const Vector& g_hat, const HAction& hessian);

}  // namespace qns
