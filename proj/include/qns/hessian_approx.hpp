#pragma once

#include "qns/subspace_newton.hpp"
#include "qns/trace.hpp"

namespace qns {

/// B = sigma (I - P (P'P)^-1 P') + HP (P'HP)^-1 HP'
///
/// B reproduces H on span(P) and is sigma times the identity on the
/// orthogonal complement of span(P). P'P and P'HP are only ever factored at
/// their own (m x m) size: P is reduced to an orthonormal U = P R^-1 and HP to
/// HU = HP R^-1, which leaves B unchanged.
class SpanApprox {
 public:
  /// Throws DimensionMismatch, DegenerateStep for dependent columns and
  /// NotPositiveDefinite for sigma <= 0 or P'HP not positive definite.
  SpanApprox(Matrix P, Matrix HP, double sigma);

  static SpanApprox scaled_identity(Eigen::Index n, double sigma);

  Eigen::Index n() const { return P_.rows(); }
  Eigen::Index rank() const { return P_.cols(); }
  double sigma() const { return sigma_; }
  const Matrix& P() const { return P_; }
  const Matrix& HP() const { return HP_; }

  Vector apply(const Vector& v) const;
  /// B^-1 y from the factored form; only the m x m curvature matrix is solved.
  Vector solve(const Vector& y) const;
  Matrix dense() const;
  SpanApprox with_sigma(double sigma) const;

 private:
  Matrix P_;
  Matrix HP_;
  double sigma_;
  Matrix basis_;
  Matrix h_basis_;
  Matrix h_basis_perp_;
  Eigen::LLT<Matrix> curvature_;
};

/// P = Q = (q_0 ... q_{k-1}); sigma I for an empty basis.
SpanApprox build_full_memory(const ConjugateBasis& q, double sigma);

/// Relative thresholds deciding when (pN, q) should collapse to q alone.
inline constexpr double kParallelThreshold = 1e-10;
inline constexpr double kNegligibleRatio = 1e-10;

struct PairShape {
  Branch branch = Branch::two_column;
  bool near_threshold = false;
};

/// collapsed when ||pN|| <= 1e-10 ||q|| or the angle between pN and q is at
/// most 1e-10 rad, two_column otherwise. near_threshold flags angles within two decades of
/// the threshold. Throws DegenerateStep for q = 0.
PairShape classify_pair(const Vector& pN, const Vector& q);

struct TwoVectorApprox {
  SpanApprox approx;
  PairShape shape;
};

/// B(x) from P = (pN q), or from q alone when classify_pair collapses.
TwoVectorApprox build_two_vector(const Vector& pN, const Vector& HpN, const Vector& q, const Vector& Hq, double sigma);
TwoVectorApprox build_two_vector(const Vector& pN, const Vector& q, const HAction& hessian, double sigma);

/// Solves B p = -g by Cholesky of the dense B with one refinement pass.
/// Throws NotPositiveDefinite if the factorization fails.
Vector solve_direction(const SpanApprox& b, const Vector& g);

/// sigma* = -q'Hq / q'g(x), the complement scaling for which the
/// approximation's step is the exact subspace Newton step. Throws
/// DegenerateStep when q'g = 0.
double newton_sigma(const Vector& q, const Vector& hq, const Vector& g);

/// delta_k = (g'Hg q'Hq - (g'Hq)^2) / (g'Bg q'Hq - (g'Hq)^2) for g = g_hat_k
/// and q = q_prev; with an empty q_prev it reduces to g'Hg / g'Bg.
/// Diagnostic only. Throws NotPositiveDefinite for a nonpositive numerator or
/// denominator.
double delta_factor(const Vector& g_hat, const Vector& q_prev, const HAction& b_action, const HAction& hessian);

}  // namespace qns
