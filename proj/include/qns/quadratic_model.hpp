#pragma once

#include "qns/linalg.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace qns {

/// Largest dimension accepted. Everything is dense.
inline constexpr Eigen::Index kMaxDimension = 512;

/// The strictly convex quadratic  min 1/2 x'Hx + c'x  with H symmetric
/// positive definite. Immutable after construction.
class QuadraticProblem {
 public:
  /// Throws DimensionMismatch on inconsistent sizes or n outside [1, 512],
  /// InvalidSpec when H is visibly non-symmetric, NotPositiveDefinite when the
  /// Cholesky factorization fails. The stored H is exactly symmetric.
  QuadraticProblem(Matrix hessian, Vector linear);

  Eigen::Index n() const { return linear_.size(); }
  const Matrix& hessian() const { return hessian_; }
  const Vector& linear() const { return linear_; }

  Vector gradient(const Vector& x) const;
  double objective(const Vector& x) const;
  Vector apply(const Vector& v) const;
  /// H-action callback bound to this problem. The problem must outlive it.
  HAction hessian_action() const;

  /// Minimizer from the stored Cholesky factor.
  Vector solution() const;

  double hessian_norm1() const { return norm1_; }
  double min_pivot() const { return min_pivot_; }
  /// lambda_max / lambda_min.
  double condition() const { return condition_; }

 private:
  Matrix hessian_;
  Vector linear_;
  Eigen::LLT<Matrix> factor_;
  double norm1_ = 0.0;
  double min_pivot_ = 0.0;
  double condition_ = 1.0;
};

Vector gradient(const QuadraticProblem& prob, const Vector& x);
double objective(const QuadraticProblem& prob, const Vector& x);

/// x* with H x* + c = 0, from a symmetric factorization.
Vector exact_solution(const QuadraticProblem& prob);

/// Relative rank tolerance used for Krylov grade detection, expressed for a
/// unit-norm starting vector: 1e-10 * max(1, ||H||_1).
double krylov_rank_tolerance(const QuadraticProblem& prob);

/// Brute-force Krylov information for K_k(g0, H), g0 = g(x0): an orthonormal
/// basis built by Lanczos with full reorthogonalization, the grade r, and the
/// constrained minimizers x_hat_k over x0 + K_k. Used as ground truth.
class KrylovOracle {
 public:
  KrylovOracle(const QuadraticProblem& prob, const Vector& x0);

  int grade() const { return static_cast<int>(basis_.cols()); }
  const Vector& origin() const { return x0_; }
  const Vector& initial_gradient() const { return g0_; }
  /// Orthonormal basis of K_r(g0, H), n x r.
  const Matrix& basis() const { return basis_; }
  /// First k columns, spanning K_k.
  Matrix basis(int k) const;

  /// x_hat_k, the minimizer over x0 + K_k(g0, H). Requires 0 <= k <= r.
  Vector minimizer(int k) const;
  /// g_hat_k, the gradient at x_hat_k.
  Vector minimizer_gradient(int k) const;
  /// q_hat_k = x_hat_{k+1} - x_hat_k, for 0 <= k < r.
  Vector direction(int k) const;

 private:
  Vector coefficients(int k) const;

  Vector x0_;
  Vector g0_;
  Matrix basis_;
  Matrix h_basis_;
  Matrix projected_;
};

/// Smallest r with rank[g0, H g0, ..., H^r g0] = r. Zero gradient gives 0.
int krylov_grade(const QuadraticProblem& prob, const Vector& x0);

/// Minimizer of the problem over x0 + K_k(g0, H). Throws OutOfRange for
/// k < 0 or k > grade.
Vector krylov_minimizer(const QuadraticProblem& prob, const Vector& x0, int k);

/// Instance description for generate_problem. Exactly one of eigenvalues or
/// condition must be set. A condition number gives n eigenvalues evenly
/// spaced over [1, cond].
struct ProblemSpec {
  Eigen::Index n = 2;
  std::optional<std::vector<double>> eigenvalues;
  std::optional<double> condition;
  int grade = 1;
  std::uint64_t seed = 0;
  /// Draw a random nonzero x0 instead of the origin.
  bool random_start = false;
};

struct GeneratedProblem {
  QuadraticProblem problem;
  Vector x0;
  ProblemSpec spec;
  /// Spectrum used to build H, ascending.
  Vector eigenvalues;
  /// Indices into eigenvalues that g0 touches.
  std::vector<int> active;
};

/// H = Q diag(lambda) Q' with Q a random permutation times a block-diagonal
/// product of Householder reflectors (active / inactive blocks). g0 has
/// nonzero components along exactly `grade` eigendirections with distinct
/// eigenvalues, so the Krylov grade is exactly `grade`. For grade >= 2 the
/// smallest and largest eigenvalues are among them. Deterministic in seed. Throws InvalidSpec if grade exceeds the number of distinct
/// eigenvalues or the spectrum is invalid.
GeneratedProblem generate_problem(const ProblemSpec& spec);

}  // namespace qns
