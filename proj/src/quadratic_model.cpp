#include "qns/quadratic_model.hpp"

#include "qns/errors.hpp"
#include "qns/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qns {

namespace {

void require_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(n) +
                            ", got " + std::to_string(v.size()));
  }
}

Matrix random_reflector_product(Eigen::Index m, Rng& rng) {
  Matrix q = Matrix::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Vector v(m);
    for (Eigen::Index j = 0; j < m; ++j) v(j) = rng.normal();
    const double vv = v.squaredNorm();
    if (vv == 0.0) continue;
    q -= (2.0 / vv) * (q * v) * v.transpose();
  }
  return q;
}

}  // namespace

QuadraticProblem::QuadraticProblem(Matrix hessian, Vector linear)
    : hessian_(std::move(hessian)), linear_(std::move(linear)) {
  const Eigen::Index n = linear_.size();
  if (n < 1 || n > kMaxDimension) {
    throw DimensionMismatch("problem dimension must be in [1, 512], got " + std::to_string(n));
  }
  if (hessian_.rows() != n || hessian_.cols() != n) {
    throw DimensionMismatch("hessian must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!hessian_.allFinite() || !linear_.allFinite()) {
    throw InvalidSpec("problem data must be finite");
  }
  const double scale = std::max(1.0, hessian_.cwiseAbs().maxCoeff());
  if ((hessian_ - hessian_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidSpec("hessian is not symmetric");
  }
  hessian_ = 0.5 * (hessian_ + hessian_.transpose()).eval();

  factor_.compute(hessian_);
  if (factor_.info() != Eigen::Success) {
    throw NotPositiveDefinite("hessian is not positive definite: Cholesky factorization failed");
  }
  const Vector pivots = Matrix(factor_.matrixL()).diagonal().cwiseAbs2();
  min_pivot_ = pivots.minCoeff();
  if (!(min_pivot_ > 0.0)) {
    throw NotPositiveDefinite("hessian is not positive definite: nonpositive pivot");
  }
  norm1_ = norm1(hessian_);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian_, Eigen::EigenvaluesOnly);
  const Vector& lambda = eig.eigenvalues();
  condition_ = lambda(0) > 0.0 ? lambda(n - 1) / lambda(0) : INFINITY;
}

Vector QuadraticProblem::gradient(const Vector& x) const {
  require_size(x, n(), "gradient");
  const Vector hx = hessian_ * x;
  return hx + linear_;
}

double QuadraticProblem::objective(const Vector& x) const {
  require_size(x, n(), "objective");
  return 0.5 * x.dot(hessian_ * x) + linear_.dot(x);
}

Vector QuadraticProblem::apply(const Vector& v) const {
  require_size(v, n(), "hessian product");
  return hessian_ * v;
}

HAction QuadraticProblem::hessian_action() const {
  return [this](const Vector& v) { return apply(v); };
}

Vector QuadraticProblem::solution() const { return factor_.solve(-linear_); }

Vector gradient(const QuadraticProblem& prob, const Vector& x) { return prob.gradient(x); }

double objective(const QuadraticProblem& prob, const Vector& x) { return prob.objective(x); }

Vector exact_solution(const QuadraticProblem& prob) { return prob.solution(); }

double krylov_rank_tolerance(const QuadraticProblem& prob) {
  return 1e-10 * std::max(1.0, prob.hessian_norm1());
}

KrylovOracle::KrylovOracle(const QuadraticProblem& prob, const Vector& x0) : x0_(x0) {
  g0_ = prob.gradient(x0);
  const Eigen::Index n = prob.n();
  basis_.resize(n, 0);
  const double g0_norm = g0_.norm();
  if (g0_norm == 0.0) {
    h_basis_.resize(n, 0);
    projected_.resize(0, 0);
    return;
  }
  const double tol = krylov_rank_tolerance(prob);
  std::vector<Vector> columns{g0_ / g0_norm};
  while (static_cast<Eigen::Index>(columns.size()) < n) {
    Vector w = prob.apply(columns.back());
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& v : columns) w -= v.dot(w) * v;
    }
    const double residual = w.norm();
    if (residual <= tol) break;
    columns.push_back(w / residual);
  }
  basis_.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) basis_.col(static_cast<Eigen::Index>(j)) = columns[j];
  h_basis_ = prob.hessian() * basis_;
  projected_ = basis_.transpose() * h_basis_;
  projected_ = 0.5 * (projected_ + projected_.transpose()).eval();
}

Matrix KrylovOracle::basis(int k) const {
  if (k < 0 || k > grade()) {
    throw OutOfRange("Krylov index " + std::to_string(k) + " outside [0, " + std::to_string(grade()) + "]");
  }
  return basis_.leftCols(k);
}

Vector KrylovOracle::coefficients(int k) const {
  if (k < 0 || k > grade()) {
    throw OutOfRange("Krylov index " + std::to_string(k) + " outside [0, " + std::to_string(grade()) + "]");
  }
  if (k == 0) return Vector(0);
  const Matrix t = projected_.topLeftCorner(k, k);
  const Vector rhs = -basis_.leftCols(k).transpose() * g0_;
  Eigen::LLT<Matrix> llt(t);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("projected hessian is not positive definite");
  return llt.solve(rhs);
}

Vector KrylovOracle::minimizer(int k) const {
  const Vector y = coefficients(k);
  if (k == 0) return x0_;
  return x0_ + basis_.leftCols(k) * y;
}

Vector KrylovOracle::minimizer_gradient(int k) const {
  const Vector y = coefficients(k);
  if (k == 0) return g0_;
  return g0_ + h_basis_.leftCols(k) * y;
}

Vector KrylovOracle::direction(int k) const {
  if (k < 0 || k >= grade()) {
    throw OutOfRange("direction index " + std::to_string(k) + " outside [0, " + std::to_string(grade()) + ")");
  }
  // Differencing in coefficient space avoids cancellation against x0.
  Vector next = coefficients(k + 1);
  const Vector prev = coefficients(k);
  next.head(k) -= prev;
  return basis_.leftCols(k + 1) * next;
}

int krylov_grade(const QuadraticProblem& prob, const Vector& x0) { return KrylovOracle(prob, x0).grade(); }

Vector krylov_minimizer(const QuadraticProblem& prob, const Vector& x0, int k) {
  return KrylovOracle(prob, x0).minimizer(k);
}

GeneratedProblem generate_problem(const ProblemSpec& spec) {
  const Eigen::Index n = spec.n;
  if (n < 1 || n > kMaxDimension) {
    throw InvalidSpec("n must be in [1, 512], got " + std::to_string(n));
  }
  if (spec.grade < 1 || spec.grade > n) {
    throw InvalidSpec("r must be in [1, n], got " + std::to_string(spec.grade));
  }
  if (spec.eigenvalues.has_value() == spec.condition.has_value()) {
    throw InvalidSpec("exactly one of eigenvalues or cond must be given");
  }

  Rng rng(spec.seed);
  std::vector<double> lambda;
  if (spec.eigenvalues) {
    lambda = *spec.eigenvalues;
    if (static_cast<Eigen::Index>(lambda.size()) != n) {
      throw InvalidSpec("eigenvalues must have n = " + std::to_string(n) + " entries, got " +
                        std::to_string(lambda.size()));
    }
    for (double v : lambda) {
      if (!std::isfinite(v) || v <= 0.0) throw InvalidSpec("eigenvalues must be positive and finite");
    }
  } else {
    const double cond = *spec.condition;
    if (!std::isfinite(cond) || cond < 1.0) throw InvalidSpec("cond must be finite and >= 1");
    lambda.assign(static_cast<std::size_t>(n), 1.0);
    if (n > 1) {
      const double step = (cond - 1.0) / static_cast<double>(n - 1);
      for (Eigen::Index i = 1; i < n; ++i) lambda[static_cast<std::size_t>(i)] = 1.0 + step * static_cast<double>(i);
      lambda.back() = cond;
    }
  }
  std::sort(lambda.begin(), lambda.end());

  std::vector<int> group_heads;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (i == 0 || lambda[i] != lambda[i - 1]) group_heads.push_back(static_cast<int>(i));
  }
  if (spec.grade > static_cast<int>(group_heads.size())) {
    throw InvalidSpec("r = " + std::to_string(spec.grade) + " exceeds the number of distinct eigenvalues (" +
                      std::to_string(group_heads.size()) + ")");
  }
  // With r >= 2 the extreme eigenvalues are always active, so the block the
  // Krylov methods see has the full condition number. The rest is a partial
  // Fisher-Yates over the remaining distinct groups.
  int fixed = 0;
  if (spec.grade >= 2) {
    std::swap(group_heads[1], group_heads.back());
    fixed = 2;
  }
  for (int i = fixed; i < spec.grade; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.index(group_heads.size() - static_cast<std::size_t>(i)));
    std::swap(group_heads[static_cast<std::size_t>(i)], group_heads[j]);
  }
  std::vector<int> active(group_heads.begin(), group_heads.begin() + spec.grade);
  std::sort(active.begin(), active.end());

  // Q = permutation * blockdiag(Q_active, Q_rest), each block a product of
  // Householder reflectors. H then has exact zeros between the blocks and
  // g0 is exactly zero outside the active block, so the Krylov vectors never
  // pick up rounding noise along inactive eigendirections.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

  std::vector<int> rest;
  for (int i = 0; i < static_cast<int>(n); ++i) {
    if (!std::binary_search(active.begin(), active.end(), i)) rest.push_back(i);
  }
  Vector eig = Eigen::Map<const Vector>(lambda.data(), n);
  Matrix h = Matrix::Zero(n, n);
  Vector g0 = Vector::Zero(n);
  std::size_t offset = 0;
  for (const std::vector<int>* block : {&active, &rest}) {
    const auto m = static_cast<Eigen::Index>(block->size());
    if (m == 0) continue;
    const Matrix q = random_reflector_product(m, rng);
    Vector d(m);
    for (Eigen::Index i = 0; i < m; ++i) d(i) = eig((*block)[static_cast<std::size_t>(i)]);
    Matrix hb = q * d.asDiagonal() * q.transpose();
    hb = 0.5 * (hb + hb.transpose()).eval();
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        h(perm[offset + static_cast<std::size_t>(i)], perm[offset + static_cast<std::size_t>(j)]) = hb(i, j);
      }
    }
    if (block == &active) {
      Vector w(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        w(i) = sign * rng.uniform(0.5, 1.5);
      }
      const Vector gb = q * w;
      for (Eigen::Index i = 0; i < m; ++i) g0(perm[offset + static_cast<std::size_t>(i)]) = gb(i);
    }
    offset += block->size();
  }

  Vector x0 = Vector::Zero(n);
  if (spec.random_start) {
    for (Eigen::Index j = 0; j < n; ++j) x0(j) = rng.normal();
  }
  // Same product as QuadraticProblem::gradient, so g(x0) reproduces the zeros of g0.
  const Vector hx0 = h * x0;
  Vector c = g0 - hx0;

  return GeneratedProblem{QuadraticProblem(std::move(h), std::move(c)), std::move(x0), spec, std::move(eig),
                          std::move(active)};
}

}  // namespace qns
