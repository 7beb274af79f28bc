#include "qns/hessian_approx.hpp"

#include "qns/errors.hpp"

#include <cmath>
#include <string>

namespace qns {

SpanApprox::SpanApprox(Matrix P, Matrix HP, double sigma) : P_(std::move(P)), HP_(std::move(HP)), sigma_(sigma) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
    throw NotPositiveDefinite("approximation: sigma must be positive, got " + std::to_string(sigma_));
  }
  if (HP_.rows() != P_.rows() || HP_.cols() != P_.cols()) {
    throw DimensionMismatch("approximation: P and HP must have the same shape");
  }
  const Eigen::Index m = P_.cols();
  if (m == 0) {
    basis_.resize(P_.rows(), 0);
    h_basis_.resize(P_.rows(), 0);
    return;
  }
  Eigen::HouseholderQR<Matrix> qr(P_);
  const Matrix r = qr.matrixQR().topLeftCorner(m, m).triangularView<Eigen::Upper>();
  const double lead = r.diagonal().cwiseAbs().maxCoeff();
  if (!(r.diagonal().cwiseAbs().minCoeff() > 1e-13 * lead)) {
    throw DegenerateStep("approximation: P'P is singular (dependent columns)");
  }
  basis_ = qr.householderQ() * Matrix::Identity(P_.rows(), m);
  h_basis_ = r.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(HP_);
  Matrix c = basis_.transpose() * h_basis_;
  c = 0.5 * (c + c.transpose()).eval();
  curvature_.compute(c);
  if (curvature_.info() != Eigen::Success) {
    throw NotPositiveDefinite("approximation: P'HP is not positive definite");
  }
  h_basis_perp_ = h_basis_ - basis_ * (basis_.transpose() * h_basis_);
}

SpanApprox SpanApprox::scaled_identity(Eigen::Index n, double sigma) { return SpanApprox(Matrix(n, 0), Matrix(n, 0), sigma); }

Vector SpanApprox::apply(const Vector& v) const {
  if (v.size() != n()) throw DimensionMismatch("approximation: vector has wrong dimension");
  Vector out = sigma_ * v;
  if (rank() == 0) return out;
  out -= sigma_ * (basis_ * (basis_.transpose() * v));
  out += h_basis_ * curvature_.solve(h_basis_.transpose() * v);
  return out;
}

Vector SpanApprox::solve(const Vector& y) const {
  if (y.size() != n()) throw DimensionMismatch("approximation: vector has wrong dimension");
  if (rank() == 0) return y / sigma_;
  // With y = U y1 + y_perp and HU = U C + W_perp:
  //   z_perp = (y_perp - W_perp C^-1 y1) / sigma,  z_U = C^-1 (y1 - W_perp' z_perp).
  const Vector y1 = basis_.transpose() * y;
  const Vector y_perp = y - basis_ * y1;
  const Vector z_perp = (y_perp - h_basis_perp_ * curvature_.solve(y1)) / sigma_;
  const Vector a = curvature_.solve(Vector(y1 - h_basis_perp_.transpose() * z_perp));
  return basis_ * a + z_perp;
}

Matrix SpanApprox::dense() const {
  const Eigen::Index dim = n();
  Matrix b = sigma_ * Matrix::Identity(dim, dim);
  if (rank() > 0) {
    b -= sigma_ * basis_ * basis_.transpose();
    b += h_basis_ * curvature_.solve(h_basis_.transpose());
  }
  return 0.5 * (b + b.transpose());
}

SpanApprox SpanApprox::with_sigma(double sigma) const { return SpanApprox(P_, HP_, sigma); }

SpanApprox build_full_memory(const ConjugateBasis& q, double sigma) {
  if (q.size() == 0) {
    throw DimensionMismatch("full-memory approximation needs the dimension; use SpanApprox::scaled_identity");
  }
  const Eigen::Index n = q.q.front().size();
  return SpanApprox(q.as_matrix(n), q.images_as_matrix(n), sigma);
}

PairShape classify_pair(const Vector& pN, const Vector& q) {
  const double qn = q.norm();
  if (qn == 0.0) throw DegenerateStep("two-vector approximation: q = 0");
  const double ratio = pN.size() ? pN.norm() / qn : 0.0;
  if (ratio <= kNegligibleRatio) return {Branch::collapsed, ratio > 1e-2 * kNegligibleRatio};
  const double angle = direction_angle(pN, q);
  if (angle <= kParallelThreshold) return {Branch::collapsed, angle > 1e-2 * kParallelThreshold};
  return {Branch::two_column, angle <= 1e2 * kParallelThreshold || ratio <= 1e2 * kNegligibleRatio};
}

TwoVectorApprox build_two_vector(const Vector& pN, const Vector& HpN, const Vector& q, const Vector& Hq, double sigma) {
  const PairShape shape = classify_pair(pN, q);
  const Eigen::Index n = q.size();
  if (shape.branch == Branch::collapsed) {
    return {SpanApprox(Matrix(q), Matrix(Hq), sigma), shape};
  }
  Matrix p(n, 2), hp(n, 2);
  p << pN, q;
  hp << HpN, Hq;
  return {SpanApprox(std::move(p), std::move(hp), sigma), shape};
}

TwoVectorApprox build_two_vector(const Vector& pN, const Vector& q, const HAction& hessian, double sigma) {
  const Vector hpn = pN.size() ? hessian(pN) : Vector::Zero(q.size());
  return build_two_vector(pN.size() ? pN : Vector::Zero(q.size()), hpn, q, hessian(q), sigma);
}

Vector solve_direction(const SpanApprox& b, const Vector& g) {
  if (g.size() != b.n()) throw DimensionMismatch("solve_direction: gradient has wrong dimension");
  if (b.rank() == 0) return -g / b.sigma();
  const Matrix dense = b.dense();
  Eigen::LLT<Matrix> llt(dense);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("solve_direction: approximation is not positive definite");
  Vector p = llt.solve(-g);
  p -= llt.solve(dense * p + g);
  return p;
}

double newton_sigma(const Vector& q, const Vector& hq, const Vector& g) {
  const double slope = q.dot(g);
  if (slope == 0.0) throw DegenerateStep("newton sigma: q'g = 0, already optimal along q");
  return -q.dot(hq) / slope;
}

double delta_factor(const Vector& g_hat, const Vector& q_prev, const HAction& b_action, const HAction& hessian) {
  const Vector hg = hessian(g_hat);
  const double ghg = g_hat.dot(hg);
  const double gbg = g_hat.dot(b_action(g_hat));
  double num = ghg;
  double den = gbg;
  if (q_prev.size() && q_prev.norm() > 0.0) {
    const Vector hq = hessian(q_prev);
    const double qhq = q_prev.dot(hq);
    const double ghq = g_hat.dot(hq);
    num = ghg * qhq - ghq * ghq;
    den = gbg * qhq - ghq * ghq;
  }
  if (!(num > 0.0) || !(den > 0.0)) throw NotPositiveDefinite("delta factor: nonpositive determinant");
  return num / den;
}

}  // namespace qns
