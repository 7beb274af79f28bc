#include "qns/subspace_newton.hpp"

#include "qns/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qns {

void ConjugateBasis::push(Vector v, Vector hv) {
  q.push_back(std::move(v));
  h_images.push_back(std::move(hv));
}

Matrix ConjugateBasis::as_matrix(Eigen::Index n) const {
  Matrix m(n, static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < q.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = q[i];
  return m;
}

Matrix ConjugateBasis::images_as_matrix(Eigen::Index n) const {
  Matrix m(n, static_cast<Eigen::Index>(h_images.size()));
  for (std::size_t i = 0; i < h_images.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = h_images[i];
  return m;
}

double ConjugateBasis::max_conjugacy_defect() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (i == j) continue;
      const double scale = h_images[i].norm() * q[j].norm();
      if (scale > 0.0) worst = std::max(worst, std::abs(h_images[i].dot(q[j])) / scale);
    }
  }
  return worst;
}

double newton_scaling(const Vector& g, const Vector& q, const Vector& hq) {
  const double curvature = q.dot(hq);
  if (!(curvature > 0.0)) {
    throw NotPositiveDefinite("newton scaling: q'Hq = " + std::to_string(curvature) + " is not positive");
  }
  return -g.dot(q) / curvature;
}

SubspaceNewtonStep subspace_newton_general(const Matrix& basis, const QuadraticProblem& prob, const Vector& x) {
  const Vector g = prob.gradient(x);
  if (basis.rows() != prob.n()) throw DimensionMismatch("subspace basis has wrong row count");
  if (basis.cols() == 0) return {Vector::Zero(prob.n()), Vector(0)};
  const Matrix hs = prob.hessian() * basis;
  Matrix gram = basis.transpose() * hs;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw DegenerateStep("subspace newton: S'HS is singular");
  // A numerically dependent basis still factors; check the pivots.
  const Vector pivots = Matrix(llt.matrixL()).diagonal().cwiseAbs2();
  if (pivots.minCoeff() <= 1e-14 * gram.diagonal().maxCoeff()) {
    throw DegenerateStep("subspace newton: basis is linearly dependent");
  }
  Vector beta = llt.solve(-basis.transpose() * g);
  return {basis * beta, std::move(beta)};
}

SubspaceNewtonStep subspace_newton_conjugate(const ConjugateBasis& basis, const Vector& g) {
  SubspaceNewtonStep out{Vector::Zero(g.size()), Vector(static_cast<Eigen::Index>(basis.size()))};
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double beta = newton_scaling(g, basis.q[i], basis.h_images[i]);
    out.scalings(static_cast<Eigen::Index>(i)) = beta;
    out.step += beta * basis.q[i];
  }
  return out;
}

ExtendedStep extend_step(const Vector& pN_prev, const Vector& q_prev, const Vector& g_hat, const HAction& hessian) {
  const double gg = g_hat.squaredNorm();
  if (gg == 0.0) throw DegenerateStep("extend step: g_hat = 0, already at the minimizer");
  const Vector hg = hessian(g_hat);
  const double ghg = g_hat.dot(hg);

  ExtendedStep out;
  if (q_prev.size() == 0 || q_prev.norm() == 0.0) {
    if (!(ghg > 0.0)) throw NotPositiveDefinite("extend step: g_hat'H g_hat is not positive");
    out.beta = -gg / ghg;
    out.increment = out.beta * g_hat;
  } else {
    const Vector hq = hessian(q_prev);
    const double qhq = q_prev.dot(hq);
    const double ghq = g_hat.dot(hq);
    const double det = ghg * qhq - ghq * ghq;
    if (!(det > 1e-14 * gg * qhq)) {
      throw DegenerateStep("extend step: D = " + std::to_string(det) + " is degenerate");
    }
    // Adjugate of the 2x2 system [[g'Hg, g'Hq], [q'Hg, q'Hq]] applied to (-g'g, 0).
    out.beta = -gg * qhq / det;
    out.gamma = gg * ghq / det;
    out.increment = out.beta * g_hat + out.gamma * q_prev;
  }
  out.step = pN_prev.size() ? Vector(pN_prev + out.increment) : out.increment;
  return out;
}

}  // namespace qns
