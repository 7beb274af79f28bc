#include "qns/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qns {

double direction_angle(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 && nv == 0.0) return 0.0;
  if (nu == 0.0 || nv == 0.0) return std::numbers::pi / 2;
  const Vector a = u / nu;
  const Vector b = v / nv;
  const double c = a.dot(b);
  // The orthogonal residual keeps small angles accurate where acos would not.
  const double s = (a - c * b).norm();
  return std::atan2(s, std::abs(c));
}

double min_cholesky_pivot(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return 0.0;
  const Vector d = Matrix(llt.matrixL()).diagonal();
  return d.size() == 0 ? 0.0 : d.cwiseAbs2().minCoeff();
}

double norm1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

double relative_difference(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

Matrix orthonormal_basis(const Matrix& columns, double rel_tol) {
  if (columns.cols() == 0) return Matrix(columns.rows(), 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(columns);
  const auto& r = qr.matrixR();
  const double lead = std::abs(r(0, 0));
  Eigen::Index rank = 0;
  const Eigen::Index diag = std::min(r.rows(), r.cols());
  while (rank < diag && lead > 0.0 && std::abs(r(rank, rank)) > rel_tol * lead) ++rank;
  Matrix q = qr.householderQ() * Matrix::Identity(columns.rows(), rank);
  return q;
}

}  // namespace qns
