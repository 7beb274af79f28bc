#pragma once

#include <Eigen/Dense>

#include <functional>

namespace qns {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Returns H*v for a fixed symmetric H. Lets step formulas run against an
/// explicit matrix or against products learned from gradient differences.
using HAction = std::function<Vector(const Vector&)>;

/// Sign-insensitive angle in radians between two directions, in [0, pi/2].
/// Two zero vectors have angle 0; one zero vector gives pi/2.
double direction_angle(const Vector& u, const Vector& v);

/// Smallest diagonal pivot of the Cholesky factorization of m, or 0 if the
/// factorization breaks down.
double min_cholesky_pivot(const Matrix& m);

/// Maximum absolute column sum.
double norm1(const Matrix& m);

/// ||a - b|| / max(||a||, ||b||); 0 when both are zero.
double relative_difference(const Vector& a, const Vector& b);

/// Orthonormal basis (n x rank) of span(columns) by Householder QR with
/// column pivoting; columns whose pivot falls under rel_tol * max pivot are
/// dropped.
Matrix orthonormal_basis(const Matrix& columns, double rel_tol = 1e-12);

}  // namespace qns
