#pragma once

// Exact rational transcription of the quasi-Newton subspace iteration for
// small dense problems. B is formed densely from its defining formula and
// every solve is exact Gaussian elimination, so the iterates are the true
// rational values with no rounding.

#include <boost/multiprecision/cpp_int.hpp>

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

namespace qns::testing {

using Rat = boost::multiprecision::cpp_rational;
using RVec = std::vector<Rat>;
using RMat = std::vector<RVec>;  // row-major

inline RVec rvec(std::initializer_list<Rat> v) { return RVec(v); }

inline Rat dot(const RVec& a, const RVec& b) {
  Rat s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline RVec mul(const RMat& m, const RVec& v) {
  RVec out(m.size(), Rat(0));
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = dot(m[i], v);
  return out;
}

inline RVec axpy(const Rat& a, const RVec& x, const RVec& y) {
  RVec out = y;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += a * x[i];
  return out;
}

inline RVec scale(const Rat& a, const RVec& x) {
  RVec out = x;
  for (auto& v : out) v *= a;
  return out;
}

inline bool is_zero(const RVec& v) {
  for (const auto& e : v)
    if (e != 0) return false;
  return true;
}

/// Solves m x = b exactly. Throws on a singular system.
inline RVec solve(RMat m, RVec b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    while (piv < n && m[piv][col] == 0) ++piv;
    if (piv == n) throw std::domain_error("singular rational system");
    std::swap(m[piv], m[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t row = 0; row < n; ++row) {
      if (row == col || m[row][col] == 0) continue;
      const Rat f = m[row][col] / m[col][col];
      for (std::size_t j = col; j < n; ++j) m[row][j] -= f * m[col][j];
      b[row] -= f * b[col];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= m[i][i];
  return b;
}

/// u and v span a single line (or u is zero).
inline bool parallel(const RVec& u, const RVec& v) {
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = i + 1; j < u.size(); ++j)
      if (u[i] * v[j] - u[j] * v[i] != 0) return false;
  return true;
}

/// B = sigma (I - P (P'P)^-1 P') + HP (P'HP)^-1 HP' for columns P.
inline RMat span_approx(const std::vector<RVec>& P, const RMat& H, const Rat& sigma) {
  const std::size_t n = H.size();
  const std::size_t m = P.size();
  std::vector<RVec> HP;
  for (const auto& p : P) HP.push_back(mul(H, p));
  RMat gram(m, RVec(m)), curv(m, RVec(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      gram[i][j] = dot(P[i], P[j]);
      curv[i][j] = dot(P[i], HP[j]);
    }
  RMat B(n, RVec(n, Rat(0)));
  for (std::size_t i = 0; i < n; ++i) B[i][i] = sigma;
  // Columns of (P'P)^-1 and (P'HP)^-1 one unit vector at a time.
  for (std::size_t j = 0; j < m; ++j) {
    RVec e(m, Rat(0));
    e[j] = 1;
    const RVec gj = solve(gram, e);
    const RVec cj = solve(curv, e);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          B[a][b] -= sigma * P[i][a] * gj[i] * P[j][b];
          B[a][b] += HP[i][a] * cj[i] * HP[j][b];
        }
  }
  return B;
}

struct RationalTrace {
  std::vector<RVec> x;  // x_0 .. x_K
  std::vector<RVec> p;
  std::vector<RVec> q;
  std::vector<RVec> pN;
  bool converged = false;
  int steps = 0;
};

/// Runs until g = 0 exactly or max_steps. alpha(k) and sigma(k) supply the
/// step size and the scaling of the approximation built after step k; B_0 = I.
inline RationalTrace run_rational(const RMat& H, const RVec& c, const RVec& x0,
                                  const std::function<Rat(int)>& alpha, const std::function<Rat(int)>& sigma,
                                  int max_steps) {
  const std::size_t n = c.size();
  RationalTrace t;
  RVec x = x0;
  RVec pN(n, Rat(0));
  RMat B(n, RVec(n, Rat(0)));
  for (std::size_t i = 0; i < n; ++i) B[i][i] = 1;
  t.x.push_back(x);
  for (int k = 0; k < max_steps; ++k) {
    const RVec g = axpy(Rat(1), mul(H, x), c);
    if (is_zero(g)) {
      t.converged = true;
      return t;
    }
    const RVec p = solve(B, scale(Rat(-1), g));
    const Rat a = alpha(k);
    x = axpy(a, p, x);
    const RVec q = axpy(Rat(-1), pN, p);
    t.p.push_back(p);
    t.q.push_back(q);
    if (is_zero(q)) {
      pN = scale(1 - a, pN);
    } else {
      const Rat rho = dot(g, q) / dot(q, mul(H, q));
      pN = axpy(-(rho + a), q, scale(1 - a, pN));
      if (parallel(pN, q)) {
        B = span_approx({q}, H, sigma(k));
      } else {
        B = span_approx({pN, q}, H, sigma(k));
      }
    }
    t.pN.push_back(pN);
    t.x.push_back(x);
    t.steps = k + 1;
  }
  t.converged = is_zero(axpy(Rat(1), mul(H, x), c));
  return t;
}

inline double to_double(const Rat& r) { return r.convert_to<double>(); }

inline Eigen::VectorXd to_eigen(const RVec& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = to_double(v[i]);
  return out;
}

/// The running example: H = diag(1, 2), c = (-1, -1).
inline RMat example_hessian() { return {{Rat(1), Rat(0)}, {Rat(0), Rat(2)}}; }
inline RVec example_linear() { return {Rat(-1), Rat(-1)}; }

}  // namespace qns::testing
