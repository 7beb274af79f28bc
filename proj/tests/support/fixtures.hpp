#pragma once

#include "qns/quadratic_model.hpp"

namespace qns::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

inline Matrix diag(std::initializer_list<double> v) { return vec(v).asDiagonal(); }

/// H = diag(1, 2), c = (-1, -1); x* = (1, 1/2).
inline QuadraticProblem running_example() { return QuadraticProblem(diag({1.0, 2.0}), vec({-1.0, -1.0})); }

inline GeneratedProblem generated(Eigen::Index n, double cond, int r, std::uint64_t seed, bool random_start = false) {
  ProblemSpec spec;
  spec.n = n;
  spec.condition = cond;
  spec.grade = r;
  spec.seed = seed;
  spec.random_start = random_start;
  return generate_problem(spec);
}

/// Random SPD matrix with eigenvalues in [1, cond].
inline Matrix random_spd(Eigen::Index n, double cond, std::uint64_t seed) {
  return generated(n, cond, 1, seed).problem.hessian();
}

}  // namespace qns::testing
