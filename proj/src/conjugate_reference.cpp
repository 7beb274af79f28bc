#include "qns/conjugate_reference.hpp"

#include "qns/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qns {

void DirectionHistory::push(Vector p, Vector hp) {
  directions.push_back(std::move(p));
  h_images.push_back(std::move(hp));
}

double DirectionHistory::max_conjugacy_defect() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    for (std::size_t j = 0; j < directions.size(); ++j) {
      if (i == j) continue;
      const double scale = h_images[i].norm() * directions[j].norm();
      if (scale == 0.0) continue;
      worst = std::max(worst, std::abs(h_images[i].dot(directions[j])) / scale);
    }
  }
  return worst;
}

Vector DenseApprox::direction(const Vector& g) const {
  Eigen::LLT<Matrix> llt(B);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("approximation is not positive definite");
  return llt.solve(-g);
}

double exact_line_search(const QuadraticProblem& prob, const Vector& x, const Vector& p) {
  const Vector hp = prob.apply(p);
  const double curvature = p.dot(hp);
  if (!(curvature > 0.0)) {
    throw NotPositiveDefinite("exact line search: p'Hp = " + std::to_string(curvature) + " is not positive");
  }
  return -prob.gradient(x).dot(p) / curvature;
}

namespace {

struct LoopLimits {
  int max_iter;
  bool implicit;  // derived from the grade, so running out is a breakdown
};

LoopLimits resolve_limits(const QuadraticProblem& prob, const Vector& x0, std::optional<int> max_iter) {
  if (max_iter) {
    if (*max_iter < 1) throw InvalidSpec("max_iter must be >= 1");
    return {*max_iter, false};
  }
  return {krylov_grade(prob, x0) + 1, true};
}

void finish(IterateTrace& trace, const Vector& x, const Vector& g, int steps, bool converged,
            const LoopLimits& limits) {
  trace.final_x = x;
  trace.final_g = g;
  trace.final_grad_norm = g.norm();
  trace.status.iterations = steps;
  if (converged) {
    trace.status.kind = TraceStatus::Kind::converged;
  } else if (limits.implicit) {
    trace.status.kind = TraceStatus::Kind::breakdown;
    trace.status.reason = "no convergence within r + 1 = " + std::to_string(limits.max_iter) + " iterations";
  } else {
    trace.status.kind = TraceStatus::Kind::max_iter;
  }
}

nlohmann::json baseline_config(const char* solver, double tol, const LoopLimits& limits) {
  nlohmann::json config;
  config["solver"] = solver;
  config["tol"] = tol;
  config["max_iter"] = limits.implicit ? nlohmann::json() : nlohmann::json(limits.max_iter);
  return config;
}

}  // namespace

IterateTrace cg_solve(const QuadraticProblem& prob, const Vector& x0, double tol, std::optional<int> max_iter) {
  if (!(tol > 0.0)) throw InvalidSpec("tol must be positive");
  const LoopLimits limits = resolve_limits(prob, x0, max_iter);
  IterateTrace trace;
  trace.method = "cg";
  trace.config = baseline_config("cg", tol, limits);

  Vector x = x0;
  Vector g = prob.gradient(x);
  trace.initial_grad_norm = g.norm();
  const double threshold = tol * (1.0 + trace.initial_grad_norm);
  // Directions follow the residual recurrence res <- res + alpha*Hp; the
  // recorded gradient and the stopping test use the true gradient.
  Vector res = g;
  Vector p = -res;
  int k = 0;
  for (; k < limits.max_iter && g.norm() > threshold; ++k) {
    Vector hp = prob.apply(p);
    const double curvature = p.dot(hp);
    if (!(curvature > 0.0)) throw NotPositiveDefinite("cg: nonpositive curvature along search direction");
    const double alpha = res.squaredNorm() / curvature;

    IterationRecord rec;
    rec.k = k;
    rec.x = x;
    rec.g = g;
    rec.p = p;
    rec.Hp = hp;
    rec.alpha = alpha;
    rec.grad_norm = g.norm();
    trace.iterations.push_back(std::move(rec));

    x += alpha * p;
    g = prob.gradient(x);
    const Vector res_next = res + alpha * hp;
    const double beta = res_next.squaredNorm() / res.squaredNorm();
    res = res_next;
    p = -res + beta * p;
  }
  finish(trace, x, g, k, g.norm() <= threshold, limits);
  return trace;
}

DenseApprox bfgs_update(const DenseApprox& b, const Vector& p, const Vector& hp) {
  const Vector bp = b.B * p;
  const double pbp = p.dot(bp);
  const double php = p.dot(hp);
  if (!(pbp > 0.0) || !(php > 0.0)) throw NotPositiveDefinite("bfgs update: nonpositive curvature denominator");
  Matrix next = b.B - (bp * bp.transpose()) / pbp + (hp * hp.transpose()) / php;
  return {0.5 * (next + next.transpose())};
}

DenseApprox memoryless_bfgs_update(const Vector& p, const Vector& hp) {
  if (p.norm() == 0.0) throw DegenerateStep("memoryless bfgs update: zero direction");
  return bfgs_update(DenseApprox{Matrix::Identity(p.size(), p.size())}, p, hp);
}

Vector memoryless_bfgs_direction(const Vector& p, const Vector& hp, const Vector& g) {
  const double php = p.dot(hp);
  if (!(php > 0.0)) throw NotPositiveDefinite("memoryless bfgs direction: nonpositive curvature");
  const double rho = 1.0 / php;
  const Vector t = -g;
  const Vector u = t - (rho * p.dot(t)) * hp;
  return u - (rho * hp.dot(u)) * p + (rho * p.dot(t)) * p;
}

IterateTrace qn_exact_ls_solve(const QuadraticProblem& prob, const Vector& x0, QuasiNewtonVariant variant,
                               double tol, std::optional<int> max_iter) {
  if (!(tol > 0.0)) throw InvalidSpec("tol must be positive");
  const LoopLimits limits = resolve_limits(prob, x0, max_iter);
  const char* name = variant == QuasiNewtonVariant::bfgs ? "bfgs" : "memoryless";
  IterateTrace trace;
  trace.method = name;
  trace.config = baseline_config(name, tol, limits);

  const Eigen::Index n = prob.n();
  DenseApprox b{Matrix::Identity(n, n)};
  Vector x = x0;
  Vector g = prob.gradient(x);
  trace.initial_grad_norm = g.norm();
  const double threshold = tol * (1.0 + trace.initial_grad_norm);
  int k = 0;
  Vector res = g;  // gradient recurrence res <- res + alpha*Hp drives the directions
  for (; k < limits.max_iter && g.norm() > threshold; ++k) {
    Vector p = variant == QuasiNewtonVariant::memoryless && k > 0
                   ? memoryless_bfgs_direction(trace.iterations.back().p, trace.iterations.back().Hp, res)
                   : b.direction(res);
    Vector hp = prob.apply(p);
    const double curvature = p.dot(hp);
    if (!(curvature > 0.0)) throw NotPositiveDefinite(std::string(name) + ": nonpositive curvature");
    const double alpha = -res.dot(p) / curvature;

    IterationRecord rec;
    rec.k = k;
    rec.x = x;
    rec.g = g;
    rec.p = p;
    rec.Hp = hp;
    rec.alpha = alpha;
    rec.grad_norm = g.norm();
    trace.iterations.push_back(std::move(rec));

    x += alpha * p;
    g = prob.gradient(x);
    res += alpha * hp;
    if (variant == QuasiNewtonVariant::bfgs) b = bfgs_update(b, p, hp);
  }
  finish(trace, x, g, k, g.norm() <= threshold, limits);
  return trace;
}

}  // namespace qns
