#include "qns/verification.hpp"

#include "qns/errors.hpp"
#include "qns/hessian_approx.hpp"
#include "qns/qn_algorithm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace qns {

using nlohmann::json;

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::not_applicable: return "n/a";
  }
  return "n/a";
}

bool Report::passed() const {
  return std::none_of(findings.begin(), findings.end(), [](const Finding& f) { return f.verdict == Verdict::fail; });
}

Verdict Report::verdict() const {
  if (!passed()) return Verdict::fail;
  const bool any_pass =
      std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return f.verdict == Verdict::pass; });
  return any_pass ? Verdict::pass : Verdict::not_applicable;
}

const Finding* Report::find(const std::string& name) const {
  for (const auto& f : findings) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

json Report::to_json() const {
  json items = json::array();
  for (const auto& f : findings) {
    items.push_back({{"name", f.name},
                     {"verdict", qns::to_string(f.verdict)},
                     {"measured", f.measured},
                     {"tolerance", f.tolerance},
                     {"detail", f.detail}});
  }
  return {{"check", check}, {"verdict", qns::to_string(verdict())}, {"grade", grade},
          {"iterations", iterations}, {"findings", std::move(items)}};
}

std::string Report::to_text() const {
  std::ostringstream out;
  out << check << ": " << qns::to_string(verdict()) << " (r = " << grade << ", iterations = " << iterations << ")\n";
  for (const auto& f : findings) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e <= %.3e", f.measured, f.tolerance);
    out << "  [" << qns::to_string(f.verdict) << "] " << f.name << "  " << buf;
    if (!f.detail.empty()) out << "  " << f.detail;
    out << '\n';
  }
  return out.str();
}

double parallel_tolerance(const QuadraticProblem& prob) { return prob.condition() > 1e6 ? 1e-4 : 1e-6; }

namespace {

/// Tracks the worst ratio measured/tolerance for one named invariant.
class Bound {
 public:
  Bound(std::string name, double tolerance) : name_(std::move(name)), tolerance_(tolerance) {}

  void observe(double measured, double scale, const std::string& where) {
    const double normalized = scale > 0.0 ? measured / scale : measured;
    if (!(normalized <= tolerance_)) {
      failed_ = true;
      if (where_.empty()) where_ = where;
    }
    if (std::isnan(normalized)) {
      worst_ = normalized;
    } else if (!std::isnan(worst_)) {
      worst_ = std::max(worst_, normalized);
    }
    touched_ = true;
  }

  Finding finding(std::string note = {}) const {
    Finding f{name_, Verdict::pass, worst_, tolerance_, std::move(note)};
    if (!touched_) f.verdict = Verdict::not_applicable;
    if (failed_) {
      f.verdict = Verdict::fail;
      f.detail = "first violation at " + where_ + (f.detail.empty() ? "" : "; " + f.detail);
    }
    return f;
  }

 private:
  std::string name_;
  double tolerance_;
  double worst_ = 0.0;
  bool failed_ = false;
  bool touched_ = false;
  std::string where_;
};

std::string at(int k) { return "iteration " + std::to_string(k); }

int step_count(const IterateTrace& t) { return static_cast<int>(t.iterations.size()); }

/// x_{k+1} = x_k + alpha_k p_k and g_k = H x_k + c for every record.
Finding recurrence(const IterateTrace& t, const QuadraticProblem& prob) {
  Bound bound("iterate-recurrence", 1e-10);
  const double g0 = t.iterations.empty() ? t.final_g.norm() : t.iterations.front().g.norm();
  const double hnorm = prob.hessian_norm1();
  for (std::size_t k = 0; k <= t.iterations.size(); ++k) {
    const Vector& x = t.iterate(k);
    const Vector& g = k < t.iterations.size() ? t.iterations[k].g : t.final_g;
    if (x.size() != prob.n() || g.size() != prob.n()) {
      bound.observe(INFINITY, 1.0, at(static_cast<int>(k)) + " (dimension)");
      continue;
    }
    bound.observe((g - prob.gradient(x)).norm(), g0 + hnorm * x.norm() + prob.linear().norm(),
                  at(static_cast<int>(k)) + " (gradient)");
    if (k > 0) {
      const auto& prev = t.iterations[k - 1];
      bound.observe((x - (prev.x + prev.alpha * prev.p)).norm(), 1.0 + x.norm(), at(static_cast<int>(k)) + " (step)");
    }
  }
  return bound.finding();
}

void add_status_finding(Report& report, const IterateTrace& t) {
  Finding f{"no-breakdown", Verdict::pass, 0.0, 0.0, t.status.reason};
  if (t.status.kind == TraceStatus::Kind::breakdown) f.verdict = Verdict::fail;
  report.findings.push_back(f);
}

}  // namespace

Report check_baseline(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0) {
  const KrylovOracle oracle(prob, x0);
  const int r = oracle.grade();
  const int steps = step_count(trace);
  Report report{"baseline:" + trace.method, r, steps, {}};
  report.findings.push_back(recurrence(trace, prob));
  add_status_finding(report, trace);

  const double g0 = oracle.initial_gradient().norm();
  {
    Finding f{"termination-r", trace.converged() && steps == r ? Verdict::pass : Verdict::fail,
              static_cast<double>(steps), static_cast<double>(r),
              std::string("status ") + to_string(trace.status.kind)};
    report.findings.push_back(f);
  }
  {
    Bound b("terminal-gradient", 1e-8);
    b.observe(trace.final_grad_norm, 1.0 + g0, "final iterate");
    report.findings.push_back(b.finding());
  }

  std::vector<Vector> hp;
  for (const auto& rec : trace.iterations) hp.push_back(prob.apply(rec.p));
  Bound conj("conjugacy", 1e-8);
  Bound orth("gradient-orthogonality", 1e-8);
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      if (i == j) continue;
      const auto& pj = trace.iterations[static_cast<std::size_t>(j)].p;
      conj.observe(std::abs(hp[static_cast<std::size_t>(i)].dot(pj)), hp[static_cast<std::size_t>(i)].norm() * pj.norm(),
                   "pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }
  for (int k = 1; k <= steps; ++k) {
    const Vector& g = k < steps ? trace.iterations[static_cast<std::size_t>(k)].g : trace.final_g;
    for (int i = 0; i < k; ++i) {
      const auto& pi = trace.iterations[static_cast<std::size_t>(i)].p;
      orth.observe(std::abs(g.dot(pi)), g0 * pi.norm(), "g_" + std::to_string(k) + " vs p_" + std::to_string(i));
    }
  }
  report.findings.push_back(conj.finding());
  report.findings.push_back(orth.finding());

  const Vector xstar = exact_solution(prob);
  Bound iter("krylov-iterates", 1e-7);
  for (int k = 0; k <= std::min(steps, r); ++k) {
    iter.observe((trace.iterate(static_cast<std::size_t>(k)) - oracle.minimizer(k)).norm(), 1.0 + xstar.norm(), at(k));
  }
  report.findings.push_back(iter.finding());

  Bound par("direction-parallel", parallel_tolerance(prob));
  for (int k = 0; k < std::min(steps, r); ++k) {
    par.observe(direction_angle(trace.iterations[static_cast<std::size_t>(k)].p, oracle.direction(k)), 1.0, at(k));
  }
  report.findings.push_back(par.finding());
  return report;
}

namespace {

bool is_unit(double alpha) { return std::abs(alpha - 1.0) <= 1e-10; }

/// Approximation B_k as the run built it, from record k-1, with either the
/// recorded H-images or exact products.
SpanApprox rebuild(const IterateTrace& t, std::size_t k, const QuadraticProblem& prob, bool exact_images) {
  const Eigen::Index n = prob.n();
  const auto& r = t.iterations[k - 1];
  const Vector hpn = exact_images || r.HpN.size() == 0 ? prob.apply(r.pN) : r.HpN;
  const Vector hq = exact_images || r.Hq.size() == 0 ? prob.apply(r.q) : r.Hq;
  switch (r.branch) {
    case Branch::exhausted:
      if (r.pN.norm() == 0.0) return SpanApprox::scaled_identity(n, r.sigma);
      return SpanApprox(Matrix(r.pN), Matrix(hpn), r.sigma);
    case Branch::collapsed:
      return SpanApprox(Matrix(r.q), Matrix(hq), r.sigma);
    case Branch::two_column: {
      Matrix p(n, 2), hp(n, 2);
      p << r.pN, r.q;
      hp << hpn, hq;
      return SpanApprox(std::move(p), std::move(hp), r.sigma);
    }
    case Branch::none: break;
  }
  throw InvalidSpec("trace: record " + std::to_string(k - 1) + " has no approximation branch");
}

bool has_subspace_fields(const IterateTrace& t) {
  return std::all_of(t.iterations.begin(), t.iterations.end(), [](const IterationRecord& r) {
    return r.q.size() && r.pN.size() && r.branch != Branch::none;
  });
}

}  // namespace

Report check_theorem1(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0) {
  const KrylovOracle oracle(prob, x0);
  const int r = oracle.grade();
  const int steps = step_count(trace);
  Report report{"theorem1", r, steps, {}};
  report.findings.push_back(recurrence(trace, prob));
  add_status_finding(report, trace);
  if (!has_subspace_fields(trace)) {
    report.findings.push_back({"schema", Verdict::fail, 0.0, 0.0, "trace lacks q / pN / branch fields"});
    return report;
  }

  const Vector xstar = exact_solution(prob);
  const double xscale = 1.0 + xstar.norm();
  const double g0 = oracle.initial_gradient().norm();

  // (a)
  Bound onset("newton-step-onset", 1e-7);
  for (int k = r; k < steps; ++k) {
    const auto& rec = trace.iterations[static_cast<std::size_t>(k)];
    onset.observe((rec.x + rec.p - xstar).norm(), xscale, at(k));
  }
  report.findings.push_back(onset.finding());

  // (b)
  {
    int first_unit = -1;
    for (int k = r; k < steps; ++k) {
      if (is_unit(trace.iterations[static_cast<std::size_t>(k)].alpha)) {
        first_unit = k;
        break;
      }
    }
    Finding f{"termination-rule", Verdict::pass, 0.0, 0.0, {}};
    if (trace.converged()) {
      const int last = steps - 1;
      f.measured = last;
      f.tolerance = first_unit;
      if (steps == 0) {
        f.detail = "initial point already optimal";
      } else if (last >= r && first_unit < 0) {
        // Past r every step is a multiple of the Newton step, so g contracts by
        // (1 - alpha) towards g at the computed Newton target x + p; reaching
        // tol that way is not finite termination.
        const auto& rec = trace.iterations[static_cast<std::size_t>(last)];
        const double keep = 1.0 - rec.alpha;
        const Vector g_target = prob.gradient(rec.x + rec.p);
        // A terminating step would instead collapse g to the rounding floor.
        f.measured = (trace.final_g - keep * rec.g - rec.alpha * g_target).norm() / (std::abs(keep) * rec.g.norm());
        f.tolerance = 0.5;
        if (f.measured <= f.tolerance) {
          f.detail = "no unit step at k >= r; tol reached by (1 - alpha) contraction";
        } else {
          f.verdict = Verdict::fail;
          f.detail = "terminated at non-unit step " + std::to_string(last) + " beyond (1 - alpha) contraction";
        }
      } else if (last >= r) {
        if (first_unit != last) {
          f.verdict = Verdict::fail;
          f.detail = "terminated at step " + std::to_string(last) + " but first unit step with k >= r is " +
                     std::to_string(first_unit);
        } else {
          f.detail = "terminated at the first unit step k = " + std::to_string(last) + " >= r";
        }
      } else if (last == r - 1) {
        f.detail = "terminated in r steps: final productive step was Newton-scaled";
      } else {
        f.verdict = Verdict::fail;
        f.detail = "terminated at step " + std::to_string(last) + " before the Krylov subspace was complete";
      }
    } else if (first_unit >= 0) {
      f.verdict = Verdict::fail;
      f.measured = first_unit;
      f.detail = "unit step at k = " + std::to_string(first_unit) + " >= r did not terminate";
    } else {
      f.detail = "no unit step taken at k >= r";
    }
    report.findings.push_back(f);
  }

  // (c), (d)
  const double par_tol = parallel_tolerance(prob);
  Bound conj("conjugate-directions", par_tol);
  Bound sub("subspace-newton-steps", 1e-8);
  for (int k = 0; k < std::min(steps, r); ++k) {
    const auto& rec = trace.iterations[static_cast<std::size_t>(k)];
    conj.observe(direction_angle(rec.q, oracle.direction(k)), 1.0, at(k));
    const Vector& x_next = trace.iterate(static_cast<std::size_t>(k + 1));
    const Vector g_target = prob.gradient(x_next + rec.pN);
    sub.observe((oracle.basis(k + 1).transpose() * g_target).norm(), g0, at(k));
  }
  report.findings.push_back(conj.finding());
  report.findings.push_back(sub.finding());

  Bound learned("learned-curvature", 1e-7);
  Bound solve("approximation-solve", 1e-8);
  // B p = -g is solved through g + H pN, so its residual is measured against
  // the largest ||g_j|| + ||H pN_{j-1}|| seen so far.
  double solve_scale = 0.0;
  for (int k = 0; k < steps; ++k) {
    const auto& rec = trace.iterations[static_cast<std::size_t>(k)];
    double hpn_prev = 0.0;
    if (k > 0 && trace.iterations[static_cast<std::size_t>(k - 1)].pN.size()) {
      hpn_prev = prob.apply(trace.iterations[static_cast<std::size_t>(k - 1)].pN).norm();
    }
    solve_scale = std::max(solve_scale, rec.g.norm() + hpn_prev);
    if (rec.Hq.size() && rec.q.norm() > 0.0) {
      const Vector hq = prob.apply(rec.q);
      learned.observe((rec.Hq - hq).norm(), hq.norm(), at(k) + " (Hq)");
    }
    if (rec.HpN.size() && rec.pN.norm() > 0.0) {
      const Vector hpn = prob.apply(rec.pN);
      learned.observe((rec.HpN - hpn).norm(), hpn.norm(), at(k) + " (HpN)");
    }
    if (k == 0) {
      // B_0 is a positive multiple of the identity.
      solve.observe(direction_angle(rec.p, -rec.g), 1.0, at(k));
      solve.observe(rec.p.dot(rec.g) < 0.0 ? 0.0 : 1.0, 1.0, at(k) + " (descent)");
    } else {
      try {
        const SpanApprox b = rebuild(trace, static_cast<std::size_t>(k), prob, false);
        solve.observe((b.apply(rec.p) + rec.g).norm(), solve_scale, at(k));
      } catch (const std::exception& e) {
        solve.observe(INFINITY, 1.0, at(k) + " (" + e.what() + ")");
      }
    }
  }
  report.findings.push_back(learned.finding());
  report.findings.push_back(solve.finding());
  return report;
}

Report check_corollary_unit(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0) {
  const KrylovOracle oracle(prob, x0);
  const int r = oracle.grade();
  const int steps = step_count(trace);
  Report report{"corollary-unit", r, steps, {}};
  const bool unit = std::all_of(trace.iterations.begin(), trace.iterations.end(),
                                [](const IterationRecord& rec) { return rec.alpha == 1.0; });
  if (!unit || !has_subspace_fields(trace)) {
    report.findings.push_back({"unit-steps", Verdict::not_applicable, 0.0, 0.0, "trace does not use unit steps"});
    return report;
  }
  if (r == 0) {
    report.findings.push_back({"count-r-or-r+1", steps == 0 ? Verdict::pass : Verdict::fail, double(steps), 0.0, ""});
    return report;
  }

  {
    Finding f{"single-column", Verdict::pass, 0.0, 0.0, {}};
    for (const auto& rec : trace.iterations) {
      if (rec.branch == Branch::two_column) {
        f.verdict = Verdict::fail;
        f.detail = "two-column build at " + at(rec.k);
        break;
      }
    }
    report.findings.push_back(f);
  }

  const bool count_ok = trace.converged() && (steps == r || steps == r + 1);
  report.findings.push_back({"count-r-or-r+1", count_ok ? Verdict::pass : Verdict::fail, double(steps), double(r + 1),
                             std::string("status ") + to_string(trace.status.kind)});

  // Newton sigma of the final productive build, reconstructed from the trace.
  double used = NAN;
  double newton = NAN;
  if (r == 1) {
    const auto& rec = trace.iterations.front();
    used = rec.g.norm() / rec.p.norm();
    const Vector hg = prob.apply(rec.g);
    newton = rec.g.dot(hg) / rec.g.squaredNorm();
  } else if (steps >= r) {
    const auto& build = trace.iterations[static_cast<std::size_t>(r - 2)];
    const auto& next = trace.iterations[static_cast<std::size_t>(r - 1)];
    used = build.sigma;
    try {
      newton = used * newton_sigma(next.q, prob.apply(next.q), next.g);
    } catch (const DegenerateStep&) {
      newton = NAN;
    }
  }
  if (std::isnan(used) || std::isnan(newton)) {
    report.findings.push_back({"newton-sigma-count", Verdict::fail, 0.0, 0.0, "final productive build not in trace"});
  } else {
    const bool is_newton = std::abs(used / newton - 1.0) <= 1e-6;
    const int expected = is_newton ? r : r + 1;
    char buf[96];
    std::snprintf(buf, sizeof buf, "sigma used %.17g, Newton sigma %.17g", used, newton);
    report.findings.push_back({"newton-sigma-count", steps == expected ? Verdict::pass : Verdict::fail, double(steps),
                               double(expected), buf});
  }

  // Uniqueness: the Newton value gives r, a 10% perturbation either way gives r + 1.
  RunOptions options = run_options_from_json(trace.config.is_object() ? trace.config : json::object());
  options.steps = StepPolicy::unit();
  const double elsewhere = options.sigmas.kind == SigmaPolicy::Kind::uniform ? 1.0 : options.sigmas.value;
  Finding uniq{"newton-sigma-unique", Verdict::pass, 0.0, 0.0, {}};
  std::ostringstream counts;
  for (double factor : {1.0, 1.1, 0.9}) {
    options.sigmas = SigmaPolicy::newton_at(r - 2 >= 0 ? r - 2 : -1, elsewhere, factor);
    const IterateTrace rerun = run(prob, x0, options);
    const int expected = factor == 1.0 ? r : r + 1;
    const int got = rerun.converged() ? step_count(rerun) : -1;
    counts << "x" << factor << " -> " << got << "; ";
    if (got != expected) uniq.verdict = Verdict::fail;
  }
  uniq.detail = counts.str();
  report.findings.push_back(uniq);
  return report;
}

Report check_step_equivalence(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0) {
  const KrylovOracle oracle(prob, x0);
  const int r = oracle.grade();
  const int steps = step_count(trace);
  Report report{"step-equivalence", r, steps, {}};
  if (!has_subspace_fields(trace)) {
    report.findings.push_back({"schema", Verdict::fail, 0.0, 0.0, "trace lacks q / pN / branch fields"});
    return report;
  }
  Bound equiv("full-vs-two-vector", 1e-8);
  Bound decomp("step-decomposition", 1e-8);
  ConjugateBasis basis;
  // Rounding in g + H pN is fixed by the early, large steps; later steps are
  // measured against the largest step so far.
  double step_scale = steps > 0 ? trace.iterations.front().p.norm() : 0.0;
  for (int k = 1; k < std::min(steps, r); ++k) {
    const auto& prev = trace.iterations[static_cast<std::size_t>(k - 1)];
    const auto& rec = trace.iterations[static_cast<std::size_t>(k)];
    if (prev.branch == Branch::exhausted) break;
    step_scale = std::max(step_scale, rec.p.norm());
    basis.push(prev.q, prob.apply(prev.q));
    const double sigma = prev.sigma;

    try {
      const SpanApprox full = build_full_memory(basis, sigma);
      const Vector p_full = solve_direction(full, rec.g);
      equiv.observe((p_full - rec.p).norm(), step_scale, at(k));
    } catch (const std::exception& e) {
      equiv.observe(INFINITY, 1.0, at(k) + " (" + e.what() + ")");
    }

    const Vector g_hat = rec.g + prob.apply(prev.pN);
    const Vector& hq = basis.h_images.back();
    const Vector qf = -g_hat + (g_hat.dot(hq) / prev.q.dot(hq)) * prev.q;
    decomp.observe((rec.p - prev.pN - qf / sigma).norm(), step_scale, at(k));
  }
  report.findings.push_back(equiv.finding());
  report.findings.push_back(decomp.finding());
  return report;
}

TraceComparison compare_traces(const IterateTrace& a, const IterateTrace& b) {
  TraceComparison out;
  if (a.iterations.size() != b.iterations.size() || a.status.kind != b.status.kind) {
    out.same_shape = false;
    out.max_relative = INFINITY;
    out.worst_field = "iterations";
    return out;
  }
  using Getter = const Vector& (*)(const IterationRecord&);
  const std::pair<const char*, Getter> fields[] = {
      {"x", [](const IterationRecord& r) -> const Vector& { return r.x; }},
      {"g", [](const IterationRecord& r) -> const Vector& { return r.g; }},
      {"p", [](const IterationRecord& r) -> const Vector& { return r.p; }},
      {"q", [](const IterationRecord& r) -> const Vector& { return r.q; }},
      {"pN", [](const IterationRecord& r) -> const Vector& { return r.pN; }},
  };
  auto note = [&](double dev, const char* field, int k) {
    if (!(dev <= out.max_relative)) {
      out.max_relative = dev;
      out.worst_field = field;
      out.worst_iteration = k;
    }
  };
  for (const auto& [name, get] : fields) {
    double scale = 0.0;
    for (std::size_t k = 0; k < a.iterations.size(); ++k) {
      scale = std::max({scale, get(a.iterations[k]).norm(), get(b.iterations[k]).norm()});
    }
    for (std::size_t k = 0; k < a.iterations.size(); ++k) {
      const Vector& va = get(a.iterations[k]);
      const Vector& vb = get(b.iterations[k]);
      if (va.size() != vb.size()) {
        out.same_shape = false;
        note(INFINITY, name, static_cast<int>(k));
        continue;
      }
      if (scale > 0.0 && va.size()) note((va - vb).norm() / scale, name, static_cast<int>(k));
    }
  }
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    const auto& ra = a.iterations[k];
    const auto& rb = b.iterations[k];
    if (ra.branch != rb.branch) {
      out.same_shape = false;
      note(INFINITY, "branch", static_cast<int>(k));
    }
    note(std::abs(ra.alpha - rb.alpha) / std::max({1.0, std::abs(ra.alpha), std::abs(rb.alpha)}), "alpha",
         static_cast<int>(k));
    if (std::isnan(ra.sigma) != std::isnan(rb.sigma)) {
      note(INFINITY, "sigma", static_cast<int>(k));
    } else if (!std::isnan(ra.sigma)) {
      note(std::abs(ra.sigma - rb.sigma) / std::max(std::abs(ra.sigma), std::abs(rb.sigma)), "sigma",
           static_cast<int>(k));
    }
  }
  const double xs = std::max({1.0, a.final_x.norm(), b.final_x.norm()});
  note((a.final_x - b.final_x).norm() / xs, "final.x", static_cast<int>(a.iterations.size()));
  return out;
}

std::vector<Report> verify_trace(const IterateTrace& trace, const QuadraticProblem& prob, const Vector& x0) {
  if (trace.method == "qn-subspace") {
    std::vector<Report> reports{check_theorem1(trace, prob, x0)};
    Report corollary = check_corollary_unit(trace, prob, x0);
    if (corollary.verdict() != Verdict::not_applicable) reports.push_back(std::move(corollary));
    return reports;
  }
  if (trace.method == "cg" || trace.method == "bfgs" || trace.method == "memoryless") {
    return {check_baseline(trace, prob, x0)};
  }
  throw InvalidSpec("trace: unknown method '" + trace.method + "'");
}

}  // namespace qns
