#include "qns/qn_algorithm.hpp"

#include "qns/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace qns {

using nlohmann::json;

const char* to_string(Mode m) { return m == Mode::oracle ? "oracle" : "matrix-free"; }

Mode mode_from_string(const std::string& s) {
  if (s == "oracle" || s == "oracle-H") return Mode::oracle;
  if (s == "matrix-free") return Mode::matrix_free;
  throw InvalidSpec("unknown mode '" + s + "' (expected oracle or matrix-free)");
}

json to_json(const RunOptions& o) {
  json out;
  out["solver"] = "qn-subspace";
  out["mode"] = to_string(o.mode);
  out["step"] = to_json(o.steps);
  out["sigma"] = to_json(o.sigmas);
  out["tol"] = o.tol;
  out["max_iter"] = o.max_iter ? json(*o.max_iter) : json();
  out["initial_sigma"] = o.initial_sigma;
  out["seed"] = o.seed;
  return out;
}

RunOptions run_options_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw InvalidSpec(where + ": expected an object");
  RunOptions o;
  if (j.contains("mode")) o.mode = mode_from_string(j["mode"].get<std::string>());
  if (j.contains("step")) o.steps = step_policy_from_json(j["step"], where + "/step");
  if (j.contains("sigma")) o.sigmas = sigma_policy_from_json(j["sigma"], where + "/sigma");
  if (j.contains("tol")) o.tol = j["tol"].get<double>();
  if (j.contains("max_iter") && !j["max_iter"].is_null()) o.max_iter = j["max_iter"].get<int>();
  if (j.contains("initial_sigma")) o.initial_sigma = j["initial_sigma"].get<double>();
  if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
  return o;
}

LearnedAction learn_h_action(const Vector& g_next, const Vector& g_curr, double alpha, const Vector& q,
                             const Vector& HpN_prev) {
  if (alpha == 0.0) throw InvalidSpec("learn_h_action: alpha must be nonzero");
  LearnedAction out;
  out.Hp = (g_next - g_curr) / alpha;
  out.Hq = out.Hp - HpN_prev;
  out.q_curvature = q.dot(out.Hq);
  out.keep = 1.0 - alpha;
  out.along_q = out.q_curvature > 0.0 ? -(g_curr.dot(q) / out.q_curvature + alpha)
                                      : std::numeric_limits<double>::quiet_NaN();
  out.HpN_next = out.keep * HpN_prev + out.along_q * out.Hq;
  return out;
}

namespace {

/// H*v at a point with gradient g_at. Matrix-free mode spends one gradient.
class Prober {
 public:
  Prober(const QuadraticProblem& prob, Mode mode) : prob_(prob), mode_(mode) {}

  Vector operator()(const Vector& at, const Vector& g_at, const Vector& v) const {
    if (mode_ == Mode::oracle) return prob_.apply(v);
    return prob_.gradient(at + v) - g_at;
  }

 private:
  const QuadraticProblem& prob_;
  Mode mode_;
};

void finalize(IterateTrace& trace, const Vector& x, const Vector& g, TraceStatus::Kind kind, int steps,
              std::string reason = {}) {
  trace.final_x = x;
  trace.final_g = g;
  trace.final_grad_norm = g.norm();
  trace.status.kind = kind;
  trace.status.iterations = steps;
  trace.status.reason = std::move(reason);
}

}  // namespace

IterateTrace run(const QuadraticProblem& prob, const Vector& x0, const RunOptions& options) {
  if (!(options.tol > 0.0)) throw InvalidSpec("tol must be positive");
  if (!(options.initial_sigma > 0.0)) throw InvalidSpec("initial sigma must be positive");
  if (x0.size() != prob.n()) throw DimensionMismatch("run: x0 has wrong dimension");
  const Eigen::Index n = prob.n();
  const int max_iter = options.max_iter.value_or(static_cast<int>(n) + 5);
  if (max_iter < 1) throw InvalidSpec("max_iter must be >= 1");

  StepSampler steps(options.steps, derive_seed(options.seed, 1));
  SigmaSampler sigmas(options.sigmas, derive_seed(options.seed, 2));
  const Prober probe(prob, options.mode);
  const bool oracle = options.mode == Mode::oracle;

  IterateTrace trace;
  trace.method = "qn-subspace";
  trace.config = to_json(options);

  Vector x = x0;
  Vector g = prob.gradient(x);
  trace.initial_grad_norm = g.norm();
  const double threshold = options.tol * (1.0 + trace.initial_grad_norm);
  if (g.norm() <= threshold) {
    finalize(trace, x, g, TraceStatus::Kind::converged, 0);
    return trace;
  }

  double sigma0 = options.initial_sigma;
  sigma0 = sigmas.initial(sigma0, [&] {
    const Vector q = -g;
    return newton_sigma(q, probe(x, g, q), g);
  });
  if (!(sigma0 > 0.0)) throw NotPositiveDefinite("initial sigma must be positive");

  SpanApprox b = SpanApprox::scaled_identity(n, sigma0);
  Vector pN = Vector::Zero(n);
  Vector HpN = Vector::Zero(n);
  Vector g_hat = g;
  // Rounding floor of g_hat: eps * max(||g|| + ||H pN||) * (spread of ||Hq||/||q||).
  double gradient_scale = 0.0;
  double rayleigh_max = 0.0;
  double rayleigh_min = std::numeric_limits<double>::infinity();

  for (int k = 0;; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.x = x;
    rec.g = g;
    rec.grad_norm = g.norm();
    // B pN = H pN by construction, so B p = -g is solved as B q = -g_hat with
    // p = pN + q. g_hat = g + H pN is carried by its own recurrence and
    // resynchronised whenever pN vanishes.
    if (pN.norm() == 0.0) g_hat = g;
    gradient_scale = std::max(gradient_scale, g.norm() + HpN.norm());
    const double noise_floor = std::numeric_limits<double>::epsilon() * gradient_scale * (rayleigh_max / rayleigh_min);
    const bool exhausted = k > 0 && pN.norm() > 0.0 && g_hat.norm() <= kExhaustedFactor * noise_floor;
    const Vector q_solve = exhausted ? Vector(Vector::Zero(n)) : b.solve(-g_hat);
    const Vector p = pN + q_solve;
    rec.p = p;

    StepContext sctx{k, &g, &p, [&] { return p.dot(probe(x, g, p)); }};
    const double alpha = steps.next(sctx);
    rec.alpha = alpha;

    const Vector x_next = x + alpha * p;
    const Vector g_next = prob.gradient(x_next);
    const bool converged = g_next.norm() <= threshold;
    rec.Hp = oracle ? prob.apply(p) : Vector((g_next - g) / alpha);

    Vector q = Vector::Zero(n);
    Vector Hq = Vector::Zero(n);
    if (exhausted) {
      pN *= 1.0 - alpha;
      HpN = oracle ? Vector(prob.apply(pN)) : Vector((1.0 - alpha) * HpN);
      rec.branch = Branch::exhausted;
    } else {
      q = q_solve;
      double qhq = 0.0;
      if (oracle) {
        Hq = prob.apply(q);
        qhq = q.dot(Hq);
      } else {
        LearnedAction learned = learn_h_action(g_next, g, alpha, q, HpN);
        Hq = std::move(learned.Hq);
        qhq = learned.q_curvature;
      }
      if (!(qhq > 1e-14 * q.norm() * Hq.norm())) {
        rec.q = q;
        rec.Hq = Hq;
        trace.iterations.push_back(std::move(rec));
        if (converged) {
          finalize(trace, x_next, g_next, TraceStatus::Kind::converged, k + 1);
        } else {
          finalize(trace, x_next, g_next, TraceStatus::Kind::breakdown, k + 1,
                   "q'Hq = " + std::to_string(qhq) + " vanished at iteration " + std::to_string(k));
        }
        return trace;
      }
      rayleigh_max = std::max(rayleigh_max, Hq.norm() / q.norm());
      rayleigh_min = std::min(rayleigh_min, Hq.norm() / q.norm());
      const double keep = 1.0 - alpha;
      // g_hat'q equals g'q in exact arithmetic (q is H-conjugate to pN) and
      // does not carry the rounding of the large H pN component.
      const double beta = -g_hat.dot(q) / qhq;
      const double along_q = beta - alpha;
      g_hat += beta * Hq;
      pN = keep * pN + along_q * q;
      HpN = oracle ? Vector(prob.apply(pN)) : Vector(keep * HpN + along_q * Hq);
      const PairShape shape = classify_pair(pN, q);
      rec.branch = shape.branch;
      rec.near_threshold = shape.near_threshold;
      if (shape.near_threshold) {
        trace.warnings.push_back("iteration " + std::to_string(k) + ": parallel test near its threshold");
      }
    }
    rec.q = q;
    rec.Hq = Hq;
    rec.pN = pN;
    rec.HpN = HpN;

    x = x_next;
    g = g_next;
    if (converged) {
      trace.iterations.push_back(std::move(rec));
      finalize(trace, x, g, TraceStatus::Kind::converged, k + 1);
      return trace;
    }
    if (k + 1 >= max_iter) {
      trace.iterations.push_back(std::move(rec));
      finalize(trace, x, g, TraceStatus::Kind::max_iter, k + 1);
      return trace;
    }

    auto build = [&](double sigma) {
      if (rec.branch == Branch::exhausted) {
        if (pN.norm() == 0.0) return SpanApprox::scaled_identity(n, sigma);
        return SpanApprox(Matrix(pN), Matrix(HpN), sigma);
      }
      return build_two_vector(pN, HpN, q, Hq, sigma).approx;
    };
    SigmaContext sig_ctx{k, [&] {
                           // Newton sigma from a trial build with sigma = 1: the trial
                           // increment qf then scales as 1/sigma.
                           const Vector qf = build(1.0).solve(pN.norm() == 0.0 ? Vector(-g) : Vector(-g_hat));
                           return newton_sigma(qf, probe(x, g, qf), g);
                         }};
    double sigma = 0.0;
    try {
      sigma = sigmas.next(sig_ctx);
    } catch (const DegenerateStep&) {
      sigma = options.sigmas.value;
      trace.warnings.push_back("iteration " + std::to_string(k) + ": Newton sigma undefined, using " +
                               std::to_string(sigma));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      trace.warnings.push_back("iteration " + std::to_string(k) + ": Newton sigma " + std::to_string(sigma) +
                               " not positive, using " + std::to_string(options.sigmas.value));
      sigma = options.sigmas.value;
    }
    rec.sigma = sigma;
    b = build(sigma);
    trace.iterations.push_back(std::move(rec));
  }
}

}  // namespace qns
