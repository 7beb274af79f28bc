#include "qns/trace.hpp"

#include "qns/errors.hpp"
#include "qns/problem_io.hpp"

#include <cmath>

namespace qns {

using nlohmann::json;

const char* to_string(Branch b) {
  switch (b) {
    case Branch::none: return "none";
    case Branch::two_column: return "two-column";
    case Branch::collapsed: return "collapsed";
    case Branch::exhausted: return "exhausted";
  }
  return "none";
}

Branch branch_from_string(const std::string& s) {
  if (s == "none") return Branch::none;
  if (s == "two-column") return Branch::two_column;
  if (s == "collapsed") return Branch::collapsed;
  if (s == "exhausted") return Branch::exhausted;
  throw InvalidSpec("trace: unknown branch '" + s + "'");
}

const char* to_string(TraceStatus::Kind k) {
  switch (k) {
    case TraceStatus::Kind::converged: return "converged";
    case TraceStatus::Kind::max_iter: return "max-iter";
    case TraceStatus::Kind::breakdown: return "breakdown";
  }
  return "converged";
}

const Vector& IterateTrace::iterate(std::size_t k) const {
  if (k < iterations.size()) return iterations[k].x;
  if (k == iterations.size()) return final_x;
  throw OutOfRange("trace has no iterate " + std::to_string(k));
}

namespace {

json scalar_or_null(double v) { return std::isnan(v) ? json() : json(v); }

double scalar_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j[key].is_number()) throw InvalidSpec(std::string("trace: '") + key + "' must be a number");
  return j[key].get<double>();
}

Vector optional_vector(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return Vector();
  return vector_from_json(j[key], where + "/" + key);
}

}  // namespace

json trace_to_json(const IterateTrace& trace) {
  json iters = json::array();
  for (const auto& r : trace.iterations) {
    json rec;
    rec["k"] = r.k;
    rec["x"] = vector_to_json(r.x);
    rec["g"] = vector_to_json(r.g);
    rec["p"] = vector_to_json(r.p);
    if (r.q.size()) rec["q"] = vector_to_json(r.q);
    if (r.pN.size()) rec["pN"] = vector_to_json(r.pN);
    if (r.Hp.size()) rec["Hp"] = vector_to_json(r.Hp);
    if (r.Hq.size()) rec["Hq"] = vector_to_json(r.Hq);
    if (r.HpN.size()) rec["HpN"] = vector_to_json(r.HpN);
    rec["alpha"] = r.alpha;
    rec["sigma"] = scalar_or_null(r.sigma);
    rec["grad_norm"] = r.grad_norm;
    rec["branch"] = to_string(r.branch);
    rec["near_threshold"] = r.near_threshold;
    iters.push_back(std::move(rec));
  }
  json out;
  out["method"] = trace.method;
  out["config"] = trace.config;
  out["status"] = {{"kind", to_string(trace.status.kind)},
                   {"iterations", trace.status.iterations},
                   {"reason", trace.status.reason}};
  out["initial_grad_norm"] = trace.initial_grad_norm;
  out["final"] = {{"x", vector_to_json(trace.final_x)},
                  {"g", vector_to_json(trace.final_g)},
                  {"grad_norm", trace.final_grad_norm}};
  out["warnings"] = trace.warnings;
  out["iterations"] = std::move(iters);
  return out;
}

IterateTrace trace_from_json(const json& j) {
  if (!j.is_object()) throw InvalidSpec("trace: expected an object");
  for (const char* key : {"method", "status", "final", "iterations"}) {
    if (!j.contains(key)) throw InvalidSpec(std::string("trace: missing field /") + key);
  }
  IterateTrace t;
  t.method = j["method"].get<std::string>();
  t.config = j.value("config", json::object());
  const json& st = j["status"];
  const std::string kind = st.at("kind").get<std::string>();
  if (kind == "converged") t.status.kind = TraceStatus::Kind::converged;
  else if (kind == "max-iter") t.status.kind = TraceStatus::Kind::max_iter;
  else if (kind == "breakdown") t.status.kind = TraceStatus::Kind::breakdown;
  else throw InvalidSpec("trace: unknown status kind '" + kind + "'");
  t.status.iterations = st.at("iterations").get<int>();
  t.status.reason = st.value("reason", std::string());
  t.initial_grad_norm = scalar_from(j, "initial_grad_norm");
  t.final_x = vector_from_json(j["final"].at("x"), "trace: /final/x");
  t.final_g = vector_from_json(j["final"].at("g"), "trace: /final/g");
  t.final_grad_norm = scalar_from(j["final"], "grad_norm");
  if (j.contains("warnings")) t.warnings = j["warnings"].get<std::vector<std::string>>();
  if (!j["iterations"].is_array()) throw InvalidSpec("trace: /iterations must be an array");
  std::size_t idx = 0;
  for (const auto& rec : j["iterations"]) {
    const std::string where = "trace: /iterations/" + std::to_string(idx++);
    IterationRecord r;
    r.k = rec.at("k").get<int>();
    r.x = vector_from_json(rec.at("x"), where + "/x");
    r.g = vector_from_json(rec.at("g"), where + "/g");
    r.p = vector_from_json(rec.at("p"), where + "/p");
    r.q = optional_vector(rec, "q", where);
    r.pN = optional_vector(rec, "pN", where);
    r.Hp = optional_vector(rec, "Hp", where);
    r.Hq = optional_vector(rec, "Hq", where);
    r.HpN = optional_vector(rec, "HpN", where);
    r.alpha = scalar_from(rec, "alpha");
    r.sigma = scalar_from(rec, "sigma");
    r.grad_norm = scalar_from(rec, "grad_norm");
    r.branch = branch_from_string(rec.value("branch", std::string("none")));
    r.near_threshold = rec.value("near_threshold", false);
    t.iterations.push_back(std::move(r));
  }
  return t;
}

}  // namespace qns
