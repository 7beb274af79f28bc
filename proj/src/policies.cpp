#include "qns/policies.hpp"

#include "qns/errors.hpp"

#include <cmath>
#include <string>

namespace qns {

using nlohmann::json;

StepPolicy StepPolicy::unit() { return StepPolicy{}; }

StepPolicy StepPolicy::constant(double alpha) {
  StepPolicy p;
  p.kind = Kind::constant;
  p.value = alpha;
  return p;
}

StepPolicy StepPolicy::uniform(double lo, double hi) {
  StepPolicy p;
  p.kind = Kind::uniform;
  p.lo = lo;
  p.hi = hi;
  return p;
}

StepPolicy StepPolicy::exact_line_search() {
  StepPolicy p;
  p.kind = Kind::exact_line_search;
  return p;
}

StepPolicy StepPolicy::schedule(std::vector<double> alphas, std::shared_ptr<const StepPolicy> then) {
  StepPolicy p;
  p.kind = Kind::schedule;
  p.values = std::move(alphas);
  p.base = std::move(then);
  return p;
}

StepPolicy StepPolicy::unit_after(int k, std::shared_ptr<const StepPolicy> before) {
  StepPolicy p;
  p.kind = Kind::unit_after;
  p.after = k;
  p.base = std::move(before);
  return p;
}

void StepPolicy::validate() const {
  switch (kind) {
    case Kind::unit:
    case Kind::exact_line_search:
      break;
    case Kind::constant:
      if (value == 0.0 || !std::isfinite(value)) throw InvalidSpec("constant step must be finite and nonzero");
      break;
    case Kind::uniform:
      if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidSpec("uniform step needs lo < hi");
      if (!(exclusion > 0.0)) throw InvalidSpec("uniform step exclusion must be positive");
      if (lo >= -exclusion && hi <= exclusion) throw InvalidSpec("uniform step range lies inside the excluded band");
      break;
    case Kind::schedule:
      for (double a : values) {
        if (a == 0.0 || !std::isfinite(a)) throw InvalidSpec("scheduled steps must be finite and nonzero");
      }
      break;
    case Kind::unit_after:
      if (after < 0) throw InvalidSpec("unit-after index must be >= 0");
      break;
  }
  if (base) base->validate();
}

bool StepPolicy::always_unit() const {
  switch (kind) {
    case Kind::unit: return true;
    case Kind::constant: return value == 1.0;
    case Kind::schedule: {
      for (double a : values) {
        if (a != 1.0) return false;
      }
      return !base || base->always_unit();
    }
    case Kind::unit_after: return after == 0 || !base || base->always_unit();
    default: return false;
  }
}

SigmaPolicy SigmaPolicy::constant(double sigma) {
  SigmaPolicy p;
  p.value = sigma;
  return p;
}

SigmaPolicy SigmaPolicy::uniform(double lo, double hi) {
  SigmaPolicy p;
  p.kind = Kind::uniform;
  p.lo = lo;
  p.hi = hi;
  return p;
}

SigmaPolicy SigmaPolicy::newton_at(int k, double elsewhere, double factor) {
  SigmaPolicy p;
  p.kind = Kind::newton_at;
  p.at = k;
  p.value = elsewhere;
  p.factor = factor;
  return p;
}

void SigmaPolicy::validate() const {
  if (!(value > 0.0) || !std::isfinite(value)) throw InvalidSpec("sigma must be positive and finite");
  if (kind == Kind::uniform && !(lo > 0.0 && hi > lo && std::isfinite(hi))) {
    throw InvalidSpec("uniform sigma needs 0 < lo < hi");
  }
  if (kind == Kind::newton_at) {
    if (at < -1) throw InvalidSpec("newton-at index must be >= -1");
    if (!(factor > 0.0) || !std::isfinite(factor)) throw InvalidSpec("newton-at factor must be positive");
  }
}

json to_json(const StepPolicy& p) {
  switch (p.kind) {
    case StepPolicy::Kind::unit: return "unit";
    case StepPolicy::Kind::exact_line_search: return "exact";
    case StepPolicy::Kind::constant: return {{"kind", "constant"}, {"value", p.value}};
    case StepPolicy::Kind::uniform:
      return {{"kind", "uniform"}, {"lo", p.lo}, {"hi", p.hi}, {"exclusion", p.exclusion}};
    case StepPolicy::Kind::schedule: {
      json out = {{"kind", "schedule"}, {"values", p.values}};
      if (p.base) out["then"] = to_json(*p.base);
      return out;
    }
    case StepPolicy::Kind::unit_after: {
      json out = {{"kind", "unit-after"}, {"k", p.after}};
      if (p.base) out["base"] = to_json(*p.base);
      return out;
    }
  }
  return "unit";
}

json to_json(const SigmaPolicy& p) {
  switch (p.kind) {
    case SigmaPolicy::Kind::constant: return {{"kind", "constant"}, {"value", p.value}};
    case SigmaPolicy::Kind::uniform: return {{"kind", "uniform"}, {"lo", p.lo}, {"hi", p.hi}};
    case SigmaPolicy::Kind::newton_at:
      return {{"kind", "newton-at"}, {"k", p.at}, {"value", p.value}, {"factor", p.factor}};
  }
  return {{"kind", "constant"}, {"value", p.value}};
}

namespace {

double number_at(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number()) throw InvalidSpec(where + "/" + key + ": expected a number");
  return j[key].get<double>();
}

}  // namespace

StepPolicy step_policy_from_json(const json& j, const std::string& where) {
  StepPolicy p;
  const std::string kind = j.is_string() ? j.get<std::string>() : (j.is_object() ? j.value("kind", std::string()) : "");
  if (kind == "unit") {
    p = StepPolicy::unit();
  } else if (kind == "exact" || kind == "exact-line-search") {
    p = StepPolicy::exact_line_search();
  } else if (kind == "constant") {
    p = StepPolicy::constant(number_at(j, "value", where));
  } else if (kind == "uniform") {
    p = StepPolicy::uniform(j.contains("lo") ? number_at(j, "lo", where) : 0.1,
                            j.contains("hi") ? number_at(j, "hi", where) : 2.0);
    if (j.contains("exclusion")) p.exclusion = number_at(j, "exclusion", where);
  } else if (kind == "schedule") {
    if (!j.contains("values") || !j["values"].is_array()) throw InvalidSpec(where + "/values: expected an array");
    std::vector<double> values;
    for (std::size_t i = 0; i < j["values"].size(); ++i) {
      const json& v = j["values"][i];
      if (!v.is_number()) throw InvalidSpec(where + "/values/" + std::to_string(i) + ": expected a number");
      values.push_back(v.get<double>());
    }
    std::shared_ptr<const StepPolicy> then;
    if (j.contains("then")) then = std::make_shared<StepPolicy>(step_policy_from_json(j["then"], where + "/then"));
    p = StepPolicy::schedule(std::move(values), std::move(then));
  } else if (kind == "unit-after") {
    if (!j.contains("k") || !j["k"].is_number_integer()) throw InvalidSpec(where + "/k: expected an integer");
    std::shared_ptr<const StepPolicy> base;
    if (j.contains("base")) base = std::make_shared<StepPolicy>(step_policy_from_json(j["base"], where + "/base"));
    p = StepPolicy::unit_after(j["k"].get<int>(), std::move(base));
  } else {
    throw InvalidSpec(where + ": unknown step policy '" + (j.is_string() ? j.get<std::string>() : j.dump()) + "'");
  }
  try {
    p.validate();
  } catch (const InvalidSpec& e) {
    throw InvalidSpec(where + ": " + e.what());
  }
  return p;
}

SigmaPolicy sigma_policy_from_json(const json& j, const std::string& where) {
  SigmaPolicy p;
  if (j.is_number()) {
    p = SigmaPolicy::constant(j.get<double>());
  } else if (j.is_object()) {
    const std::string kind = j.value("kind", std::string());
    if (kind == "constant") {
      p = SigmaPolicy::constant(number_at(j, "value", where));
    } else if (kind == "uniform") {
      p = SigmaPolicy::uniform(j.contains("lo") ? number_at(j, "lo", where) : 0.5,
                               j.contains("hi") ? number_at(j, "hi", where) : 2.0);
    } else if (kind == "newton-at") {
      if (!j.contains("k") || !j["k"].is_number_integer()) throw InvalidSpec(where + "/k: expected an integer");
      p = SigmaPolicy::newton_at(j["k"].get<int>(), j.contains("value") ? number_at(j, "value", where) : 1.0,
                                 j.contains("factor") ? number_at(j, "factor", where) : 1.0);
    } else {
      throw InvalidSpec(where + ": unknown sigma policy '" + kind + "'");
    }
  } else {
    throw InvalidSpec(where + ": expected a sigma policy object or number");
  }
  try {
    p.validate();
  } catch (const InvalidSpec& e) {
    throw InvalidSpec(where + ": " + e.what());
  }
  return p;
}

StepSampler::StepSampler(StepPolicy policy, std::uint64_t seed) : policy_(std::move(policy)), rng_(seed) {
  policy_.validate();
}

double StepSampler::next(const StepContext& ctx) {
  const double alpha = draw(policy_, ctx);
  if (alpha == 0.0 || !std::isfinite(alpha)) {
    throw InvalidSpec("step policy produced alpha = " + std::to_string(alpha) + " at iteration " + std::to_string(ctx.k));
  }
  return alpha;
}

double StepSampler::draw(const StepPolicy& policy, const StepContext& ctx) {
  switch (policy.kind) {
    case StepPolicy::Kind::unit: return 1.0;
    case StepPolicy::Kind::constant: return policy.value;
    case StepPolicy::Kind::uniform: {
      double a = rng_.uniform(policy.lo, policy.hi);
      while (std::abs(a) < policy.exclusion) a = rng_.uniform(policy.lo, policy.hi);
      return a;
    }
    case StepPolicy::Kind::exact_line_search: {
      const double curvature = ctx.curvature();
      if (!(curvature > 0.0)) throw NotPositiveDefinite("exact line search: p'Hp is not positive");
      return -ctx.g->dot(*ctx.p) / curvature;
    }
    case StepPolicy::Kind::schedule:
      if (ctx.k < static_cast<int>(policy.values.size())) return policy.values[static_cast<std::size_t>(ctx.k)];
      return policy.base ? draw(*policy.base, ctx) : 1.0;
    case StepPolicy::Kind::unit_after:
      if (ctx.k >= policy.after) return 1.0;
      return policy.base ? draw(*policy.base, ctx) : 1.0;
  }
  return 1.0;
}

SigmaSampler::SigmaSampler(SigmaPolicy policy, std::uint64_t seed) : policy_(policy), rng_(seed) { policy_.validate(); }

double SigmaSampler::next(const SigmaContext& ctx) {
  switch (policy_.kind) {
    case SigmaPolicy::Kind::constant: return policy_.value;
    case SigmaPolicy::Kind::uniform: return rng_.uniform(policy_.lo, policy_.hi);
    case SigmaPolicy::Kind::newton_at:
      if (ctx.k == policy_.at) return policy_.factor * ctx.newton();
      return policy_.value;
  }
  return policy_.value;
}

double SigmaSampler::initial(double fallback, const std::function<double()>& newton) const {
  if (policy_.kind == SigmaPolicy::Kind::newton_at && policy_.at == -1) return policy_.factor * newton();
  return fallback;
}

}  // namespace qns
