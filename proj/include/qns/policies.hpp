#pragma once

#include "qns/linalg.hpp"
#include "qns/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace qns {

/// How the step size alpha_k is chosen. Never yields alpha = 0.
struct StepPolicy {
  enum class Kind { unit, constant, uniform, exact_line_search, schedule, unit_after };

  Kind kind = Kind::unit;
  double value = 1.0;            // constant
  double lo = 0.1, hi = 2.0;     // uniform
  double exclusion = 0.05;       // uniform draws with |alpha| < exclusion are redrawn
  std::vector<double> values;    // schedule
  int after = 0;                 // unit_after: base policy for k < after, then 1
  std::shared_ptr<const StepPolicy> base;  // schedule tail / unit_after head; unit when null

  static StepPolicy unit();
  static StepPolicy constant(double alpha);
  static StepPolicy uniform(double lo, double hi);
  static StepPolicy exact_line_search();
  static StepPolicy schedule(std::vector<double> alphas, std::shared_ptr<const StepPolicy> then = nullptr);
  static StepPolicy unit_after(int k, std::shared_ptr<const StepPolicy> before);

  /// Throws InvalidSpec for configurations that could emit alpha = 0.
  void validate() const;
  bool always_unit() const;
};

/// How the complement scaling sigma_k is chosen. Always positive.
struct SigmaPolicy {
  enum class Kind { constant, uniform, newton_at };

  Kind kind = Kind::constant;
  double value = 1.0;           // constant, and newton_at away from `at`
  double lo = 0.5, hi = 2.0;    // uniform
  int at = 0;                   // newton_at; -1 scales B_0 itself
  double factor = 1.0;          // multiplies the Newton value (perturbation studies)

  static SigmaPolicy constant(double sigma);
  static SigmaPolicy uniform(double lo, double hi);
  static SigmaPolicy newton_at(int k, double elsewhere = 1.0, double factor = 1.0);

  void validate() const;
};

nlohmann::json to_json(const StepPolicy& p);
nlohmann::json to_json(const SigmaPolicy& p);
/// Forms: "unit" | {"kind": "constant", "value"} | {"kind": "uniform", "lo", "hi"}
/// | "exact" | {"kind": "schedule", "values", "then"} | {"kind": "unit-after", "k", "base"}.
StepPolicy step_policy_from_json(const nlohmann::json& j, const std::string& where = "");
/// Forms: {"kind": "constant", "value"} | {"kind": "uniform", "lo", "hi"}
/// | {"kind": "newton-at", "k", "value", "factor"}; a bare number is a constant.
SigmaPolicy sigma_policy_from_json(const nlohmann::json& j, const std::string& where = "");

/// What a step policy may look at when choosing alpha_k.
struct StepContext {
  int k = 0;
  const Vector* g = nullptr;
  const Vector* p = nullptr;
  /// Returns p'Hp; may cost a gradient evaluation.
  std::function<double()> curvature;
};

class StepSampler {
 public:
  StepSampler(StepPolicy policy, std::uint64_t seed);
  double next(const StepContext& ctx);

 private:
  double draw(const StepPolicy& policy, const StepContext& ctx);

  StepPolicy policy_;
  Rng rng_;
};

struct SigmaContext {
  int k = 0;
  /// Newton sigma for the approximation about to be built.
  std::function<double()> newton;
};

class SigmaSampler {
 public:
  SigmaSampler(SigmaPolicy policy, std::uint64_t seed);
  double next(const SigmaContext& ctx);
  /// Scaling of B_0.
  double initial(double fallback, const std::function<double()>& newton) const;

 private:
  SigmaPolicy policy_;
  Rng rng_;
};

}  // namespace qns
