#pragma once

#include "qns/quadratic_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace qns {

/// A problem instance as stored on disk:
///   {"id", "n", "H": row-major, "c", "x0", "seed", "spec"}
/// Floats are written with round-trip precision, so reading back a written
/// record reproduces every double exactly.
struct ProblemRecord {
  std::string id;
  QuadraticProblem problem;
  Vector x0;
  std::uint64_t seed = 0;
  /// Generation spec, or null for hand-written instances.
  nlohmann::json spec;
};

nlohmann::json vector_to_json(const Vector& v);
/// Throws InvalidSpec naming `where` when the value is not a numeric array.
Vector vector_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json problem_to_json(const ProblemRecord& record);
ProblemRecord problem_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const ProblemSpec& spec);
/// Accepts {n, eigenvalues | cond, r, seed, random_x0}. Error messages carry
/// the JSON pointer of the offending field, prefixed by `where`.
ProblemSpec spec_from_json(const nlohmann::json& j, const std::string& where = "");

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace qns
