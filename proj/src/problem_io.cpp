#include "qns/problem_io.hpp"

#include "qns/errors.hpp"

#include <fstream>
#include <sstream>

namespace qns {

using nlohmann::json;

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw InvalidSpec(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidSpec(where + "/" + std::to_string(i) + ": expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json problem_to_json(const ProblemRecord& record) {
  const auto& h = record.problem.hessian();
  json rows = json::array();
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index jx = 0; jx < h.cols(); ++jx) rows.push_back(h(i, jx));
  }
  json out;
  out["id"] = record.id;
  out["n"] = record.problem.n();
  out["H"] = std::move(rows);
  out["c"] = vector_to_json(record.problem.linear());
  out["x0"] = vector_to_json(record.x0);
  out["seed"] = record.seed;
  out["spec"] = record.spec;
  return out;
}

ProblemRecord problem_from_json(const json& j) {
  if (!j.is_object()) throw InvalidSpec("problem: expected an object");
  for (const char* key : {"n", "H", "c"}) {
    if (!j.contains(key)) throw InvalidSpec(std::string("problem: missing field /") + key);
  }
  if (!j["n"].is_number_unsigned()) throw InvalidSpec("problem: /n must be a positive integer");
  const auto n = j["n"].get<Eigen::Index>();
  const Vector flat = vector_from_json(j["H"], "problem: /H");
  if (flat.size() != n * n) throw InvalidSpec("problem: /H must hold n*n entries");
  Matrix h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < n; ++c) h(i, c) = flat(i * n + c);
  }
  Vector c = vector_from_json(j["c"], "problem: /c");
  Vector x0 = j.contains("x0") ? vector_from_json(j["x0"], "problem: /x0") : Vector::Zero(n);
  if (c.size() != n || x0.size() != n) throw InvalidSpec("problem: /c and /x0 must have n entries");
  ProblemRecord record{j.value("id", std::string("problem")), QuadraticProblem(std::move(h), std::move(c)),
                       std::move(x0), 0, j.value("spec", json())};
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InvalidSpec("problem: /seed must be an unsigned integer");
    record.seed = j["seed"].get<std::uint64_t>();
  }
  return record;
}

json spec_to_json(const ProblemSpec& spec) {
  json out;
  out["n"] = spec.n;
  if (spec.eigenvalues) out["eigenvalues"] = *spec.eigenvalues;
  if (spec.condition) out["cond"] = *spec.condition;
  out["r"] = spec.grade;
  out["seed"] = spec.seed;
  if (spec.random_start) out["random_x0"] = true;
  return out;
}

ProblemSpec spec_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw InvalidSpec(where + ": expected an object");
  ProblemSpec spec;
  for (const auto& [key, value] : j.items()) {
    const std::string at = where + "/" + key;
    if (key == "n") {
      if (!value.is_number_unsigned() || value.get<std::int64_t>() < 1) throw InvalidSpec(at + ": n must be a positive integer");
      spec.n = value.get<Eigen::Index>();
    } else if (key == "r") {
      if (!value.is_number_unsigned() || value.get<std::int64_t>() < 1) throw InvalidSpec(at + ": r must be a positive integer");
      spec.grade = value.get<int>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw InvalidSpec(at + ": seed must be an unsigned integer");
      spec.seed = value.get<std::uint64_t>();
    } else if (key == "cond") {
      if (!value.is_number()) throw InvalidSpec(at + ": cond must be a number");
      spec.condition = value.get<double>();
    } else if (key == "eigenvalues") {
      const Vector v = vector_from_json(value, at);
      spec.eigenvalues = std::vector<double>(v.data(), v.data() + v.size());
    } else if (key == "random_x0") {
      if (!value.is_boolean()) throw InvalidSpec(at + ": random_x0 must be a boolean");
      spec.random_start = value.get<bool>();
    } else {
      throw InvalidSpec(at + ": unknown field");
    }
  }
  if (!j.contains("n")) throw InvalidSpec(where + ": missing field n");
  if (!j.contains("r")) throw InvalidSpec(where + ": missing field r");
  return spec;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return json::parse(buffer.str());
}

}  // namespace qns
