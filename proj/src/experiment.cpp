#include "qns/experiment.hpp"

#include "qns/conjugate_reference.hpp"
#include "qns/errors.hpp"
#include "qns/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

namespace qns {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Spec documents with line information

namespace {

/// Input iterator over a string that publishes how far the parser has read.
class CountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator() = default;
  CountingIterator(const char* at, std::size_t* consumed, const char* base)
      : at_(at), consumed_(consumed), base_(base) {}

  reference operator*() const { return *at_; }
  CountingIterator& operator++() {
    ++at_;
    if (consumed_) *consumed_ = static_cast<std::size_t>(at_ - base_);
    return *this;
  }
  CountingIterator operator++(int) {
    CountingIterator old = *this;
    ++*this;
    return old;
  }
  bool operator==(const CountingIterator& o) const { return at_ == o.at_; }
  bool operator!=(const CountingIterator& o) const { return at_ != o.at_; }

 private:
  const char* at_ = nullptr;
  std::size_t* consumed_ = nullptr;
  const char* base_ = nullptr;
};

std::string escape_pointer_token(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '~') {
      out += "~0";
    } else if (ch == '/') {
      out += "~1";
    } else {
      out += ch;
    }
  }
  return out;
}

/// Builds the DOM through nlohmann's own SAX DOM builder while recording the
/// line on which each value starts.
class LocatingSax {
 public:
  using number_integer_t = json::number_integer_t;
  using number_unsigned_t = json::number_unsigned_t;
  using number_float_t = json::number_float_t;
  using string_t = json::string_t;
  using binary_t = json::binary_t;

  LocatingSax(json& root, const std::string& text, const std::size_t& consumed, std::map<std::string, int>& lines)
      : dom_(root, true), text_(text), consumed_(consumed), lines_(lines) {}

  bool null() { return scalar([&] { return dom_.null(); }); }
  bool boolean(bool v) { return scalar([&] { return dom_.boolean(v); }); }
  bool number_integer(number_integer_t v) { return scalar([&] { return dom_.number_integer(v); }); }
  bool number_unsigned(number_unsigned_t v) { return scalar([&] { return dom_.number_unsigned(v); }); }
  bool number_float(number_float_t v, const string_t& s) { return scalar([&] { return dom_.number_float(v, s); }); }
  bool string(string_t& v) { return scalar([&] { return dom_.string(v); }); }
  bool binary(binary_t& v) { return scalar([&] { return dom_.binary(v); }); }

  bool start_object(std::size_t n) {
    record();
    frames_.push_back({false, 0, {}});
    return dom_.start_object(n);
  }
  bool key(string_t& k) {
    frames_.back().key = k;
    return dom_.key(k);
  }
  bool end_object() {
    frames_.pop_back();
    advance();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    record();
    frames_.push_back({true, 0, {}});
    return dom_.start_array(n);
  }
  bool end_array() {
    frames_.pop_back();
    advance();
    return dom_.end_array();
  }
  bool parse_error(std::size_t position, const std::string& token, const nlohmann::detail::exception& ex) {
    throw InvalidSpec("line " + std::to_string(line_at(position)) + ": " + ex.what() + " (near '" + token + "')");
  }

 private:
  struct Frame {
    bool array;
    std::size_t index;
    std::string key;
  };

  template <typename F>
  bool scalar(F&& emit) {
    record();
    advance();
    return emit();
  }

  int line_at(std::size_t offset) const {
    offset = std::min(offset, text_.size());
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
  }

  /// The lexer has read one character past the token it just produced.
  void record() {
    std::string pointer;
    for (const Frame& f : frames_) {
      pointer += "/" + (f.array ? std::to_string(f.index) : escape_pointer_token(f.key));
    }
    const std::size_t end = consumed_ > 0 ? consumed_ - 1 : 0;
    lines_.emplace(pointer, line_at(end));
  }

  void advance() {
    if (!frames_.empty() && frames_.back().array) ++frames_.back().index;
  }

  nlohmann::detail::json_sax_dom_parser<json> dom_;
  const std::string& text_;
  const std::size_t& consumed_;
  std::map<std::string, int>& lines_;
  std::vector<Frame> frames_;
};

}  // namespace

int SpecDocument::line_of(const std::string& pointer) const {
  std::string p = pointer;
  for (;;) {
    auto it = lines.find(p);
    if (it != lines.end()) return it->second;
    if (p.empty()) return 1;
    p.erase(p.rfind('/'));
  }
}

std::string SpecDocument::located(const std::string& pointer, const std::string& message) const {
  return path + ":" + std::to_string(line_of(pointer)) + ": " + (pointer.empty() ? "/" : pointer) + ": " + message;
}

SpecDocument parse_spec_document(const std::string& text, const std::string& path) {
  SpecDocument doc;
  doc.path = path;
  std::size_t consumed = 0;
  LocatingSax sax(doc.root, text, consumed, doc.lines);
  const CountingIterator first(text.data(), &consumed, text.data());
  const CountingIterator last(text.data() + text.size(), nullptr, text.data());
  try {
    json::sax_parse(first, last, &sax);
  } catch (const InvalidSpec& e) {
    throw InvalidSpec(path + ":" + std::string(e.what()).substr(5));
  }
  return doc;
}

SpecDocument load_spec_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec(path + ": cannot open spec file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_spec_document(buffer.str(), path);
}

// ---------------------------------------------------------------------------
// Suites

std::vector<SuiteInstance> expand_suite(const SuiteSpec& suite) {
  if (suite.count < 0) throw InvalidSpec("suite count must be >= 0");
  if (suite.n_max < 1 || suite.n_max > kMaxDimension) throw InvalidSpec("suite n_max must be in [1, 512]");
  if (suite.r_max < 1) throw InvalidSpec("suite r_max must be >= 1");
  if (!(suite.cond_min >= 1.0) || !(suite.cond_max >= suite.cond_min) || !std::isfinite(suite.cond_max)) {
    throw InvalidSpec("suite needs 1 <= cond_min <= cond_max < inf");
  }
  if (suite.spacing != "linear" && suite.spacing != "log") throw InvalidSpec("suite spacing must be linear or log");
  if (suite.random_x0 != "mixed" && suite.random_x0 != "always" && suite.random_x0 != "never") {
    throw InvalidSpec("suite random_x0 must be mixed, always or never");
  }
  const int r_max = std::min(suite.r_max, suite.n_max);
  if (suite.cond_min == 1.0 && suite.cond_max == 1.0 && r_max > 1) {
    throw InvalidSpec("suite with cond = 1 has a single distinct eigenvalue; r_max must be 1");
  }

  std::vector<SuiteInstance> out;
  for (int i = 0; i < suite.count; ++i) {
    Rng rng(derive_seed(suite.seed, static_cast<std::uint64_t>(i)));
    ProblemSpec spec;
    spec.grade = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(r_max)));
    spec.n = spec.grade + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(suite.n_max - spec.grade + 1)));
    const double cond = std::exp(rng.uniform(std::log(suite.cond_min), std::log(suite.cond_max)));
    spec.seed = derive_seed(suite.seed, 1000 + static_cast<std::uint64_t>(i));
    const bool coin = rng.uniform() < 0.5;
    spec.random_start = suite.random_x0 == "always" || (suite.random_x0 == "mixed" && coin);
    std::vector<double> ev(static_cast<std::size_t>(spec.n));
    for (Eigen::Index j = 0; j < spec.n; ++j) {
      const double t = spec.n == 1 ? 0.0 : double(j) / double(spec.n - 1);
      ev[static_cast<std::size_t>(j)] = suite.spacing == "linear" ? 1.0 + t * (cond - 1.0) : std::pow(cond, t);
    }
    spec.eigenvalues = std::move(ev);

    char id[64];
    std::snprintf(id, sizeof id, "%s-%03d", suite.prefix.c_str(), i);
    out.push_back({id, std::move(spec)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment specs

ProblemRecord make_record(const std::string& id, const ProblemSpec& spec) {
  GeneratedProblem gp = generate_problem(spec);
  return {id, std::move(gp.problem), std::move(gp.x0), spec.seed, spec_to_json(spec)};
}

namespace {

/// Rethrows an InvalidSpec raised while reading `pointer` with its line. Inner
/// messages that start with a JSON pointer refine the location.
template <typename F>
auto at_location(const SpecDocument& doc, const std::string& pointer, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const InvalidSpec& e) {
    std::string message = e.what();
    std::string where = pointer;
    if (!message.empty() && message[0] == '/') {
      const auto colon = message.find(": ");
      if (colon != std::string::npos) {
        where = pointer + message.substr(0, colon);
        message = message.substr(colon + 2);
      }
    }
    throw InvalidSpec(doc.located(where, message));
  } catch (const std::exception& e) {
    throw InvalidSpec(doc.located(pointer, e.what()));
  }
}

const json& require(const SpecDocument& doc, const json& obj, const std::string& pointer, const char* key) {
  if (!obj.contains(key)) throw InvalidSpec(doc.located(pointer, std::string("missing field '") + key + "'"));
  return obj[key];
}

int integer_field(const SpecDocument& doc, const json& obj, const std::string& pointer, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) {
    throw InvalidSpec(doc.located(pointer + "/" + key, "expected an integer"));
  }
  return obj[key].get<int>();
}

double number_field(const SpecDocument& doc, const json& obj, const std::string& pointer, const char* key,
                    double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw InvalidSpec(doc.located(pointer + "/" + key, "expected a number"));
  return obj[key].get<double>();
}

std::string string_field(const SpecDocument& doc, const json& obj, const std::string& pointer, const char* key,
                         const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw InvalidSpec(doc.located(pointer + "/" + key, "expected a string"));
  return obj[key].get<std::string>();
}

void reject_unknown(const SpecDocument& doc, const json& obj, const std::string& pointer,
                    std::initializer_list<const char*> known) {
  for (const auto& item : obj.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) throw InvalidSpec(doc.located(pointer + "/" + escape_pointer_token(item.key()), "unknown field"));
  }
}

SuiteSpec suite_from_json(const SpecDocument& doc, const json& j, const std::string& pointer) {
  if (!j.is_object()) throw InvalidSpec(doc.located(pointer, "suite must be an object"));
  reject_unknown(doc, j, pointer,
                 {"id", "count", "n_max", "r_max", "cond_min", "cond_max", "spacing", "random_x0", "seed"});
  SuiteSpec s;
  s.prefix = string_field(doc, j, pointer, "id", s.prefix);
  s.count = integer_field(doc, j, pointer, "count", s.count);
  s.n_max = integer_field(doc, j, pointer, "n_max", s.n_max);
  s.r_max = integer_field(doc, j, pointer, "r_max", s.r_max);
  s.cond_min = number_field(doc, j, pointer, "cond_min", s.cond_min);
  s.cond_max = number_field(doc, j, pointer, "cond_max", s.cond_max);
  s.spacing = string_field(doc, j, pointer, "spacing", s.spacing);
  s.random_x0 = string_field(doc, j, pointer, "random_x0", s.random_x0);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InvalidSpec(doc.located(pointer + "/seed", "expected an unsigned integer"));
    s.seed = j["seed"].get<std::uint64_t>();
  }
  return s;
}

std::string method_label(const MethodSpec& m) {
  switch (m.kind) {
    case MethodSpec::Kind::cg: return "cg";
    case MethodSpec::Kind::bfgs: return "bfgs";
    case MethodSpec::Kind::memoryless: return "memoryless";
    case MethodSpec::Kind::qn_subspace: break;
  }
  const json step = to_json(m.qn.steps);
  const json sigma = to_json(m.qn.sigmas);
  const std::string step_kind = step.is_string() ? step.get<std::string>() : step["kind"].get<std::string>();
  return std::string("qn-") + to_string(m.qn.mode) + "-" + step_kind + "-" + sigma["kind"].get<std::string>();
}

MethodSpec method_from_json(const SpecDocument& doc, const json& j, const std::string& pointer) {
  MethodSpec m;
  std::string name;
  const json* options = nullptr;
  if (j.is_string()) {
    name = j.get<std::string>();
  } else if (j.is_object()) {
    reject_unknown(doc, j, pointer, {"qn-subspace", "cg", "bfgs", "memoryless", "id", "compare_modes"});
    for (const char* k : {"qn-subspace", "cg", "bfgs", "memoryless"}) {
      if (j.contains(k)) {
        if (!name.empty()) throw InvalidSpec(doc.located(pointer, "method entry names more than one solver"));
        name = k;
        options = &j[k];
      }
    }
    if (name.empty()) throw InvalidSpec(doc.located(pointer, "method entry names no solver"));
  } else {
    throw InvalidSpec(doc.located(pointer, "method must be a name or an object"));
  }

  if (name == "cg") {
    m.kind = MethodSpec::Kind::cg;
  } else if (name == "bfgs") {
    m.kind = MethodSpec::Kind::bfgs;
  } else if (name == "memoryless") {
    m.kind = MethodSpec::Kind::memoryless;
  } else if (name == "qn-subspace") {
    m.kind = MethodSpec::Kind::qn_subspace;
    if (options && !options->is_null()) {
      const std::string opt_ptr = pointer + "/qn-subspace";
      if (!options->is_object()) throw InvalidSpec(doc.located(opt_ptr, "expected an object"));
      reject_unknown(doc, *options, opt_ptr, {"mode", "step", "sigma", "initial_sigma"});
      m.qn = at_location(doc, opt_ptr, [&] { return run_options_from_json(*options, ""); });
    }
  } else {
    throw InvalidSpec(doc.located(pointer, "unknown method '" + name + "' (expected cg, bfgs, memoryless or qn-subspace)"));
  }
  if (options && m.kind != MethodSpec::Kind::qn_subspace && !options->is_null() &&
      !(options->is_object() && options->empty())) {
    throw InvalidSpec(doc.located(pointer + "/" + name, "baseline methods take no options"));
  }
  if (j.is_object()) {
    m.id = string_field(doc, j, pointer, "id", "");
    if (j.contains("compare_modes")) {
      if (!j["compare_modes"].is_boolean()) throw InvalidSpec(doc.located(pointer + "/compare_modes", "expected a boolean"));
      m.compare_modes = j["compare_modes"].get<bool>();
      if (m.compare_modes && m.kind != MethodSpec::Kind::qn_subspace) {
        throw InvalidSpec(doc.located(pointer + "/compare_modes", "only qn-subspace has an H mode"));
      }
    }
  }
  return m;
}

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
  });
}

}  // namespace

ExperimentSpec parse_experiment(const SpecDocument& doc, const Overrides& overrides) {
  const json& root = doc.root;
  if (!root.is_object()) throw InvalidSpec(doc.located("", "spec must be a JSON object"));
  reject_unknown(doc, root, "", {"problems", "methods", "tol", "max_iter", "seed", "out_dir"});
  ExperimentSpec spec;

  spec.tol = number_field(doc, root, "", "tol", spec.tol);
  if (root.contains("max_iter") && !root["max_iter"].is_null()) spec.max_iter = integer_field(doc, root, "", "max_iter", 0);
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) throw InvalidSpec(doc.located("/seed", "expected an unsigned integer"));
    spec.seed = root["seed"].get<std::uint64_t>();
  }
  spec.out_dir = string_field(doc, root, "", "out_dir", spec.out_dir);
  if (overrides.tol) spec.tol = *overrides.tol;
  if (overrides.max_iter) spec.max_iter = *overrides.max_iter;
  if (overrides.seed) spec.seed = *overrides.seed;
  if (overrides.out_dir) spec.out_dir = *overrides.out_dir;
  if (!(spec.tol > 0.0) || !std::isfinite(spec.tol)) throw InvalidSpec(doc.located("/tol", "tol must be positive"));
  if (spec.max_iter && *spec.max_iter < 1) throw InvalidSpec(doc.located("/max_iter", "max_iter must be >= 1"));

  const fs::path base = fs::path(doc.path).parent_path();
  const json& problems = require(doc, root, "", "problems");
  if (!problems.is_array() || problems.empty()) throw InvalidSpec(doc.located("/problems", "expected a non-empty array"));
  std::set<std::string> problem_ids;
  auto add_problem = [&](ProblemRecord record, const std::string& pointer) {
    if (!valid_id(record.id)) throw InvalidSpec(doc.located(pointer, "invalid problem id '" + record.id + "'"));
    if (!problem_ids.insert(record.id).second) {
      throw InvalidSpec(doc.located(pointer, "duplicate problem id '" + record.id + "'"));
    }
    spec.problems.push_back(std::move(record));
  };
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const std::string pointer = "/problems/" + std::to_string(i);
    const json& entry = problems[i];
    if (!entry.is_object()) throw InvalidSpec(doc.located(pointer, "expected an object"));
    char default_id[32];
    std::snprintf(default_id, sizeof default_id, "p%03zu", i);
    if (entry.contains("suite")) {
      reject_unknown(doc, entry, pointer, {"suite"});
      const SuiteSpec suite = suite_from_json(doc, entry["suite"], pointer + "/suite");
      const auto instances = at_location(doc, pointer + "/suite", [&] { return expand_suite(suite); });
      for (const auto& inst : instances) {
        add_problem(at_location(doc, pointer + "/suite", [&] { return make_record(inst.id, inst.spec); }), pointer);
      }
    } else if (entry.contains("file")) {
      reject_unknown(doc, entry, pointer, {"file", "id"});
      const std::string file = string_field(doc, entry, pointer, "file", "");
      const fs::path path = fs::path(file).is_absolute() ? fs::path(file) : base / file;
      ProblemRecord record = at_location(doc, pointer + "/file", [&] { return problem_from_json(read_json_file(path.string())); });
      record.id = string_field(doc, entry, pointer, "id", record.id);
      add_problem(std::move(record), pointer);
    } else {
      json gen = entry;
      const std::string id = string_field(doc, entry, pointer, "id", default_id);
      gen.erase("id");
      const ProblemSpec ps = at_location(doc, pointer, [&] { return spec_from_json(gen, ""); });
      add_problem(at_location(doc, pointer, [&] { return make_record(id, ps); }), pointer);
    }
  }

  const json& methods = require(doc, root, "", "methods");
  if (!methods.is_array() || methods.empty()) throw InvalidSpec(doc.located("/methods", "expected a non-empty array"));
  std::set<std::string> method_ids;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const std::string pointer = "/methods/" + std::to_string(i);
    MethodSpec m = method_from_json(doc, methods[i], pointer);
    if (overrides.mode && m.kind == MethodSpec::Kind::qn_subspace) m.qn.mode = *overrides.mode;
    const bool explicit_id = !m.id.empty();
    if (!explicit_id) m.id = method_label(m);
    if (!valid_id(m.id)) throw InvalidSpec(doc.located(pointer, "invalid method id '" + m.id + "'"));
    if (method_ids.count(m.id)) {
      if (explicit_id) throw InvalidSpec(doc.located(pointer, "duplicate method id '" + m.id + "'"));
      m.id += "-" + std::to_string(i);
    }
    method_ids.insert(m.id);
    spec.methods.push_back(std::move(m));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Cells

bool SummaryRow::passed() const {
  if (broke_down()) return false;
  for (Verdict v : {baseline, theorem1, corollary, step_equivalence, mode_agreement}) {
    if (v == Verdict::fail) return false;
  }
  return true;
}

namespace {

void note_failure(SummaryRow& row, const Report& report) {
  if (!row.detail.empty()) return;
  for (const auto& f : report.findings) {
    if (f.verdict == Verdict::fail) {
      row.detail = report.check + "/" + f.name + (f.detail.empty() ? "" : ": " + f.detail);
      return;
    }
  }
}

Verdict record(SummaryRow& row, const Report& report) {
  note_failure(row, report);
  return report.verdict();
}

}  // namespace

CellResult run_cell(const ProblemRecord& problem, const MethodSpec& method, const ExperimentSpec& spec,
                    std::size_t method_index) {
  CellResult out;
  SummaryRow& row = out.row;
  row.problem = problem.id;
  row.n = problem.problem.n();
  row.method = method.id;
  row.mode = method.kind == MethodSpec::Kind::qn_subspace ? to_string(method.qn.mode) : "oracle";

  const auto start = std::chrono::steady_clock::now();
  try {
    row.grade = krylov_grade(problem.problem, problem.x0);
    const QuadraticProblem& prob = problem.problem;
    switch (method.kind) {
      case MethodSpec::Kind::cg:
        out.trace = cg_solve(prob, problem.x0, spec.tol, spec.max_iter);
        break;
      case MethodSpec::Kind::bfgs:
        out.trace = qn_exact_ls_solve(prob, problem.x0, QuasiNewtonVariant::bfgs, spec.tol, spec.max_iter);
        break;
      case MethodSpec::Kind::memoryless:
        out.trace = qn_exact_ls_solve(prob, problem.x0, QuasiNewtonVariant::memoryless, spec.tol, spec.max_iter);
        break;
      case MethodSpec::Kind::qn_subspace: {
        RunOptions options = method.qn;
        options.tol = spec.tol;
        options.max_iter = spec.max_iter;
        options.seed = derive_seed(derive_seed(spec.seed, problem.seed), method_index);
        out.trace = run(prob, problem.x0, options);
        break;
      }
    }
    row.status = to_string(out.trace.status.kind);
    row.iterations = out.trace.status.iterations;
    row.initial_grad_norm = out.trace.initial_grad_norm;
    row.final_grad_norm = out.trace.final_grad_norm;
    if (out.trace.status.kind == TraceStatus::Kind::breakdown) row.detail = "breakdown: " + out.trace.status.reason;

    if (method.kind == MethodSpec::Kind::qn_subspace) {
      row.theorem1 = record(row, check_theorem1(out.trace, prob, problem.x0));
      row.corollary = record(row, check_corollary_unit(out.trace, prob, problem.x0));
      row.step_equivalence = record(row, check_step_equivalence(out.trace, prob, problem.x0));
      if (method.compare_modes) {
        RunOptions other = run_options_from_json(out.trace.config);
        other.mode = other.mode == Mode::oracle ? Mode::matrix_free : Mode::oracle;
        const TraceComparison cmp = compare_traces(out.trace, run(prob, problem.x0, other));
        row.mode_agreement = cmp.same_shape && cmp.max_relative <= 1e-6 ? Verdict::pass : Verdict::fail;
        if (row.mode_agreement == Verdict::fail && row.detail.empty()) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "mode-agreement: %s differs by %.3e at iteration %d", cmp.worst_field.c_str(),
                        cmp.max_relative, cmp.worst_iteration);
          row.detail = buf;
        }
      }
    } else {
      row.baseline = record(row, check_baseline(out.trace, prob, problem.x0));
    }
  } catch (const std::exception& e) {
    row.status = "error";
    row.detail = e.what();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<CellResult> run_experiment(const ExperimentSpec& spec, int jobs) {
  struct Cell {
    std::string key;
    std::size_t problem;
    std::size_t method;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < spec.problems.size(); ++p) {
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      cells.push_back({spec.problems[p].id + "__" + spec.methods[m].id, p, m});
    }
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.key < b.key; });

  std::vector<CellResult> results(cells.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(jobs > 0 ? static_cast<std::size_t>(jobs) : hw, cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_cell(spec.problems[cells[i].problem], spec.methods[cells[i].method], spec, cells[i].method);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return results;
}

int batch_exit_code(const std::vector<SummaryRow>& rows) {
  bool failed = false;
  for (const auto& row : rows) {
    if (row.broke_down()) return kExitBreakdown;
    if (!row.passed()) failed = true;
  }
  return failed ? kExitCheckFail : kExitPass;
}

// ---------------------------------------------------------------------------
// Output

const std::vector<std::string>& summary_columns(bool timing) {
  static const std::vector<std::string> base = {
      "problem",  "n",        "r",         "method",           "mode",           "status",  "iterations",
      "grad0",    "grad_final", "baseline", "theorem1",        "corollary",      "step_equivalence",
      "mode_agreement", "pass", "detail"};
  static const std::vector<std::string> timed = [] {
    auto v = base;
    v.insert(v.end() - 1, "wall_time_s");
    return v;
  }();
  return timing ? timed : base;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> row_cells(const SummaryRow& r, bool timing) {
  std::vector<std::string> cells = {r.problem,
                                    std::to_string(r.n),
                                    std::to_string(r.grade),
                                    r.method,
                                    r.mode,
                                    r.status,
                                    std::to_string(r.iterations),
                                    fmt17(r.initial_grad_norm),
                                    fmt17(r.final_grad_norm),
                                    to_string(r.baseline),
                                    to_string(r.theorem1),
                                    to_string(r.corollary),
                                    to_string(r.step_equivalence),
                                    to_string(r.mode_agreement),
                                    r.passed() ? "true" : "false"};
  if (timing) cells.push_back(fmt17(r.seconds));
  cells.push_back(r.detail);
  return cells;
}

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows, bool timing) {
  std::string out;
  const auto& cols = summary_columns(timing);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : rows) {
    const auto cells = row_cells(r, timing);
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
    out += "\n";
  }
  return out;
}

json summary_json(const std::vector<SummaryRow>& rows, bool timing) {
  json out = json::array();
  const auto& cols = summary_columns(timing);
  for (const auto& r : rows) {
    json obj = json::object();
    const auto cells = row_cells(r, timing);
    for (std::size_t i = 0; i < cols.size(); ++i) obj[cols[i]] = cells[i];
    obj["n"] = r.n;
    obj["r"] = r.grade;
    obj["iterations"] = r.iterations;
    obj["grad0"] = r.initial_grad_norm;
    obj["grad_final"] = r.final_grad_norm;
    obj["pass"] = r.passed();
    if (timing) obj["wall_time_s"] = r.seconds;
    out.push_back(std::move(obj));
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

std::string convergence_csv(const std::vector<CellResult>& results) {
  std::string out = "problem,method,k,grad_norm\n";
  for (const auto& cell : results) {
    if (cell.row.status == "error") continue;
    const auto& its = cell.trace.iterations;
    for (std::size_t k = 0; k < its.size(); ++k) {
      out += cell.row.problem + "," + cell.row.method + "," + std::to_string(k) + "," + fmt17(its[k].grad_norm) + "\n";
    }
    out += cell.row.problem + "," + cell.row.method + "," + std::to_string(its.size()) + "," +
           fmt17(cell.trace.final_grad_norm) + "\n";
  }
  return out;
}

std::string reports_csv(const std::string& label, const std::vector<Report>& reports, bool header) {
  std::string out = header ? "trace,check,finding,verdict,measured,tolerance,detail\n" : "";
  for (const auto& rep : reports) {
    for (const auto& f : rep.findings) {
      out += csv_field(label) + "," + rep.check + "," + f.name + "," + to_string(f.verdict) + "," + fmt17(f.measured) +
             "," + fmt17(f.tolerance) + "," + csv_field(f.detail) + "\n";
    }
  }
  return out;
}

int verify_exit(const IterateTrace& trace, const std::vector<Report>& reports) {
  if (trace.status.kind == TraceStatus::Kind::breakdown) return kExitBreakdown;
  for (const auto& r : reports) {
    if (!r.passed()) return kExitCheckFail;
  }
  return kExitPass;
}

fs::path problem_path(const ExperimentSpec& spec, const std::string& id) {
  return fs::path(spec.out_dir) / "problems" / (id + ".json");
}

fs::path trace_path(const ExperimentSpec& spec, const std::string& problem, const std::string& method) {
  return fs::path(spec.out_dir) / "traces" / (problem + "__" + method + ".json");
}

}  // namespace

int cmd_generate(const ExperimentSpec& spec, std::ostream& out) {
  fs::create_directories(fs::path(spec.out_dir) / "problems");
  int code = kExitPass;
  for (const auto& record : spec.problems) {
    const int r = krylov_grade(record.problem, record.x0);
    write_json_file(problem_path(spec, record.id).string(), problem_to_json(record));
    out << record.id << " n=" << record.problem.n() << " r=" << r;
    if (record.spec.is_object() && record.spec.contains("r") && record.spec["r"].get<int>() != r) {
      out << " (requested r=" << record.spec["r"].get<int>() << ")";
      code = kExitCheckFail;
    }
    out << "\n";
  }
  return code;
}

int cmd_run(const ExperimentSpec& spec, Format format, bool timing, int jobs, std::ostream& out) {
  const fs::path dir(spec.out_dir);
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "problems");
  for (const auto& record : spec.problems) {
    write_json_file(problem_path(spec, record.id).string(), problem_to_json(record));
  }

  const std::vector<CellResult> results = run_experiment(spec, jobs);
  std::vector<SummaryRow> rows;
  for (const auto& cell : results) {
    rows.push_back(cell.row);
    if (cell.row.status != "error") {
      write_json_file(trace_path(spec, cell.row.problem, cell.row.method).string(), trace_to_json(cell.trace));
    }
  }
  const std::string csv = summary_csv(rows, timing);
  write_text(dir / "summary.csv", csv);
  write_text(dir / "convergence.csv", convergence_csv(results));
  if (format == Format::json) {
    const std::string text = summary_json(rows, timing).dump(2) + "\n";
    write_text(dir / "summary.json", text);
    out << text;
  } else {
    out << csv;
  }
  return batch_exit_code(rows);
}

int cmd_verify(const std::string& trace_file, const std::string& problem_file, Format format, std::ostream& out) {
  const ProblemRecord record = problem_from_json(read_json_file(problem_file));
  const IterateTrace trace = trace_from_json(read_json_file(trace_file));
  if (trace.final_x.size() != record.problem.n()) {
    throw InvalidSpec("trace dimension " + std::to_string(trace.final_x.size()) + " does not match problem n = " +
                      std::to_string(record.problem.n()));
  }
  const std::vector<Report> reports = verify_trace(trace, record.problem, record.x0);
  switch (format) {
    case Format::json: {
      json arr = json::array();
      for (const auto& r : reports) arr.push_back(r.to_json());
      out << arr.dump(2) << "\n";
      break;
    }
    case Format::csv: out << reports_csv(trace_file, reports, true); break;
    case Format::text:
      for (const auto& r : reports) out << r.to_text();
      break;
  }
  return verify_exit(trace, reports);
}

int cmd_verify_all(const ExperimentSpec& spec, Format format, std::ostream& out) {
  int code = kExitPass;
  json arr = json::array();
  bool header = true;
  for (const auto& record : spec.problems) {
    for (const auto& method : spec.methods) {
      const fs::path path = trace_path(spec, record.id, method.id);
      const std::string label = record.id + "__" + method.id;
      if (!fs::exists(path)) throw InvalidSpec("missing trace " + path.string() + " (run first)");
      const IterateTrace trace = trace_from_json(read_json_file(path.string()));
      const std::vector<Report> reports = verify_trace(trace, record.problem, record.x0);
      const int cell = verify_exit(trace, reports);
      code = std::max(code, cell);
      if (format == Format::csv) {
        out << reports_csv(label, reports, header);
        header = false;
      } else if (format == Format::json) {
        json entry = {{"trace", label}, {"reports", json::array()}};
        for (const auto& r : reports) entry["reports"].push_back(r.to_json());
        arr.push_back(std::move(entry));
      } else {
        out << label << ": " << (cell == kExitPass ? "pass" : cell == kExitBreakdown ? "breakdown" : "fail") << "\n";
        if (cell != kExitPass) {
          for (const auto& r : reports) out << r.to_text();
        }
      }
    }
  }
  if (format == Format::json) out << arr.dump(2) << "\n";
  return code;
}

}  // namespace qns
