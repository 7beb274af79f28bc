#pragma once

#include "qns/problem_io.hpp"
#include "qns/qn_algorithm.hpp"
#include "qns/trace.hpp"
#include "qns/verification.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qns {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitPass = 0, kExitCheckFail = 1, kExitUsage = 2, kExitBreakdown = 3 };

/// A parsed JSON file that remembers the source line of every value, keyed by
/// JSON pointer ("" is the root).
struct SpecDocument {
  std::string path;
  nlohmann::json root;
  std::map<std::string, int> lines;

  /// Line of `pointer`, or of its closest ancestor that has one.
  int line_of(const std::string& pointer) const;
  /// "path:line: pointer: message".
  std::string located(const std::string& pointer, const std::string& message) const;
};

/// Throws InvalidSpec with the offending line on malformed JSON.
SpecDocument parse_spec_document(const std::string& text, const std::string& path = "<spec>");
SpecDocument load_spec_document(const std::string& path);

/// Seeded random instances. Draw i uses derive_seed(seed, i): r uniform in
/// 1..r_max, n uniform in r..n_max, cond log-uniform in [cond_min, cond_max],
/// eigenvalues evenly spaced ("linear") or geometrically spaced ("log") in
/// [1, cond], and x0 random with probability 1/2 ("mixed"), always or never.
struct SuiteSpec {
  std::string prefix = "suite";
  int count = 10;
  int n_max = 32;
  int r_max = 16;
  double cond_min = 1e2;
  double cond_max = 1e4;
  std::string spacing = "linear";
  std::string random_x0 = "mixed";
  std::uint64_t seed = 0;
};

struct SuiteInstance {
  std::string id;
  ProblemSpec spec;
};

std::vector<SuiteInstance> expand_suite(const SuiteSpec& suite);

/// One method column of the experiment matrix.
struct MethodSpec {
  enum class Kind { cg, bfgs, memoryless, qn_subspace };
  Kind kind = Kind::cg;
  std::string id;
  RunOptions qn;  // qn_subspace only; seed and tol are filled per cell
  /// Also run the other H mode and report field-wise agreement.
  bool compare_modes = false;
};

struct ExperimentSpec {
  std::vector<ProblemRecord> problems;
  std::vector<MethodSpec> methods;
  double tol = 1e-9;
  std::optional<int> max_iter;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

/// Command-line overrides; unset fields keep the spec file's values.
struct Overrides {
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::uint64_t> seed;
  std::optional<Mode> mode;
  std::optional<std::string> out_dir;
};

/// Spec schema:
///   {"problems": [<generation spec with optional "id"> | {"file": path, "id"?}
///                 | {"suite": {count, n_max, r_max, cond_min, cond_max, spacing, random_x0, seed, id}}],
///    "methods": ["cg" | "bfgs" | "memoryless"
///                | {"qn-subspace": {mode, step, sigma, initial_sigma}, "id"?, "compare_modes"?}],
///    "tol", "max_iter", "seed", "out_dir"}
/// Problem files are resolved relative to the spec file. Throws InvalidSpec
/// carrying "path:line:" for every field error.
ExperimentSpec parse_experiment(const SpecDocument& doc, const Overrides& overrides = {});

ProblemRecord make_record(const std::string& id, const ProblemSpec& spec);

/// One (problem, method) cell.
struct SummaryRow {
  std::string problem;
  Eigen::Index n = 0;
  int grade = 0;
  std::string method;
  std::string mode;
  std::string status;  // converged | max-iter | breakdown | error
  int iterations = 0;
  double initial_grad_norm = 0.0;
  double final_grad_norm = 0.0;
  Verdict baseline = Verdict::not_applicable;
  Verdict theorem1 = Verdict::not_applicable;
  Verdict corollary = Verdict::not_applicable;
  Verdict step_equivalence = Verdict::not_applicable;
  Verdict mode_agreement = Verdict::not_applicable;
  double seconds = 0.0;
  std::string detail;

  bool passed() const;
  bool broke_down() const { return status == "breakdown" || status == "error"; }
};

/// Column order of summary.csv; --help prints it.
const std::vector<std::string>& summary_columns(bool timing);
std::string summary_csv(const std::vector<SummaryRow>& rows, bool timing);
nlohmann::json summary_json(const std::vector<SummaryRow>& rows, bool timing);

struct CellResult {
  SummaryRow row;
  IterateTrace trace;
};

/// Runs and checks one cell. Solver exceptions become an "error" row.
CellResult run_cell(const ProblemRecord& problem, const MethodSpec& method, const ExperimentSpec& spec,
                    std::size_t method_index);

/// All cells, in sorted "<problem>__<method>" order. `jobs` <= 0 uses the
/// hardware concurrency.
std::vector<CellResult> run_experiment(const ExperimentSpec& spec, int jobs = 0);

/// Exit code for a finished batch: breakdown beats check failure.
int batch_exit_code(const std::vector<SummaryRow>& rows);

enum class Format { text, csv, json };

/// Subcommands. Each returns an ExitCode and writes its report to `out`.
int cmd_generate(const ExperimentSpec& spec, std::ostream& out);
int cmd_run(const ExperimentSpec& spec, Format format, bool timing, int jobs, std::ostream& out);
int cmd_verify(const std::string& trace_path, const std::string& problem_path, Format format, std::ostream& out);
/// Re-verifies every trace a previous cmd_run wrote for `spec`.
int cmd_verify_all(const ExperimentSpec& spec, Format format, std::ostream& out);

}  // namespace qns
