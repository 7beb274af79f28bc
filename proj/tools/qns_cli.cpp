// qns: generate problem suites, run solver matrices, verify traces.

#include "qns/errors.hpp"
#include "qns/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
  std::string spec;
  std::optional<std::string> out_dir;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> format;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool spec_required) {
  auto* spec = cmd->add_option("--spec", f.spec, "Experiment spec (JSON)");
  if (spec_required) spec->required();
  cmd->add_option("--out-dir", f.out_dir, "Output directory (overrides the spec's out_dir)");
  cmd->add_option("--tol", f.tol, "Stop when ||g|| <= tol * (1 + ||g0||); default 1e-9")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", f.max_iter, "Iteration cap for every solver")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Experiment seed");
  cmd->add_option("--mode", f.mode, "H access for qn-subspace methods")->check(CLI::IsMember({"oracle", "matrix-free"}));
  cmd->add_option("--format", f.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

qns::ExperimentSpec load(const CommonFlags& f) {
  qns::Overrides o;
  o.tol = f.tol;
  o.max_iter = f.max_iter;
  o.seed = f.seed;
  o.out_dir = f.out_dir;
  if (f.mode) o.mode = qns::mode_from_string(*f.mode);
  return qns::parse_experiment(qns::load_spec_document(f.spec), o);
}

qns::Format format_of(const CommonFlags& f, qns::Format fallback) {
  if (!f.format) return fallback;
  return *f.format == "json" ? qns::Format::json : qns::Format::csv;
}

std::string columns_help() {
  std::string s = "summary.csv columns:";
  for (const auto& c : qns::summary_columns(true)) s += " " + c;
  s += "\n  (wall_time_s only with --timing; verdicts are pass | fail | n/a)\n";
  s += "exit codes: 0 all checks pass, 1 a check failed, 2 usage or spec error, 3 solver breakdown";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-Newton subspace experiments on strictly convex quadratics"};
  app.footer(columns_help());
  app.require_subcommand(1);

  CommonFlags gen_flags, run_flags, verify_flags;
  auto* gen = app.add_subcommand("generate", "Write problem files and print the Krylov grade of each");
  add_common(gen, gen_flags, true);

  auto* runc = app.add_subcommand("run", "Run every (problem, method) cell and write traces and summaries");
  add_common(runc, run_flags, true);
  bool timing = false;
  int jobs = 0;
  runc->add_flag("--timing", timing, "Add a wall_time_s column (output is then not byte-reproducible)");
  runc->add_option("--jobs", jobs, "Worker threads; 0 uses all cores");

  auto* ver = app.add_subcommand("verify", "Check traces against the theory");
  add_common(ver, verify_flags, false);
  std::string trace_file, problem_file;
  auto* trace_opt = ver->add_option("--trace", trace_file, "Trace JSON to check");
  ver->add_option("--problem", problem_file, "Problem JSON the trace was run on")->needs(trace_opt);
  trace_opt->needs("--problem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return qns::kExitUsage;
  }

  try {
    if (gen->parsed()) return qns::cmd_generate(load(gen_flags), std::cout);
    if (runc->parsed()) {
      return qns::cmd_run(load(run_flags), format_of(run_flags, qns::Format::csv), timing, jobs, std::cout);
    }
    if (!trace_file.empty()) {
      return qns::cmd_verify(trace_file, problem_file, format_of(verify_flags, qns::Format::text), std::cout);
    }
    if (verify_flags.spec.empty()) {
      std::cerr << "verify: give --trace and --problem, or --spec\n";
      return qns::kExitUsage;
    }
    return qns::cmd_verify_all(load(verify_flags), format_of(verify_flags, qns::Format::text), std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qns::kExitUsage;
  }
}
