#include "qns/errors.hpp"
#include "qns/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qns;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("qns_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  ExperimentSpec load(const std::string& name, const std::string& text) {
    Overrides o;
    o.out_dir = (dir_ / "out").string();
    return parse_experiment(load_spec_document(write(name, text)), o);
  }

  fs::path dir_;
};

const char* kRunningExample = R"({"id": "running", "n": 2, "H": [1, 0, 0, 2], "c": [-1, -1], "x0": [0, 0]})";

std::string invalid_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const InvalidSpec& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(SpecDocument, MalformedJsonReportsLine) {
  const std::string msg = invalid_message([] { parse_spec_document("{\n  \"methods\": [\n    \"cg\",,\n  ]\n}", "x.json"); });
  EXPECT_NE(msg.find("x.json:3"), std::string::npos) << msg;
}

TEST(SpecDocument, LinesArePerPointer) {
  const auto doc = parse_spec_document("{\n  \"a\": 1,\n  \"b\": [\n    2,\n    {\"c\": 3}\n  ]\n}");
  EXPECT_EQ(doc.line_of("/a"), 2);
  EXPECT_EQ(doc.line_of("/b/0"), 4);
  EXPECT_EQ(doc.line_of("/b/1/c"), 5);
  EXPECT_EQ(doc.line_of("/b/1/missing"), 5);
}

TEST_F(Workspace, FieldErrorsCarryLineNumbers) {
  const std::string text =
      "{\n  \"problems\": [{\"n\": 2, \"eigenvalues\": [1,2], \"r\": 2}],\n  \"methods\": [\n    \"cg\",\n"
      "    {\"qn-subspace\": {\"step\": {\"kind\": \"bogus\"}}}\n  ]\n}\n";
  const std::string path = write("bad.json", text);
  const std::string msg = invalid_message([&] { parse_experiment(load_spec_document(path)); });
  EXPECT_NE(msg.find("bad.json:5:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/methods/1/qn-subspace/step"), std::string::npos) << msg;

  const std::string unknown = write("unknown.json", "{\n  \"problems\": [],\n  \"methods\": [\"cg\"],\n  \"tool\": 1\n}");
  const std::string msg2 = invalid_message([&] { parse_experiment(load_spec_document(unknown)); });
  EXPECT_NE(msg2.find("unknown.json:4:"), std::string::npos) << msg2;
}

TEST_F(Workspace, EmptyMethodListIsRejected) {
  EXPECT_THROW(load("s.json", R"({"problems": [{"n": 2, "eigenvalues": [1, 2], "r": 2}], "methods": []})"),
               InvalidSpec);
}

TEST_F(Workspace, GradeAboveDistinctEigenvaluesIsRejected) {
  const std::string text = "{\n  \"problems\": [\n    {\"n\": 4, \"eigenvalues\": [1, 1, 1, 1], \"r\": 3}\n  ],\n"
                           "  \"methods\": [\"cg\"]\n}";
  const std::string path = write("s.json", text);
  const std::string msg = invalid_message([&] { parse_experiment(load_spec_document(path)); });
  EXPECT_NE(msg.find("distinct eigenvalues"), std::string::npos) << msg;
  EXPECT_NE(msg.find("s.json:3:"), std::string::npos) << msg;
}

TEST_F(Workspace, GeneratePrintsGrades) {
  const auto spec = load("s.json", R"({"problems": [{"id": "two", "n": 2, "eigenvalues": [1, 2], "r": 2, "seed": 7},
                                                     {"id": "one", "n": 1, "eigenvalues": [1], "r": 1}],
                                       "methods": ["cg"]})");
  std::ostringstream out;
  EXPECT_EQ(cmd_generate(spec, out), kExitPass);
  EXPECT_EQ(out.str(), "two n=2 r=2\none n=1 r=1\n");
  EXPECT_TRUE(fs::exists(dir_ / "out" / "problems" / "two.json"));
  const auto back = problem_from_json(read_json_file((dir_ / "out" / "problems" / "one.json").string()));
  EXPECT_EQ(back.problem.n(), 1);
}

TEST_F(Workspace, RunningExampleIterationCounts) {
  write("running.json", kRunningExample);
  const auto spec = load("s.json", R"({"problems": [{"file": "running.json"}],
      "methods": ["cg", {"id": "qn-unit", "qn-subspace": {"step": "unit", "sigma": 1.0}}]})");
  std::ostringstream out;
  EXPECT_EQ(cmd_run(spec, Format::csv, false, 1, out), kExitPass);
  const auto cells = run_experiment(spec, 1);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].row.method, "cg");
  EXPECT_EQ(cells[0].row.iterations, 2);
  EXPECT_EQ(cells[1].row.method, "qn-unit");
  EXPECT_EQ(cells[1].row.iterations, 3);
  EXPECT_TRUE(cells[1].row.passed()) << cells[1].row.detail;
  const auto csv = slurp(dir_ / "out" / "summary.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "problem,n,r,method,mode,status,iterations,grad0,grad_final,baseline,theorem1,corollary,"
            "step_equivalence,mode_agreement,pass,detail");
  EXPECT_TRUE(fs::exists(dir_ / "out" / "traces" / "running__qn-unit.json"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "convergence.csv"));
}

TEST_F(Workspace, SuiteOfFiftyAllPassAndIsDeterministic) {
  const std::string text = R"({"seed": 3, "max_iter": 40,
      "problems": [{"suite": {"count": 50, "n_max": 32, "r_max": 16, "seed": 17}}],
      "methods": ["cg", "bfgs", "memoryless",
                  {"qn-subspace": {"step": {"kind": "uniform"}, "sigma": {"kind": "uniform"}}, "compare_modes": true}]})";
  const auto spec = load("s.json", text);
  std::ostringstream out;
  EXPECT_EQ(cmd_run(spec, Format::csv, false, 0, out), kExitPass) << out.str();
  const auto first = slurp(dir_ / "out" / "summary.csv");
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 201);
  std::ostringstream again;
  cmd_run(spec, Format::csv, false, 3, again);
  EXPECT_EQ(first, slurp(dir_ / "out" / "summary.csv"));
}

TEST_F(Workspace, VerifyValidUnitTrace) {
  write("running.json", kRunningExample);
  const auto spec = load("s.json", R"({"problems": [{"file": "running.json"}],
      "methods": [{"id": "unit", "qn-subspace": {"step": "unit", "sigma": 1.0}},
                  {"id": "els", "qn-subspace": {"step": "exact", "sigma": 1.0}}]})");
  std::ostringstream run_out;
  ASSERT_EQ(cmd_run(spec, Format::csv, false, 1, run_out), kExitPass);
  const std::string problem = (dir_ / "running.json").string();

  std::ostringstream unit;
  EXPECT_EQ(cmd_verify((dir_ / "out" / "traces" / "running__unit.json").string(), problem, Format::json, unit),
            kExitPass);
  const json reports = json::parse(unit.str());
  bool saw_corollary = false;
  for (const auto& r : reports) {
    if (r["check"] == "corollary-unit") {
      saw_corollary = true;
      EXPECT_EQ(r["iterations"], 3);
      EXPECT_EQ(r["grade"], 2);
    }
  }
  EXPECT_TRUE(saw_corollary);

  std::ostringstream els;
  EXPECT_EQ(cmd_verify((dir_ / "out" / "traces" / "running__els.json").string(), problem, Format::json, els),
            kExitPass);
  EXPECT_EQ(json::parse(els.str())[0]["iterations"], 2);

  std::ostringstream all;
  EXPECT_EQ(cmd_verify_all(spec, Format::csv, all), kExitPass);
}

TEST_F(Workspace, TamperedIterateFailsNamedInvariant) {
  write("running.json", kRunningExample);
  const auto spec = load("s.json", R"({"problems": [{"file": "running.json"}],
      "methods": [{"id": "unit", "qn-subspace": {"step": "unit", "sigma": 1.0}}]})");
  std::ostringstream run_out;
  ASSERT_EQ(cmd_run(spec, Format::csv, false, 1, run_out), kExitPass);
  const fs::path trace_path = dir_ / "out" / "traces" / "running__unit.json";
  json trace = read_json_file(trace_path.string());
  trace["iterations"][2]["x"][0] = trace["iterations"][2]["x"][0].get<double>() + 1e-3;
  write_json_file((dir_ / "tampered.json").string(), trace);
  std::ostringstream out;
  EXPECT_EQ(cmd_verify((dir_ / "tampered.json").string(), (dir_ / "running.json").string(), Format::text, out),
            kExitCheckFail);
  EXPECT_NE(out.str().find("[fail] iterate-recurrence"), std::string::npos) << out.str();
}

TEST_F(Workspace, DimensionMismatchIsSchemaError) {
  write("running.json", kRunningExample);
  write("three.json", R"({"n": 3, "H": [1, 0, 0, 0, 1, 0, 0, 0, 1], "c": [1, 1, 1]})");
  const auto spec = load("s.json", R"({"problems": [{"file": "running.json"}], "methods": ["cg"]})");
  std::ostringstream run_out;
  ASSERT_EQ(cmd_run(spec, Format::csv, false, 1, run_out), kExitPass);
  std::ostringstream out;
  EXPECT_THROW(cmd_verify((dir_ / "out" / "traces" / "running__cg.json").string(), (dir_ / "three.json").string(),
                          Format::text, out),
               InvalidSpec);
}

TEST_F(Workspace, IterationCapFailsChecks) {
  write("running.json", kRunningExample);
  const auto spec = load("s.json", R"({"max_iter": 1, "problems": [{"file": "running.json"}], "methods": ["cg"]})");
  std::ostringstream out;
  EXPECT_EQ(cmd_run(spec, Format::csv, false, 1, out), kExitCheckFail);
  EXPECT_NE(out.str().find("max-iter"), std::string::npos) << out.str();
}

TEST_F(Workspace, BreakdownRowsGiveExitThree) {
  // Hilbert matrix: CG loses conjugacy and cannot finish within r + 1 steps.
  const int n = 10;
  json h = json::array();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) h.push_back(1.0 / (i + j + 1));
  json prob = {{"id", "hilbert"}, {"n", n}, {"H", h}, {"c", std::vector<double>(n, 1.0)}};
  write("hilbert.json", prob.dump());
  const auto spec = load("s.json", R"({"problems": [{"file": "hilbert.json"}], "methods": ["cg"]})");
  std::ostringstream out;
  EXPECT_EQ(cmd_run(spec, Format::csv, false, 1, out), kExitBreakdown) << out.str();
  EXPECT_NE(out.str().find("breakdown"), std::string::npos) << out.str();
}

TEST(Suite, ExpansionIsSeededAndInRange) {
  SuiteSpec s;
  s.count = 30;
  s.n_max = 20;
  s.r_max = 6;
  s.seed = 5;
  const auto a = expand_suite(s);
  const auto b = expand_suite(s);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(spec_to_json(a[i].spec), spec_to_json(b[i].spec));
    EXPECT_GE(a[i].spec.grade, 1);
    EXPECT_LE(a[i].spec.grade, 6);
    EXPECT_GE(a[i].spec.n, a[i].spec.grade);
    EXPECT_LE(a[i].spec.n, 20);
  }
  EXPECT_EQ(a[0].id, "suite-000");
}
