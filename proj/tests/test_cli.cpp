#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rflex/experiment.hpp"

namespace rflex {
namespace {

namespace fs = std::filesystem;

/// Fresh scratch directory under the build tree, removed on destruction.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::current_path() / ("cli_scratch_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RFLEX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kMinimal = R"(# identity problem, plain LSQR
problem.name = identity
problem.n = 4
problem.seed = 1
solvers = ls
solver.ls.method = lsqr
solver.ls.k_max = 4
)";

std::string config_error_message(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, KeyValueSyntax) {
  const auto kv = parse_key_values("a.b = 1 # comment\n\n  c=two words  \n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a.b"), "1");
  EXPECT_EQ(kv.at("c"), "two words");
  EXPECT_THROW(parse_key_values("novalue\n"), ConfigError);
  EXPECT_THROW(parse_key_values("a=1\na=2\n"), ConfigError);
}

TEST(Config, MinimalParses) {
  const auto c = parse_experiment_config(kMinimal);
  EXPECT_EQ(c.problem.name, "identity");
  EXPECT_EQ(c.problem.seed, 1u);
  ASSERT_EQ(c.solvers.size(), 1u);
  EXPECT_EQ(c.solvers[0].method, "lsqr");
  EXPECT_EQ(c.solvers[0].params.at("k_max"), "4");
}

TEST(Config, ValidationErrorsNameTheKey) {
  std::string text = kMinimal;
  EXPECT_NE(config_error_message(std::string(text).replace(text.find("problem.seed = 1\n"), 17, ""))
                .find("problem.seed"),
            std::string::npos);
  const std::string bad_method = std::string(kMinimal) + "solvers = x\n";
  EXPECT_NE(config_error_message(bad_method).find("duplicate"), std::string::npos);
  std::string unknown = kMinimal;
  unknown.replace(unknown.find("= lsqr"), 6, "= magic");
  const std::string msg = config_error_message(unknown);
  EXPECT_NE(msg.find("solver.ls.method"), std::string::npos) << msg;
  EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
  EXPECT_NE(config_error_message(std::string(kMinimal) + "solver.ls.bogus = 3\n").find("solver.ls.bogus"),
            std::string::npos);
  EXPECT_NE(config_error_message(std::string(kMinimal) + "solver.ls.sketch_mult = 3\n").find("sketch_mult"),
            std::string::npos);
  EXPECT_NE(config_error_message(std::string(kMinimal) + "solver.other.k_max = 3\n").find("solver.other"),
            std::string::npos);
  EXPECT_NE(config_error_message(std::string(kMinimal) + "mystery = 1\n").find("mystery"), std::string::npos);
}

TEST(Config, BadSolverValueRejectedAtRun) {
  const auto c = parse_experiment_config(std::string(kMinimal) + "solver.ls.ell = two\n");
  const auto inst = build_problem(c.problem);
  try {
    run_solver(c.solvers[0], inst);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("solver.ls.ell"), std::string::npos) << e.what();
  }
}

TEST(Run, MinimalIdentityLsqrIsExact) {
  const auto c = parse_experiment_config(kMinimal);
  const auto inst = build_problem(c.problem);
  const auto res = run_solver(c.solvers[0], inst);
  bool reached = false;
  for (const auto& row : res.trace)
    if (row.outer_iter <= 4 && row.rel_error <= 1e-10) reached = true;
  EXPECT_TRUE(reached);
}

TEST(Run, EveryMethodRunsAndObjectivesAreFiniteNonNegative) {
  std::string text = R"(problem.name = starfield
problem.nx = 16
problem.density = 0.1
problem.sigma = 1.0
problem.nl = 0.01
problem.seed = 4
solvers = a, b, c, d, e, f, g, h
solver.a.method = irn_lsqr
solver.a.lambda = 0.01
solver.b.method = irn_s2p_lsqr
solver.b.lambda = 0.01
solver.b.sketch_mult = 1
solver.c.method = flex_sns
solver.c.basis = arnoldi
solver.c.lambda_policy = wgcv
solver.d.method = flex_s2p
solver.d.lambda_policy = dp
solver.e.method = flex_exact
solver.e.lambda_policy = optimal
solver.f.method = lsqr
solver.f.mode = hybrid
solver.f.lambda = 0.01
solver.g.method = gmres
solver.h.method = fista
solver.h.lambda = 0.01
)";
  const auto c = parse_experiment_config(text);
  const auto inst = build_problem(c.problem);
  for (const auto& spec : c.solvers) {
    const auto res = run_solver(spec, inst);
    ASSERT_FALSE(res.trace.empty()) << spec.name;
    for (const auto& row : res.trace) {
      EXPECT_TRUE(std::isfinite(row.objective_mm)) << spec.name;
      EXPECT_GE(row.objective_mm, 0.0) << spec.name;
    }
  }
}

TEST(Trace, CsvRoundTripIsBitExact) {
  SolveResult res;
  TraceRow r;
  r.outer_iter = 1;
  r.cum_inner_iter = 7;
  r.rel_error = 0.1 + 0.2;
  r.objective_mm = 1.0 / 3.0;
  r.objective_literal = 2.0 / 3.0;
  r.lambda = 1e-300;
  r.mono_cond_satisfied = true;
  res.trace.push_back(r);
  res.iterates.push_back(Vector::Zero(1));
  TraceRow r0;
  r0.objective_mm = 5.0;
  std::stringstream ss;
  write_trace_csv(ss, "s", res, r0);
  const auto recs = read_trace_csv(ss, "mem");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].row.rel_error, r.rel_error);
  EXPECT_EQ(recs[1].row.objective_mm, r.objective_mm);
  EXPECT_EQ(recs[1].row.lambda, r.lambda);
  EXPECT_TRUE(std::isnan(recs[1].row.eps_hat));
  EXPECT_TRUE(recs[1].row.mono_cond_satisfied);
  EXPECT_EQ(recs[1].row.cum_inner_iter, 7);
}

TEST(Trace, SchemaMismatchNamesColumn) {
  std::stringstream ss("solver,outer_iter,cum_inner_iter,rel_err,objective_mm\n");
  try {
    read_trace_csv(ss, "bad.csv");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rel_err"), std::string::npos) << msg;
    EXPECT_NE(msg.find("rel_error"), std::string::npos) << msg;
  }
}

std::vector<TraceRecord> planted(const std::string& solver, std::vector<std::pair<double, double>> err_obj) {
  std::vector<TraceRecord> out;
  for (std::size_t k = 0; k < err_obj.size(); ++k) {
    TraceRecord r;
    r.solver = solver;
    r.row.outer_iter = static_cast<Index>(k);
    r.row.rel_error = err_obj[k].first;
    r.row.objective_mm = err_obj[k].second;
    out.push_back(r);
  }
  return out;
}

TEST(Report, SingleTraceValuesCopied) {
  const auto rows = compare_report(planted("only", {{1.0, 10.0}}), 0.5);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].solver, "only");
  EXPECT_EQ(rows[0].best_rel_error, 1.0);
  EXPECT_EQ(rows[0].final_objective, 10.0);
  EXPECT_EQ(rows[0].iterations_to_threshold, -1);
  EXPECT_EQ(rows[0].monotonicity_violations, 0);
}

TEST(Report, PlantedArgminAndViolations) {
  auto recs = planted("a", {{1.0, 10.0}, {0.4, 5.0}, {0.3, 6.0}, {0.35, 4.0}});
  const auto b = planted("b", {{1.0, 10.0}, {0.2, 9.0}, {0.25, 8.0}});
  recs.insert(recs.end(), b.begin(), b.end());
  const auto rows = compare_report(recs, 0.38);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].best_rel_error, 0.3);
  EXPECT_EQ(rows[0].iterations_to_threshold, 2);
  EXPECT_EQ(rows[0].monotonicity_violations, 1);
  EXPECT_EQ(rows[0].final_objective, 4.0);
  EXPECT_EQ(rows[1].best_rel_error, 0.2);
  EXPECT_EQ(rows[1].iterations_to_threshold, 1);
  const auto best = std::min_element(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    return x.best_rel_error < y.best_rel_error;
  });
  EXPECT_EQ(best->solver, "b");
}

TEST(Bundle, DenseAndGeneratorRoundTrips) {
  ScratchDir dir("bundle");
  for (const char* name : {"subset_selection", "tomo"}) {
    ProblemSpec spec;
    spec.name = name;
    spec.seed = 9;
    spec.nl = 0.02;
    if (spec.name == "subset_selection")
      spec.params = {{"m", "30"}, {"n", "10"}, {"bern_p", "0.5"}};
    else
      spec.params = {{"nx", "16"}, {"angles", "6"}, {"rays", "23"}};
    const auto inst = build_problem(spec);
    const fs::path p = dir.path / name;
    write_bundle(p, spec, inst);
    EXPECT_EQ(fs::exists(p / "A.f64"), spec.name == "subset_selection");
    const auto back = read_bundle(p);
    EXPECT_EQ(back.b, inst.b);
    EXPECT_EQ(back.b_exact, inst.b_exact);
    EXPECT_EQ(back.x_true, inst.x_true);
    EXPECT_EQ(materialize(back.a), materialize(inst.a));
    EXPECT_EQ(back.nl, inst.nl);
  }
}

TEST(Cli, ExitCodes) {
  ScratchDir dir("exit");
  spit(dir.path / "ok.cfg", kMinimal);
  EXPECT_EQ(run_cli("run --config " + (dir.path / "ok.cfg").string() + " --out " + (dir.path / "o").string()), 0);
  EXPECT_TRUE(fs::exists(dir.path / "o" / "ls.csv"));
  EXPECT_TRUE(fs::exists(dir.path / "o" / "ls.x.f64"));
  EXPECT_TRUE(fs::exists(dir.path / "o" / "ls.x.json"));
  EXPECT_TRUE(fs::exists(dir.path / "o" / "summary.csv"));

  std::string no_seed = kMinimal;
  no_seed.replace(no_seed.find("problem.seed = 1\n"), 17, "");
  spit(dir.path / "noseed.cfg", no_seed);
  EXPECT_EQ(run_cli("run --config " + (dir.path / "noseed.cfg").string() + " --out " + (dir.path / "x").string()), 2);

  std::string unknown = kMinimal;
  unknown.replace(unknown.find("= lsqr"), 6, "= magic");
  spit(dir.path / "unknown.cfg", unknown);
  EXPECT_EQ(run_cli("run --config " + (dir.path / "unknown.cfg").string() + " --out " + (dir.path / "x").string()),
            2);

  // A valid config whose solver refuses the instance at run time: the gcv
  // rule for IRN is limited to small dense problems.
  spit(dir.path / "fail.cfg", R"(problem.name = subset_selection
problem.m = 520
problem.n = 510
problem.seed = 2
problem.nl = 0.01
solvers = big
solver.big.method = irn_lsqr
solver.big.lambda_policy = gcv
solver.big.k_max = 1
)");
  EXPECT_EQ(run_cli("run --config " + (dir.path / "fail.cfg").string() + " --out " + (dir.path / "x").string()), 3);

  EXPECT_EQ(run_cli("report " + (dir.path / "o" / "ls.csv").string()), 0);
  spit(dir.path / "bad.csv", "solver,outer\n");
  EXPECT_EQ(run_cli("report " + (dir.path / "bad.csv").string()), 2);
  EXPECT_EQ(run_cli("gen --config " + (dir.path / "ok.cfg").string() + " --out " + (dir.path / "g").string()), 0);
  EXPECT_TRUE(fs::exists(dir.path / "g" / "A.meta.json"));
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  ScratchDir dir("determinism");
  const std::string cfg = R"(problem.name = starfield
problem.nx = 16
problem.density = 0.08
problem.sigma = 1.2
problem.nl = 0.01
problem.seed = 5
solvers = sns, s2p, irn
solver.sns.method = flex_sns
solver.sns.basis = arnoldi
solver.sns.lambda = 0.01
solver.sns.k_max = 15
solver.s2p.method = flex_s2p
solver.s2p.basis = arnoldi
solver.s2p.lambda = 0.01
solver.s2p.k_max = 15
solver.irn.method = irn_s2p_lsqr
solver.irn.lambda = 0.01
solver.irn.k_max = 5
solver.irn.sketch_mult = 1
)";
  spit(dir.path / "c.cfg", cfg);
  const auto c = (dir.path / "c.cfg").string();
  ASSERT_EQ(run_cli("run --config " + c + " --out " + (dir.path / "r1").string()), 0);
  ASSERT_EQ(run_cli("run --config " + c + " --out " + (dir.path / "r2").string()), 0);
  ASSERT_EQ(run_cli("run --config " + c + " --threads 3 --out " + (dir.path / "r3").string()), 0);
  for (const char* f : {"sns.csv", "s2p.csv", "irn.csv", "summary.csv", "s2p.x.f64"}) {
    const std::string a = slurp(dir.path / "r1" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir.path / "r2" / f)) << f;
    EXPECT_EQ(a, slurp(dir.path / "r3" / f)) << f;
  }
  ASSERT_EQ(run_cli("run --config " + c + " --seed-override 6 --out " + (dir.path / "r4").string()), 0);
  EXPECT_NE(slurp(dir.path / "r1" / "sns.csv"), slurp(dir.path / "r4" / "sns.csv"));
}

TEST(Cli, PairedIrnTracesShareOuterGrid) {
  const auto c = parse_experiment_config(R"(problem.name = subset_selection
problem.m = 300
problem.n = 60
problem.seed = 3
problem.nl = 0.01
solvers = plain, s2p
solver.plain.method = irn_lsqr
solver.plain.lambda = 0.5
solver.plain.k_max = 8
solver.s2p.method = irn_s2p_lsqr
solver.s2p.lambda = 0.5
solver.s2p.k_max = 8
)");
  const auto inst = build_problem(c.problem);
  const auto a = run_solver(c.solvers[0], inst);
  const auto b = run_solver(c.solvers[1], inst);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_EQ(a.trace[k].outer_iter, b.trace[k].outer_iter);
}

}  // namespace
}  // namespace rflex
