#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rflex/problems.hpp"
#include "rflex/solver_common.hpp"

namespace rflex {

/// Invalid or incomplete experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver failed while running (CLI exit code 3).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text, one entry per line, `#` starts a comment.
/// Later duplicates are an error rather than an override.
std::map<std::string, std::string> parse_key_values(const std::string& text);

struct ProblemSpec {
  std::string name;
  std::uint64_t seed = 0;
  double nl = 0.0;
  /// Generator parameters (problem.<key>), excluding name, seed and nl.
  std::map<std::string, std::string> params;
};

struct SolverSpec {
  std::string name;
  std::string method;
  /// solver.<name>.<key> entries, excluding method.
  std::map<std::string, std::string> params;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<SolverSpec> solvers;
  /// output.dir; the --out flag takes precedence.
  std::string output_dir;
};

/// Validates keys, required entries and value syntax; throws ConfigError
/// naming the offending key.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Instance for problem.name, with noise level problem.nl applied.
ProblemInstance build_problem(const ProblemSpec& spec);

/// Runs one configured solver. Configuration errors raise ConfigError, any
/// failure inside the solver raises SolverError.
SolveResult run_solver(const SolverSpec& spec, const ProblemInstance& problem);

/// Method names accepted by solver.<name>.method.
const std::vector<std::string>& registered_methods();

inline constexpr const char* kTraceColumns[] = {"solver",         "outer_iter",        "cum_inner_iter",
                                                "rel_error",      "objective_mm",      "objective_literal",
                                                "lambda",         "eps_hat",           "mono_cond_satisfied",
                                                "breakdown_flag"};

/// Header plus one row for the starting point (outer_iter 0) and one per
/// outer iteration; doubles as %.17g.
void write_trace_csv(std::ostream& out, const std::string& solver, const SolveResult& result,
                     const TraceRow& initial_row);

struct TraceRecord {
  std::string solver;
  TraceRow row;
};

/// Parses a trace CSV; a header that differs from the schema raises
/// ConfigError naming the first mismatching column.
std::vector<TraceRecord> read_trace_csv(std::istream& in, const std::string& source);

struct SummaryRow {
  std::string solver;
  double best_rel_error = kNaN;
  /// First outer iteration with rel_error <= threshold, -1 if never.
  Index iterations_to_threshold = -1;
  double final_objective = kNaN;
  /// Iterations with F_k > F_{k-1} + 1e-8 F_0, F_0 the outer_iter 0 row.
  Index monotonicity_violations = 0;
};

std::vector<SummaryRow> compare_report(const std::vector<TraceRecord>& records, double threshold);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Problem bundle: A.meta.json, x_true.f64, b.f64, b_exact.f64, plus A.f64
/// (row-major) when A is dense. Matrix-free operators are rebuilt from the
/// generator parameters stored in the metadata.
void write_bundle(const std::filesystem::path& dir, const ProblemSpec& spec, const ProblemInstance& inst);
ProblemInstance read_bundle(const std::filesystem::path& dir);

/// Little-endian raw float64 vector I/O.
void write_f64(const std::filesystem::path& path, const Vector& v);
Vector read_f64(const std::filesystem::path& path);

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  double report_threshold = 0.1;
};

/// Full `run`: traces, solutions with JSON sidecars, summary. Solver entries
/// run on up to `threads` workers; every file is written atomically.
void run_experiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace rflex
