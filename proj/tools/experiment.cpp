#include "rflex/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "rflex/flex.hpp"
#include "rflex/irn.hpp"
#include "rflex/rng.hpp"

namespace rflex {

static_assert(std::endian::native == std::endian::little, "raw float64 files are written in native byte order");

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not a number", key, value));
  return out;
}

Index to_index(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not an integer", key, value));
  return static_cast<Index>(out);
}

std::uint64_t to_seed(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, value));
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, value));
}

/// Reads typed values from a parameter map and remembers which keys were
/// used, so leftovers can be reported as unknown.
class ParamReader {
 public:
  ParamReader(const std::map<std::string, std::string>& params, std::string prefix)
      : params_(params), prefix_(std::move(prefix)) {}

  std::optional<std::string> str(const std::string& key) {
    used_.insert(key);
    const auto it = params_.find(key);
    if (it == params_.end()) return std::nullopt;
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) { return str(key).value_or(fallback); }
  double num(const std::string& key, double fallback) {
    const auto v = str(key);
    return v ? to_double(prefix_ + key, *v) : fallback;
  }
  Index index(const std::string& key, Index fallback) {
    const auto v = str(key);
    return v ? to_index(prefix_ + key, *v) : fallback;
  }
  bool flag(const std::string& key, bool fallback) {
    const auto v = str(key);
    return v ? to_bool(prefix_ + key, *v) : fallback;
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    const auto v = str(key);
    return v ? to_seed(prefix_ + key, *v) : fallback;
  }
  void reject_unused() const {
    for (const auto& [key, value] : params_)
      if (!used_.count(key)) throw ConfigError(fmt::format("unknown key '{}{}'", prefix_, key));
  }

 private:
  const std::map<std::string, std::string>& params_;
  std::string prefix_;
  std::set<std::string> used_;
};

FactorizationKind parse_basis(const std::string& key, const std::string& value) {
  if (value == "arnoldi") return FactorizationKind::arnoldi;
  if (value == "golub_kahan") return FactorizationKind::golub_kahan;
  throw ConfigError(fmt::format("{}: unknown basis '{}' (arnoldi, golub_kahan)", key, value));
}

template <class F>
auto config_enum(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

LambdaPolicy read_policy(ParamReader& r, const std::string& prefix, double nl) {
  LambdaPolicy policy;
  policy.kind = config_enum(prefix + "lambda_policy",
                            [&] { return parse_lambda_policy(r.str("lambda_policy", "fixed")); });
  policy.lambda = r.num("lambda", 0.0);
  policy.nl = r.num("nl", nl);
  policy.tau_lambda = r.num("tau_lambda", kDefaultTauLambda);
  return policy;
}

WeightSpec read_weight(ParamReader& r) { return {r.num("p", 1.0), r.num("tau", 1e-6)}; }

std::optional<Vector> optional_truth(const ProblemInstance& p) {
  if (p.x_true.size() == 0) return std::nullopt;
  return p.x_true;
}

SketchOperator irn_sketch(const ProblemInstance& p, Index s, std::uint64_t seed) {
  const Index m = p.a.rows();
  if (s >= m) return SketchOperator::identity(m);
  const LinearOperator op = p.psi.is_identity() ? p.a : compose({p.a, p.psi.inverse()});
  return build_leverage_sketch(estimate_leverage_scores(materialize(op)), s, splitmix64(seed));
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

double parse_csv_double(const std::string& field, const std::string& column, const std::string& source) {
  if (field == "nan") return kNaN;
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(fmt::format("{}: column '{}' holds '{}', not a number", source, column, field));
  return v;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", lineno));
    if (!out.emplace(key, value).second) throw ConfigError(fmt::format("line {}: duplicate key '{}'", lineno, key));
  }
  return out;
}

namespace {

/// Keys accepted under solver.<name>. for each method (besides `method`).
const std::set<std::string>& allowed_solver_keys(const std::string& method) {
  static const std::map<std::string, std::set<std::string>> table = [] {
    const std::set<std::string> common{"k_max", "p", "tau", "seed", "lambda"};
    const std::set<std::string> policy{"lambda_policy", "nl", "tau_lambda"};
    auto with = [&](std::set<std::string> base, std::initializer_list<std::set<std::string>> extra) {
      for (const auto& e : extra) base.insert(e.begin(), e.end());
      return base;
    };
    const std::set<std::string> flex_keys{"basis", "mode", "ell", "inner_tol", "inner_max", "sketch_mult",
                                          "reweight_basis"};
    const std::set<std::string> baseline_keys{"mode", "ell"};
    return std::map<std::string, std::set<std::string>>{
        {"irn_lsqr", with(common, {policy, {"inner_tol", "inner_max"}})},
        {"irn_s2p_lsqr", with(common, {policy, {"inner_tol", "inner_max", "sketch_mult"}})},
        {"flex_sns", with(common, {policy, flex_keys})},
        {"flex_s2p", with(common, {policy, flex_keys})},
        {"flex_exact", with(common, {policy, flex_keys})},
        {"lsqr", with(common, {policy, baseline_keys})},
        {"gmres", with(common, {policy, baseline_keys})},
        {"fista", common},
    };
  }();
  return table.at(method);
}

}  // namespace

const std::vector<std::string>& registered_methods() {
  static const std::vector<std::string> methods{"irn_lsqr", "irn_s2p_lsqr", "flex_sns", "flex_s2p",
                                                "flex_exact", "lsqr",     "gmres",    "fista"};
  return methods;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  ExperimentConfig config;
  std::map<std::string, std::map<std::string, std::string>> solver_params;
  std::vector<std::string> solver_names;
  bool have_seed = false;
  bool have_solvers = false;

  for (const auto& [key, value] : kv) {
    if (key == "problem.name") {
      config.problem.name = value;
    } else if (key == "problem.seed") {
      config.problem.seed = to_seed(key, value);
      have_seed = true;
    } else if (key == "problem.nl") {
      config.problem.nl = to_double(key, value);
    } else if (key.rfind("problem.", 0) == 0) {
      config.problem.params[key.substr(8)] = value;
    } else if (key == "solvers") {
      have_solvers = true;
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("solvers: empty solver name");
        if (std::find(solver_names.begin(), solver_names.end(), item) != solver_names.end())
          throw ConfigError(fmt::format("solvers: '{}' listed twice", item));
        solver_names.push_back(item);
      }
    } else if (key.rfind("solver.", 0) == 0) {
      const auto dot = key.find('.', 7);
      if (dot == std::string::npos) throw ConfigError(fmt::format("'{}': expected solver.<name>.<key>", key));
      solver_params[key.substr(7, dot - 7)][key.substr(dot + 1)] = value;
    } else if (key == "output.dir") {
      config.output_dir = value;
    } else if (key == "output.formats") {
      if (value != "csv") throw ConfigError(fmt::format("output.formats: only 'csv' is supported, got '{}'", value));
    } else {
      throw ConfigError(fmt::format("unknown key '{}'", key));
    }
  }

  if (config.problem.name.empty()) throw ConfigError("missing required key 'problem.name'");
  if (!have_seed) throw ConfigError("missing required key 'problem.seed'");
  if (!have_solvers || solver_names.empty()) throw ConfigError("missing required key 'solvers'");
  for (const auto& [name, params] : solver_params)
    if (std::find(solver_names.begin(), solver_names.end(), name) == solver_names.end())
      throw ConfigError(fmt::format("solver.{}: not listed in 'solvers'", name));

  const auto& methods = registered_methods();
  for (const auto& name : solver_names) {
    SolverSpec spec;
    spec.name = name;
    auto params = solver_params[name];
    const auto it = params.find("method");
    if (it == params.end()) throw ConfigError(fmt::format("missing required key 'solver.{}.method'", name));
    spec.method = it->second;
    if (std::find(methods.begin(), methods.end(), spec.method) == methods.end())
      throw ConfigError(fmt::format("solver.{}.method: unknown solver '{}'", name, spec.method));
    params.erase(it);
    const auto& allowed = allowed_solver_keys(spec.method);
    for (const auto& [key, value] : params)
      if (!allowed.count(key))
        throw ConfigError(fmt::format("unknown key 'solver.{}.{}' for method {}", name, key, spec.method));
    spec.params = std::move(params);
    config.solvers.push_back(std::move(spec));
  }
  return config;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

ProblemInstance build_problem(const ProblemSpec& spec) {
  ParamReader r(spec.params, "problem.");
  ProblemInstance inst;
  const std::uint64_t seed = spec.seed;
  if (spec.name == "subset_selection") {
    inst = gen_subset_selection(r.index("m", 2000), r.index("n", 400), r.num("rho", 0.95), r.num("bern_p", 0.1), seed);
  } else if (spec.name == "starfield") {
    inst = gen_starfield_deblur(r.index("nx", 64), r.num("density", 0.072), r.num("sigma", 1.5), seed);
  } else if (spec.name == "tomo") {
    inst = gen_tomo(r.index("nx", 64), r.index("angles", 18), r.index("rays", 95), seed);
  } else if (spec.name == "identity") {
    inst = gen_identity(r.index("n", 4), seed);
  } else if (spec.name == "bundle") {
    const auto path = r.str("path");
    if (!path) throw ConfigError("missing required key 'problem.path' for problem.name = bundle");
    r.reject_unused();
    inst = read_bundle(*path);
    if (spec.nl > 0.0) inst = add_noise(std::move(inst), spec.nl, splitmix64(seed));
    return inst;
  } else {
    throw ConfigError(fmt::format("problem.name: unknown problem '{}' (subset_selection, starfield, tomo, identity, "
                                  "bundle)",
                                  spec.name));
  }
  r.reject_unused();
  if (spec.nl < 0.0) throw ConfigError("problem.nl: must be non-negative");
  if (spec.nl > 0.0) inst = add_noise(std::move(inst), spec.nl, splitmix64(seed));
  return inst;
}

SolveResult run_solver(const SolverSpec& spec, const ProblemInstance& problem) {
  const std::string prefix = "solver." + spec.name + ".";
  ParamReader r(spec.params, prefix);
  const auto x_true = optional_truth(problem);
  const std::uint64_t seed = r.seed("seed", problem.seed);
  const Index k_max = r.index("k_max", 30);
  std::function<SolveResult()> job;

  if (spec.method == "irn_lsqr" || spec.method == "irn_s2p_lsqr") {
    IRNConfig c;
    c.weight = read_weight(r);
    c.outer_max = k_max;
    c.inner_tol = r.num("inner_tol", 1e-8);
    c.inner_max = r.index("inner_max", 0);
    c.lambda_policy = read_policy(r, prefix, problem.nl);
    c.seed = seed;
    try {
      c.validate(spec.method == "irn_s2p_lsqr");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("solver.{}: {}", spec.name, e.what()));
    }
    if (spec.method == "irn_lsqr") {
      r.reject_unused();
      job = [=, &problem] { return irn_solve(problem.a, problem.psi, problem.b, c, x_true); };
    } else {
      const Index s = r.index("sketch_mult", 4) * problem.a.cols();
      r.reject_unused();
      job = [=, &problem] {
        return irn_s2p_solve(problem.a, problem.psi, problem.b, c, irn_sketch(problem, s, seed), x_true);
      };
    }
  } else if (spec.method == "fista") {
    const WeightSpec weight = read_weight(r);
    const double lambda = r.num("lambda", 0.0);
    r.reject_unused();
    job = [=, &problem] { return fista_solve(problem.a, problem.psi, problem.b, lambda, k_max, weight, x_true); };
  } else {
    FlexSolverConfig c;
    c.k_max = k_max;
    c.weight = read_weight(r);
    c.lambda_policy = read_policy(r, prefix, problem.nl);
    c.seed = seed;
    c.inner_tol = r.num("inner_tol", 1e-10);
    c.inner_max = r.index("inner_max", 0);
    c.sketch_mult = r.index("sketch_mult", 4);
    const std::string ell = r.str("ell", spec.method == "lsqr" || spec.method == "gmres" ? "full" : "4");
    c.ell = ell == "full" ? std::nullopt : std::optional<Index>(to_index(prefix + "ell", ell));
    if (spec.method == "lsqr" || spec.method == "gmres") {
      c.basis = spec.method == "lsqr" ? FactorizationKind::golub_kahan : FactorizationKind::arnoldi;
      c.scheme = FlexScheme::exact;
      c.reweight_basis = false;
      c.mode = config_enum(prefix + "mode", [&] { return parse_flex_mode(r.str("mode", "none")); });
      if (c.mode == FlexMode::irw) throw ConfigError(prefix + "mode: irw needs a flexible method");
    } else {
      c.basis = parse_basis(prefix + "basis", r.str("basis", "golub_kahan"));
      c.mode = config_enum(prefix + "mode", [&] { return parse_flex_mode(r.str("mode", "irw")); });
      c.scheme = spec.method == "flex_sns"   ? FlexScheme::sketch_and_solve
                 : spec.method == "flex_s2p" ? FlexScheme::sketch_to_precondition
                                             : FlexScheme::exact;
      c.reweight_basis = r.flag("reweight_basis", true);
    }
    r.reject_unused();
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("solver.{}: {}", spec.name, e.what()));
    }
    job = [=, &problem] { return flex_solve(problem.a, problem.psi, problem.b, c, x_true); };
  }

  try {
    return job();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw SolverError(fmt::format("solver '{}' ({}) failed: {}", spec.name, spec.method, e.what()));
  }
}

void write_trace_csv(std::ostream& out, const std::string& solver, const SolveResult& result,
                     const TraceRow& initial_row) {
  std::string text;
  for (std::size_t i = 0; i < std::size(kTraceColumns); ++i) {
    if (i > 0) text += ',';
    text += kTraceColumns[i];
  }
  text += '\n';
  const auto emit = [&](const TraceRow& r) {
    text += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", solver, r.outer_iter, r.cum_inner_iter,
                        fmt_double(r.rel_error), fmt_double(r.objective_mm), fmt_double(r.objective_literal),
                        fmt_double(r.lambda), fmt_double(r.eps_hat), r.mono_cond_satisfied ? 1 : 0,
                        r.breakdown_flag ? 1 : 0);
  };
  emit(initial_row);
  for (const auto& row : result.trace) emit(row);
  out << text;
}

std::vector<TraceRecord> read_trace_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(source + ": empty trace file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) header.push_back(trim(col));
  }
  const std::size_t ncol = std::size(kTraceColumns);
  for (std::size_t i = 0; i < std::max(header.size(), ncol); ++i) {
    if (i >= header.size()) throw ConfigError(fmt::format("{}: missing column '{}'", source, kTraceColumns[i]));
    if (i >= ncol) throw ConfigError(fmt::format("{}: unexpected column '{}'", source, header[i]));
    if (header[i] != kTraceColumns[i])
      throw ConfigError(fmt::format("{}: column {} is '{}', expected '{}'", source, i + 1, header[i], kTraceColumns[i]));
  }
  std::vector<TraceRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(trim(field));
    if (f.size() != ncol)
      throw ConfigError(fmt::format("{}: line {} has {} fields, expected {}", source, lineno, f.size(), ncol));
    TraceRecord rec;
    rec.solver = f[0];
    rec.row.outer_iter = static_cast<Index>(parse_csv_double(f[1], kTraceColumns[1], source));
    rec.row.cum_inner_iter = static_cast<Index>(parse_csv_double(f[2], kTraceColumns[2], source));
    rec.row.rel_error = parse_csv_double(f[3], kTraceColumns[3], source);
    rec.row.objective_mm = parse_csv_double(f[4], kTraceColumns[4], source);
    rec.row.objective_literal = parse_csv_double(f[5], kTraceColumns[5], source);
    rec.row.lambda = parse_csv_double(f[6], kTraceColumns[6], source);
    rec.row.eps_hat = parse_csv_double(f[7], kTraceColumns[7], source);
    rec.row.mono_cond_satisfied = parse_csv_double(f[8], kTraceColumns[8], source) != 0.0;
    rec.row.breakdown_flag = parse_csv_double(f[9], kTraceColumns[9], source) != 0.0;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SummaryRow> compare_report(const std::vector<TraceRecord>& records, double threshold) {
  std::vector<SummaryRow> rows;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::pair<double, double>> state;  // (F_0, F_prev)
  for (const auto& rec : records) {
    auto [it, inserted] = index.emplace(rec.solver, rows.size());
    if (inserted) {
      rows.push_back({rec.solver});
      state[rec.solver] = {rec.row.objective_mm, kNaN};
    }
    SummaryRow& s = rows[it->second];
    auto& [f0, fprev] = state[rec.solver];
    const double f = rec.row.objective_mm;
    const double e = rec.row.rel_error;
    if (!std::isnan(e) && (std::isnan(s.best_rel_error) || e < s.best_rel_error)) s.best_rel_error = e;
    if (s.iterations_to_threshold < 0 && !std::isnan(e) && e <= threshold) s.iterations_to_threshold = rec.row.outer_iter;
    if (!std::isnan(fprev) && f > fprev + 1e-8 * f0) ++s.monotonicity_violations;
    fprev = f;
    s.final_objective = f;
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::string text = "solver,best_rel_error,iterations_to_threshold,final_objective,monotonicity_violations\n";
  for (const auto& r : rows)
    text += fmt::format("{},{},{},{},{}\n", r.solver, fmt_double(r.best_rel_error), r.iterations_to_threshold,
                        fmt_double(r.final_objective), r.monotonicity_violations);
  out << text;
}

void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.solver.size());
  std::string text = fmt::format("{:<{}}  {:>14}  {:>10}  {:>16}  {:>10}\n", "solver", width, "best_rel_error",
                                 "iters_thr", "final_objective", "mono_viol");
  for (const auto& r : rows)
    text += fmt::format("{:<{}}  {:>14.6e}  {:>10}  {:>16.8e}  {:>10}\n", r.solver, width, r.best_rel_error,
                        r.iterations_to_threshold < 0 ? std::string("-") : std::to_string(r.iterations_to_threshold),
                        r.final_objective, r.monotonicity_violations);
  out << text;
}

void write_f64(const fs::path& path, const Vector& v) {
  std::string bytes(static_cast<std::size_t>(v.size()) * sizeof(double), '\0');
  std::memcpy(bytes.data(), v.data(), bytes.size());
  write_atomic(path, bytes);
}

Vector read_f64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ConfigError("cannot read " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size % sizeof(double) != 0) throw ConfigError(path.string() + ": size is not a multiple of 8 bytes");
  Vector v(static_cast<Index>(size / sizeof(double)));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size));
  return v;
}

void write_bundle(const fs::path& dir, const ProblemSpec& spec, const ProblemInstance& inst) {
  if (!inst.psi.is_identity()) throw ConfigError("bundles support Ψ = I only");
  fs::create_directories(dir);
  const bool dense = inst.a.kind() == OperatorKind::dense;
  json meta;
  meta["rows"] = inst.a.rows();
  meta["cols"] = inst.a.cols();
  meta["operator"] = std::string(to_string(inst.a.kind()));
  meta["storage"] = dense ? "dense_row_major_f64" : "generator";
  meta["generator"] = spec.name;
  meta["params"] = spec.params;
  meta["seed"] = spec.seed;
  meta["nl"] = inst.nl;
  meta["descriptor"] = inst.descriptor;
  meta["image_rows"] = inst.image_rows;
  meta["image_cols"] = inst.image_cols;
  if (dense) {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor a = materialize(inst.a);
    write_f64(dir / "A.f64", Eigen::Map<const Vector>(a.data(), a.size()));
  }
  write_f64(dir / "x_true.f64", inst.x_true);
  write_f64(dir / "b.f64", inst.b);
  write_f64(dir / "b_exact.f64", inst.b_exact);
  write_atomic(dir / "A.meta.json", meta.dump(2) + "\n");
}

ProblemInstance read_bundle(const fs::path& dir) {
  std::ifstream in(dir / "A.meta.json");
  if (!in) throw ConfigError("cannot read " + (dir / "A.meta.json").string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw ConfigError((dir / "A.meta.json").string() + ": " + e.what());
  }
  const Index rows = meta.at("rows").get<Index>();
  const Index cols = meta.at("cols").get<Index>();
  ProblemInstance inst;
  if (meta.at("storage") == "dense_row_major_f64") {
    const Vector raw = read_f64(dir / "A.f64");
    if (raw.size() != rows * cols) throw ConfigError("A.f64: size does not match A.meta.json");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    inst.a = LinearOperator::dense(Matrix(Eigen::Map<const RowMajor>(raw.data(), rows, cols)));
  } else {
    ProblemSpec spec;
    spec.name = meta.at("generator").get<std::string>();
    spec.seed = meta.at("seed").get<std::uint64_t>();
    spec.params = meta.at("params").get<std::map<std::string, std::string>>();
    inst.a = build_problem(spec).a;
    if (inst.a.rows() != rows || inst.a.cols() != cols)
      throw ConfigError("regenerated operator does not match A.meta.json dimensions");
  }
  inst.psi = LinearOperator::identity(cols);
  inst.x_true = read_f64(dir / "x_true.f64");
  inst.b = read_f64(dir / "b.f64");
  inst.b_exact = read_f64(dir / "b_exact.f64");
  if (inst.x_true.size() != cols || inst.b.size() != rows || inst.b_exact.size() != rows)
    throw ConfigError("bundle vectors do not match A.meta.json dimensions");
  inst.nl = meta.value("nl", 0.0);
  inst.seed = meta.at("seed").get<std::uint64_t>();
  inst.descriptor = meta.value("descriptor", std::string());
  inst.image_rows = meta.value("image_rows", Index{0});
  inst.image_cols = meta.value("image_cols", Index{0});
  return inst;
}

void run_experiment(const ExperimentConfig& config_in, const RunOptions& options) {
  ExperimentConfig config = config_in;
  if (options.seed_override) config.problem.seed = *options.seed_override;
  fs::path out_dir = options.out_dir.empty() ? fs::path(config.output_dir) : options.out_dir;
  if (out_dir.empty()) throw ConfigError("no output directory: pass --out or set output.dir");
  if (options.threads < 1) throw ConfigError("--threads must be at least 1");

  const ProblemInstance problem = build_problem(config.problem);
  fs::create_directories(out_dir);

  const std::size_t n = config.solvers.size();
  std::vector<std::string> traces(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const SolverSpec& spec = config.solvers[i];
        const SolveResult res = run_solver(spec, problem);
        const double lambda0 = res.trace.empty() ? 0.0 : res.trace.front().lambda;
        // Every solver starts from x0 = 0, where the literal objective is ‖b‖².
        TraceRow initial;
        initial.rel_error = relative_error(Vector::Zero(problem.a.cols()), optional_truth(problem));
        initial.objective_mm = res.objective_initial;
        initial.objective_literal = problem.b.squaredNorm();
        initial.lambda = lambda0;
        std::ostringstream csv;
        write_trace_csv(csv, spec.name, res, initial);
        traces[i] = csv.str();
        write_atomic(out_dir / (spec.name + ".csv"), traces[i]);
        const Vector x = res.iterates.empty() ? Vector(Vector::Zero(problem.a.cols())) : res.x();
        write_f64(out_dir / (spec.name + ".x.f64"), x);
        json side;
        side["dims"] = {x.size()};
        side["seed"] = config.problem.seed;
        side["descriptor"] = problem.descriptor;
        side["solver"] = spec.name;
        side["method"] = spec.method;
        side["image_rows"] = problem.image_rows;
        side["image_cols"] = problem.image_cols;
        write_atomic(out_dir / (spec.name + ".x.json"), side.dump(2) + "\n");
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nthreads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(options.threads), n));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<TraceRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream in(traces[i]);
    auto recs = read_trace_csv(in, config.solvers[i].name + ".csv");
    records.insert(records.end(), recs.begin(), recs.end());
  }
  const auto summary = compare_report(records, options.report_threshold);
  std::ostringstream csv, text;
  write_summary_csv(csv, summary);
  write_summary_text(text, summary);
  write_atomic(out_dir / "summary.csv", csv.str());
  write_atomic(out_dir / "summary.txt", text.str());
}

}  // namespace rflex
