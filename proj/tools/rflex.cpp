#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rflex/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized flexible Krylov solvers for l2-lp regularized inverse problems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  double threshold = 0.1;
  std::vector<std::string> trace_files;

  auto* gen = app.add_subcommand("gen", "Write the configured problem as a bundle directory");
  gen->add_option("--config", config_path, "Experiment config file")->required();
  gen->add_option("--out", out_dir, "Bundle directory")->required();
  gen->add_option("--seed-override", seed_override, "Replace problem.seed");

  auto* run = app.add_subcommand("run", "Run every configured solver and write traces");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--out", out_dir, "Output directory (default: output.dir)");
  run->add_option("--seed-override", seed_override, "Replace problem.seed");
  run->add_option("--threads", threads, "Solver entries run concurrently")->check(CLI::PositiveNumber);
  run->add_option("--threshold", threshold, "Relative error threshold for the summary");

  auto* report = app.add_subcommand("report", "Summarize trace CSV files");
  report->add_option("traces", trace_files, "Trace CSV files")->required();
  report->add_option("--out", out_dir, "Directory for summary.csv and summary.txt");
  report->add_option("--threshold", threshold, "Relative error threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      auto config = rflex::load_experiment_config(config_path);
      if (seed_override) config.problem.seed = *seed_override;
      const auto inst = rflex::build_problem(config.problem);
      rflex::write_bundle(out_dir, config.problem, inst);
      std::cout << "wrote " << inst.descriptor << " to " << out_dir << "\n";
    } else if (*run) {
      const auto config = rflex::load_experiment_config(config_path);
      rflex::RunOptions options;
      options.out_dir = out_dir;
      options.seed_override = seed_override;
      options.threads = threads;
      options.report_threshold = threshold;
      rflex::run_experiment(config, options);
      std::ifstream summary(std::filesystem::path(out_dir.empty() ? config.output_dir : out_dir) / "summary.txt");
      std::cout << summary.rdbuf();
    } else if (*report) {
      std::vector<rflex::TraceRecord> records;
      for (const auto& file : trace_files) {
        std::ifstream in(file);
        if (!in) throw rflex::ConfigError("cannot read " + file);
        auto recs = rflex::read_trace_csv(in, file);
        records.insert(records.end(), recs.begin(), recs.end());
      }
      const auto rows = rflex::compare_report(records, threshold);
      rflex::write_summary_text(std::cout, rows);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream csv(std::filesystem::path(out_dir) / "summary.csv");
        rflex::write_summary_csv(csv, rows);
        std::ofstream txt(std::filesystem::path(out_dir) / "summary.txt");
        rflex::write_summary_text(txt, rows);
      }
    }
  } catch (const rflex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const rflex::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return 0;
}
