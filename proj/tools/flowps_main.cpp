// Command-line front end: self-checks, sampling, posterior solving, flow
// training, and report summaries, all driven by flat key=value config files.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "flowps/config.hpp"
#include "flowps/errors.hpp"
#include "flowps/experiment.hpp"
#include "flowps/verify.hpp"

namespace {

int cmd_verify(bool full) {
  const std::vector<flowps::SuiteResult> results = flowps::run_verify(full);
  for (const auto& r : results) {
    std::printf("[%s] %-28s (max err %.3e)%s%s\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.max_err, r.note.empty() ? "" : " ",
                r.note.c_str());
  }
  const int failures = flowps::count_failures(results);
  std::printf("%zu suites, %d failed\n", results.size(), failures);
  return failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowps: flow-matching posterior sampling workbench"};
  app.require_subcommand(1);

  bool full = false;
  CLI::App* verify =
      app.add_subcommand("verify", "Run the library self-check suites");
  verify->add_flag("--full", full,
                   "Also run the Monte-Carlo suites (slower)");

  std::string sample_cfg;
  CLI::App* sample = app.add_subcommand(
      "sample", "Draw unconditional samples from a configured prior/flow");
  sample->add_option("config", sample_cfg, "Config file")
      ->required()
      ->check(CLI::ExistingFile);

  std::string solve_cfg;
  CLI::App* solve = app.add_subcommand(
      "solve", "Run the configured posterior solver on a synthetic task");
  solve->add_option("config", solve_cfg, "Config file")
      ->required()
      ->check(CLI::ExistingFile);

  std::string train_cfg;
  CLI::App* train = app.add_subcommand(
      "train", "Train a velocity network by conditional flow matching");
  train->add_option("config", train_cfg, "Config file")
      ->required()
      ->check(CLI::ExistingFile);

  std::string report_dir;
  CLI::App* report = app.add_subcommand(
      "report", "Summarize the metrics.csv found in a run directory");
  report->add_option("dir", report_dir, "Run output directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      return cmd_verify(full);
    }
    if (sample->parsed()) {
      return flowps::run_sample(flowps::ExperimentConfig::from_file(sample_cfg));
    }
    if (solve->parsed()) {
      return flowps::run_solve(flowps::ExperimentConfig::from_file(solve_cfg));
    }
    if (train->parsed()) {
      return flowps::run_train(flowps::ExperimentConfig::from_file(train_cfg));
    }
    if (report->parsed()) {
      std::cout << flowps::run_report(report_dir);
      return 0;
    }
  } catch (const flowps::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
