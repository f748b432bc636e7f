#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowps/config.hpp"

namespace flowps {

// The exact metrics.csv header, in column order.
inline constexpr const char* kMetricsHeader =
    "run_id,solver,task,psnr_db,mse,residual_rel,oracle_mean_err,"
    "oracle_cov_err,sliced_w,wall_ms";

struct RunRow {
  int run_id = 0;
  std::string solver;
  std::string task;
  double psnr_db = 0.0;
  double mse = 0.0;
  double residual_rel = 0.0;
  double oracle_mean_err = 0.0;
  double oracle_cov_err = 0.0;
  double sliced_w = 0.0;
  double wall_ms = 0.0;

  std::vector<std::string> csv_fields() const;
};

struct MetricReport {
  std::vector<RunRow> rows;
};

// Returns config seed unless the FLOWPS_SEED environment variable is set.
std::uint64_t effective_seed(const ExperimentConfig& config);

// `solve`: per run draws a ground truth from the prior, forms y = A x0 + n,
// runs the configured solver, writes metrics.csv / images / config.snapshot
// into run.out_dir. Returns a process exit code (nonzero if any run failed;
// rows for completed runs are still flushed).
int run_solve(const ExperimentConfig& config);

// `sample`: unconditional transport of the prior field; writes the terminal
// samples (text matrix), metrics.csv with the sliced-Wasserstein distance
// to fresh prior draws, and config.snapshot.
int run_sample(const ExperimentConfig& config);

// `train`: trains the MLP velocity on the configured prior; writes the loss
// trace, the model file, a sampling-quality row, and config.snapshot.
int run_train(const ExperimentConfig& config);

// `report <dir>`: reads metrics.csv from a run directory and renders a
// per-solver/task summary to the returned string.
std::string run_report(const std::string& dir);

}  // namespace flowps
