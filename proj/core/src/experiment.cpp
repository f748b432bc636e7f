#include "flowps/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "flowps/errors.hpp"
#include "flowps/io.hpp"
#include "flowps/metrics.hpp"

namespace flowps {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

void write_snapshot(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig explicit_cfg = config;
  explicit_cfg.run.seed = seed;  // snapshot records the seed actually used
  std::ofstream os(fs::path(config.run.out_dir) / "config.snapshot");
  if (!os) {
    throw ConfigError("cannot write config.snapshot in " +
                      config.run.out_dir);
  }
  os << serialize_config(explicit_cfg.snapshot());
}

// PGM span: each image is written with its own finite range (degenerate
// ranges get a unit span so constant images still serialize).
void write_image(const std::string& path, const Eigen::VectorXd& x, int height,
                 int width) {
  const Eigen::MatrixXd img = vector_to_image(x, height, width);
  double lo = img.minCoeff();
  double hi = img.maxCoeff();
  if (!(hi > lo)) {
    hi = lo + 1.0;
  }
  write_pgm(path, img, lo, hi);
}

int image_side(int dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(dim)));
  return side * side == dim ? side : 0;
}

Trajectory dispatch_solver(const SolverSpec& spec, const VelocityField& field,
                           const AffineSchedule& sched,
                           const GaussianMixture& prior,
                           const Measurement& meas, Rng& rng) {
  switch (spec.name) {
    case SolverSpec::Name::flowdps:
      return flowdps_solve(field, sched, meas, spec.config, rng);
    case SolverSpec::Name::dps_velocity:
      return dps_velocity_solve(field, sched, meas, spec.config, rng);
    case SolverSpec::Name::flowchef:
      return flowchef_solve(field, sched, meas, spec.config, rng);
    case SolverSpec::Name::oracle:
      return posterior_oracle_solve(prior, sched, meas, spec.config, rng);
    case SolverSpec::Name::unconditional:
      return sample_flow(field, sched, spec.config, rng);
  }
  throw UsageError("dispatch_solver: unknown solver");
}

double safe_psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& ref) {
  if (ref.size() > 0 && ref.maxCoeff() > ref.minCoeff()) {
    return psnr_mapped01(x, ref);
  }
  return psnr(x, ref, 1.0);
}

}  // namespace

std::vector<std::string> RunRow::csv_fields() const {
  return {std::to_string(run_id),
          solver,
          task,
          format_double(psnr_db),
          format_double(mse),
          format_double(residual_rel),
          format_double(oracle_mean_err),
          format_double(oracle_cov_err),
          format_double(sliced_w),
          format_double(wall_ms)};
}

std::uint64_t effective_seed(const ExperimentConfig& config) {
  if (const char* env = std::getenv("FLOWPS_SEED")) {
    const std::string v(env);
    try {
      std::size_t used = 0;
      const std::uint64_t s = std::stoull(v, &used);
      if (used != v.size()) {
        throw std::invalid_argument(v);
      }
      return s;
    } catch (const std::exception&) {
      throw ConfigError("FLOWPS_SEED is not an unsigned integer: '" + v +
                        "'");
    }
  }
  return config.run.seed;
}

int run_solve(const ExperimentConfig& config) {
  const std::uint64_t seed = effective_seed(config);
  fs::create_directories(config.run.out_dir);
  write_snapshot(config, seed);

  const AffineSchedule sched = AffineSchedule::linear();
  const GmmVelocityField field(config.prior, sched);
  const int d = config.prior.dim();
  const auto op = make_task_operator(config.task, d);
  const int side = image_side(d);

  // Posterior moments for the oracle-error columns (exact for every linear
  // task at desk scale).
  CsvWriter csv((fs::path(config.run.out_dir) / "metrics.csv").string(),
                kMetricsHeader);
  Rng base(seed);
  int failures = 0;
  for (int run = 0; run < config.run.runs; ++run) {
    Rng rng = base.substream(static_cast<std::uint64_t>(run));
    const Eigen::VectorXd x0 = sample(config.prior, rng, 1).row(0);
    const Measurement meas =
        make_measurement(op, x0, config.task.sigma_n, rng);

    RunRow row;
    row.run_id = run;
    row.solver = config.solver.name_string();
    row.task = config.task.name();

    const auto start = Clock::now();
    try {
      const Trajectory traj =
          dispatch_solver(config.solver, field, sched, config.prior, meas, rng);
      row.wall_ms = elapsed_ms(start);

      const Eigen::VectorXd& xhat = traj.terminal();
      row.psnr_db = safe_psnr(xhat, x0);
      row.mse = mse(xhat, x0);
      row.residual_rel =
          meas.y.norm() > 0.0 ? relative_residual(meas, xhat) : 0.0;

      if (config.task.sigma_n > 0.0) {
        const GaussianMixture post =
            linear_gaussian_posterior(config.prior, *op, meas.y,
                                      config.task.sigma_n);
        const Eigen::VectorXd mu = post.mean();
        const Eigen::MatrixXd cov = post.covariance();
        const double mu_norm = std::max(1.0, mu.norm());
        row.oracle_mean_err = (xhat - mu).norm() / mu_norm;
        const double tr = cov.trace();
        row.oracle_cov_err =
            tr > 0.0 ? std::abs((xhat - mu).squaredNorm() - tr) / tr : 0.0;
      }

      if (config.run.write_images && side > 0) {
        const fs::path dir(config.run.out_dir);
        const std::string tag = "run" + std::to_string(run);
        write_image((dir / (tag + "_truth.pgm")).string(), x0, side, side);
        write_image((dir / (tag + "_recon.pgm")).string(), xhat, side, side);
        if (op->output_height() > 0) {
          write_image((dir / (tag + "_meas.pgm")).string(), meas.y,
                      op->output_height(), op->output_width());
        }
      }
    } catch (const Error& e) {
      row.wall_ms = elapsed_ms(start);
      row.solver += ":failed";
      ++failures;
      csv.write_row(row.csv_fields());
      csv.flush();
      std::ofstream err(fs::path(config.run.out_dir) / "error.log",
                        std::ios::app);
      err << "run " << run << ": " << e.what() << '\n';
      continue;
    }
    csv.write_row(row.csv_fields());
    csv.flush();
  }
  return failures == 0 ? 0 : 1;
}

int run_sample(const ExperimentConfig& config) {
  const std::uint64_t seed = effective_seed(config);
  fs::create_directories(config.run.out_dir);
  write_snapshot(config, seed);

  const AffineSchedule sched = AffineSchedule::linear();
  const GmmVelocityField field(config.prior, sched);
  const int n = std::max(1, config.run.samples);

  Rng base(seed);
  Rng rng = base.substream(0);
  const auto start = Clock::now();
  const Eigen::MatrixXd terminal =
      sample_flow_terminal_batch(field, sched, config.solver.config, rng, n);
  const double wall = elapsed_ms(start);

  Rng prior_rng = base.substream(1);
  const Eigen::MatrixXd reference = sample(config.prior, prior_rng, n);
  Rng proj_rng = base.substream(2);
  const double sw =
      sliced_wasserstein(terminal.transpose(), reference, 64, proj_rng);

  const fs::path dir(config.run.out_dir);
  write_matrix((dir / "samples.txt").string(), terminal.transpose());

  CsvWriter csv((dir / "metrics.csv").string(), kMetricsHeader);
  RunRow row;
  row.run_id = 0;
  row.solver = "unconditional";
  row.task = "none";
  row.sliced_w = sw;
  row.wall_ms = wall;
  csv.write_row(row.csv_fields());
  return 0;
}

int run_train(const ExperimentConfig& config) {
  const std::uint64_t seed = effective_seed(config);
  fs::create_directories(config.run.out_dir);
  write_snapshot(config, seed);

  Rng base(seed);
  Rng init_rng = base.substream(1);
  MlpVelocity model(config.train.mlp, init_rng);

  TrainConfig tc = config.train.config;
  tc.seed = base.substream(2).seed();
  const auto start = Clock::now();
  const TrainResult result = train_flow(model, config.prior, tc);
  const double wall = elapsed_ms(start);

  const fs::path dir(config.run.out_dir);
  {
    std::ofstream trace(dir / "loss_trace.csv");
    if (!trace) {
      throw ConfigError("cannot write loss_trace.csv in " +
                        config.run.out_dir);
    }
    trace << result.header << '\n' << "step,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
      trace << (i + 1) << ',' << format_double(result.losses[i]) << '\n';
    }
  }
  model.save((dir / config.train.model_out).string());

  // Post-training sampling quality against fresh prior draws.
  const AffineSchedule sched = AffineSchedule::linear();
  const int n = std::max(1, config.run.samples);
  Rng gen_rng = base.substream(3);
  const Eigen::MatrixXd generated =
      sample_flow_terminal_batch(model, sched, config.solver.config, gen_rng,
                                 n);
  Rng prior_rng = base.substream(4);
  const Eigen::MatrixXd reference = sample(config.prior, prior_rng, n);
  Rng proj_rng = base.substream(5);
  const double sw =
      sliced_wasserstein(generated.transpose(), reference, 64, proj_rng);

  CsvWriter csv((dir / "metrics.csv").string(), kMetricsHeader);
  RunRow row;
  row.run_id = 0;
  row.solver = "cfm_train";
  row.task = "none";
  row.mse = result.losses.empty() ? 0.0 : result.losses.back();
  row.sliced_w = sw;
  row.wall_ms = wall;
  csv.write_row(row.csv_fields());
  return 0;
}

std::string run_report(const std::string& dir) {
  const fs::path csv_path = fs::path(dir) / "metrics.csv";
  std::ifstream is(csv_path);
  if (!is) {
    throw ConfigError("report: cannot open " + csv_path.string());
  }
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw ConfigError("report: unexpected metrics.csv header in " +
                      csv_path.string());
  }

  struct Group {
    std::vector<double> psnr;
    std::vector<double> residual;
    std::vector<double> sliced;
    double wall_ms = 0.0;
  };
  std::map<std::string, Group> groups;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ls, f, ',')) {
      fields.push_back(f);
    }
    if (fields.size() != 10) {
      throw ConfigError("report: malformed row: " + line);
    }
    Group& g = groups[fields[1] + " / " + fields[2]];
    g.psnr.push_back(std::stod(fields[3]));
    g.residual.push_back(std::stod(fields[5]));
    g.sliced.push_back(std::stod(fields[8]));
    g.wall_ms += std::stod(fields[9]);
  }

  auto median = [](std::vector<double> v) {
    if (v.empty()) {
      return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  std::ostringstream os;
  os << "solver / task                      runs  med_psnr  med_resid  "
        "med_sw   total_ms\n";
  for (const auto& [name, g] : groups) {
    os << std::left << std::setw(34) << name << std::right << std::setw(5)
       << g.psnr.size() << std::fixed << std::setprecision(3) << std::setw(10)
       << median(g.psnr) << std::setw(11) << median(g.residual)
       << std::setw(9) << median(g.sliced) << std::setprecision(1)
       << std::setw(11) << g.wall_ms << '\n';
  }
  return os.str();
}

}  // namespace flowps
