#include "flowps/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

void check_finite(const Eigen::VectorXd& x, const char* solver, int step,
                  double t) {
  if (!x.allFinite()) {
    throw SolverError(std::string(solver) + ": non-finite state after step " +
                      std::to_string(step) + " (t = " + std::to_string(t) +
                      ")");
  }
}

Eigen::VectorXd step_velocity(const VelocityField& field, double te,
                              const Eigen::VectorXd& x,
                              const SolverConfig& cfg) {
  if (cfg.guidance_lambda != 1.0 && cfg.condition >= 0 &&
      field.supports_condition()) {
    const Eigen::VectorXd vu = field.eval(te, x);
    const Eigen::VectorXd vc = field.eval_cond(te, x, cfg.condition);
    return guided_velocity(vu, vc, cfg.guidance_lambda);
  }
  if (cfg.condition >= 0 && field.supports_condition()) {
    return field.eval_cond(te, x, cfg.condition);
  }
  return field.eval(te, x);
}

bool dc_enabled(const DcMethod& dc) {
  return dc.steps > 0;
}

}  // namespace

double clamp_eval_time(double t) {
  return std::min(std::max(t, kEvalEps), 1.0 - kEvalEps);
}

double GammaSchedule::at(double sigma_t) const {
  switch (kind) {
    case Kind::sigma_t:
      return sigma_t;
    case Kind::one_minus_sigma_t:
      return 1.0 - sigma_t;
    case Kind::constant:
      return value;
    case Kind::one:
      return 1.0;
  }
  throw UsageError("GammaSchedule: unknown kind");
}

double EtaSchedule::at(double sigma_next) const {
  switch (kind) {
    case Kind::flowdps:
      return 1.0 - sigma_next;
    case Kind::zero:
      return 0.0;
    case Kind::constant:
      return value;
  }
  throw UsageError("EtaSchedule: unknown kind");
}

const Eigen::VectorXd& Trajectory::terminal() const {
  if (states.empty()) {
    throw UsageError("Trajectory::terminal: empty trajectory");
  }
  return states.back();
}

Trajectory sample_flow(const VelocityField& field, const AffineSchedule& sched,
                       const SolverConfig& config, Rng& rng) {
  const TimeGrid grid = make_time_grid(config.nfe, config.shift);
  Trajectory traj;
  traj.times = grid.times;
  traj.states.reserve(grid.times.size());
  traj.records.reserve(static_cast<std::size_t>(config.nfe));

  Eigen::VectorXd x = rng.normal_vector(field.dim());
  traj.states.push_back(x);
  for (int k = 0; k < config.nfe; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double t_next = grid.times[static_cast<std::size_t>(k) + 1];
    const double te = clamp_eval_time(t);

    const Eigen::VectorXd v = step_velocity(field, te, x, config);
    const TweediePair pair = tweedie_split(sched, te, x, v);
    const double eta = config.eta.at(t_next);
    const Eigen::VectorXd x1_tilde = mix_noise(pair.x1_hat, eta, rng);
    const StepCoeffs sc = step_coefficients(sched, te, t_next - te);
    x = sc.C1 * pair.x0_hat + sc.C2 * x1_tilde;

    check_finite(x, "sample_flow", k, t);
    traj.records.push_back({t, pair.x0_hat, pair.x0_hat});
    traj.states.push_back(x);
  }
  return traj;
}

Eigen::MatrixXd sample_flow_terminal_batch(const VelocityField& field,
                                           const AffineSchedule& sched,
                                           const SolverConfig& config, Rng& rng,
                                           int n) {
  if (n < 1) {
    throw UsageError("sample_flow_terminal_batch: n must be >= 1");
  }
  if (config.condition >= 0) {
    throw UsageError(
        "sample_flow_terminal_batch: conditioning is not supported here");
  }
  const TimeGrid grid = make_time_grid(config.nfe, config.shift);
  const int d = field.dim();

  Eigen::MatrixXd X = rng.normal_matrix(d, n);
  for (int k = 0; k < config.nfe; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double t_next = grid.times[static_cast<std::size_t>(k) + 1];
    const double te = clamp_eval_time(t);

    const Eigen::MatrixXd V = field.eval_batch(te, X);

    // Column-wise tweedie split with scalar coefficients shared per step.
    Eigen::MatrixXd X0H, X1H;
    if (sched.kind() == ScheduleKind::linear) {
      X0H = X - te * V;
      X1H = X + (1.0 - te) * V;
    } else {
      const ScheduleCoeffs c = sched.eval(te);
      if (c.a_dot == 0.0 || c.b_dot == 0.0) {
        throw SingularityError(
            "sample_flow_terminal_batch: schedule derivative vanishes");
      }
      const double d0 = c.a - c.a_dot * c.b / c.b_dot;
      const double d1 = c.b - c.b_dot * c.a / c.a_dot;
      if (d0 == 0.0 || d1 == 0.0) {
        throw SingularityError(
            "sample_flow_terminal_batch: split denominator vanishes");
      }
      X0H = (X - (c.b / c.b_dot) * V) / d0;
      X1H = (X - (c.a / c.a_dot) * V) / d1;
    }

    const double eta = config.eta.at(t_next);
    const Eigen::MatrixXd EPS = rng.normal_matrix(d, n);
    const Eigen::MatrixXd X1T =
        std::sqrt(1.0 - eta) * X1H + std::sqrt(eta) * EPS;
    const StepCoeffs sc = step_coefficients(sched, te, t_next - te);
    X = sc.C1 * X0H + sc.C2 * X1T;

    if (!X.allFinite()) {
      throw SolverError(
          "sample_flow_terminal_batch: non-finite state after step " +
          std::to_string(k) + " (t = " + std::to_string(t) + ")");
    }
  }
  return X;
}

FlowDpsStep flowdps_step(const VelocityField& field,
                         const AffineSchedule& sched, const Measurement& meas,
                         const Eigen::VectorXd& x, double t, double t_next,
                         const SolverConfig& config, Rng& rng) {
  const double te = clamp_eval_time(t);
  const Eigen::VectorXd v = step_velocity(field, te, x, config);
  const TweediePair pair = tweedie_split(sched, te, x, v);

  FlowDpsStep out;
  out.x0_hat = pair.x0_hat;
  if (dc_enabled(config.dc)) {
    out.x0_hat_y =
        data_consistency_solve(*meas.op, meas.y, pair.x0_hat, config.dc);
    const double gamma = config.gamma.at(t);
    out.next = gamma * out.x0_hat_y + (1.0 - gamma) * pair.x0_hat;
  } else {
    // Disabled data consistency must reduce exactly to transport, so skip
    // the blend (gamma * c + (1 - gamma) * c need not round back to c).
    out.x0_hat_y = pair.x0_hat;
    out.next = pair.x0_hat;
  }

  // Renoised noise estimate; the draw is unconditional so schedules with
  // and without noise walk the same stream.
  const Eigen::VectorXd eps = rng.normal_vector(x.size());
  Eigen::VectorXd x1_tilde;
  if (config.eta.kind == EtaSchedule::Kind::flowdps) {
    x1_tilde = std::sqrt(t_next) * pair.x1_hat +
               std::sqrt(1.0 - t_next) * eps;
  } else {
    const double eta = config.eta.at(t_next);
    x1_tilde = std::sqrt(1.0 - eta) * pair.x1_hat + std::sqrt(eta) * eps;
  }

  out.next = (1.0 - t_next) * out.next + t_next * x1_tilde;
  return out;
}

Trajectory flowdps_solve(const VelocityField& field,
                         const AffineSchedule& sched, const Measurement& meas,
                         const SolverConfig& config, Rng& rng) {
  const TimeGrid grid = make_time_grid(config.nfe, config.shift);
  Trajectory traj;
  traj.times = grid.times;
  traj.states.reserve(grid.times.size());
  traj.records.reserve(static_cast<std::size_t>(config.nfe));

  Eigen::VectorXd x = rng.normal_vector(field.dim());
  traj.states.push_back(x);
  for (int k = 0; k < config.nfe; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double t_next = grid.times[static_cast<std::size_t>(k) + 1];
    FlowDpsStep step =
        flowdps_step(field, sched, meas, x, t, t_next, config, rng);
    x = std::move(step.next);
    check_finite(x, "flowdps_solve", k, t);
    traj.records.push_back(
        {t, std::move(step.x0_hat), std::move(step.x0_hat_y)});
    traj.states.push_back(x);
  }
  return traj;
}

Trajectory dps_velocity_solve(const VelocityField& field,
                              const AffineSchedule& sched,
                              const Measurement& meas,
                              const SolverConfig& config, Rng& rng) {
  const TimeGrid grid = make_time_grid(config.nfe, config.shift);
  Trajectory traj;
  traj.times = grid.times;
  traj.states.reserve(grid.times.size());
  traj.records.reserve(static_cast<std::size_t>(config.nfe));

  Eigen::VectorXd x = rng.normal_vector(field.dim());
  traj.states.push_back(x);
  for (int k = 0; k < config.nfe; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double t_next = grid.times[static_cast<std::size_t>(k) + 1];
    const double te = clamp_eval_time(t);

    const Eigen::VectorXd v = step_velocity(field, te, x, config);
    const TweediePair pair = tweedie_split(sched, te, x, v);

    // Guidance weight diverges as t -> 1; the first step from the pure
    // noise end carries no usable likelihood information, so skip it there.
    Eigen::VectorXd x0_guided = pair.x0_hat;
    if (t < 1.0) {
      const double beta =
          beta_step(sched, te, t_next, config.zeta_convention);
      const Eigen::VectorXd grad =
          likelihood_grad(*meas.op, meas.y, pair.x0_hat, meas.sigma_n);
      x0_guided = pair.x0_hat - beta * grad;
    }

    const double eta = config.eta.at(t_next);
    const Eigen::VectorXd x1_tilde = mix_noise(pair.x1_hat, eta, rng);
    const StepCoeffs sc = step_coefficients(sched, te, t_next - te);
    x = sc.C1 * x0_guided + sc.C2 * x1_tilde;

    check_finite(x, "dps_velocity_solve", k, t);
    traj.records.push_back({t, pair.x0_hat, x0_guided});
    traj.states.push_back(x);
  }
  return traj;
}

Trajectory flowchef_solve(const VelocityField& field,
                          const AffineSchedule& sched, const Measurement& meas,
                          const SolverConfig& config, Rng& rng) {
  const TimeGrid grid = make_time_grid(config.nfe, config.shift);
  Trajectory traj;
  traj.times = grid.times;
  traj.states.reserve(grid.times.size());
  traj.records.reserve(static_cast<std::size_t>(config.nfe));

  const LinearOperator& op = *meas.op;
  Eigen::VectorXd x = rng.normal_vector(field.dim());
  traj.states.push_back(x);
  for (int k = 0; k < config.nfe; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double t_next = grid.times[static_cast<std::size_t>(k) + 1];
    const double te = clamp_eval_time(t);

    // Velocity at the original state; the measurement gradient is taken at
    // the clean estimate but applied to the state.
    const Eigen::VectorXd v = step_velocity(field, te, x, config);
    const TweediePair pair = tweedie_split(sched, te, x, v);
    const Eigen::VectorXd grad =
        2.0 * op.apply_adjoint(op.apply(pair.x0_hat) - meas.y);

    x = x + (t_next - te) * v - config.chef_step * grad;

    check_finite(x, "flowchef_solve", k, t);
    traj.records.push_back({t, pair.x0_hat, pair.x0_hat});
    traj.states.push_back(x);
  }
  return traj;
}

Trajectory posterior_oracle_solve(const GaussianMixture& prior,
                                  const AffineSchedule& sched,
                                  const Measurement& meas,
                                  const SolverConfig& config, Rng& rng) {
  const GaussianMixture posterior =
      linear_gaussian_posterior(prior, *meas.op, meas.y, meas.sigma_n);
  const GmmVelocityField field(posterior, sched);
  return sample_flow(field, sched, config, rng);
}

}  // namespace flowps
