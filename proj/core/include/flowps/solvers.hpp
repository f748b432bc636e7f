#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowps/forward_ops.hpp"
#include "flowps/gmm.hpp"
#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"
#include "flowps/tweedie.hpp"
#include "flowps/velocity.hpp"

namespace flowps {

// Velocity fields are only evaluated at times in [kEvalEps, 1 - kEvalEps];
// grid endpoints stay exact in the step arithmetic, only the evaluation
// time is clamped away from the schedule singularities.
inline constexpr double kEvalEps = 1e-5;

double clamp_eval_time(double t);

// Blend weight for the data-consistent clean estimate, as a function of the
// current noise level sigma_t (the raw grid time).
struct GammaSchedule {
  enum class Kind { sigma_t, one_minus_sigma_t, constant, one };
  Kind kind = Kind::sigma_t;
  double value = 0.5;  // used by Kind::constant

  double at(double sigma_t) const;
};

// Per-step noise-refresh weight eta, as a function of the next noise level.
// Kind::flowdps requests the literal renoising coefficients
// sqrt(sigma_next) and sqrt(1 - sigma_next) on the noise estimate and the
// fresh draw respectively (equivalent to eta = 1 - sigma_next).
struct EtaSchedule {
  enum class Kind { flowdps, zero, constant };
  Kind kind = Kind::zero;
  double value = 0.0;  // used by Kind::constant

  double at(double sigma_next) const;
};

struct SolverConfig {
  int nfe = 28;
  double shift = 4.0;
  GammaSchedule gamma{};
  EtaSchedule eta{};
  DcMethod dc = DcMethod::gd(3, 15.0);
  double guidance_lambda = 1.0;  // 1 disables classifier-free mixing
  int condition = -1;            // component label; -1 = unconditional
  ZetaConvention zeta_convention = ZetaConvention::paper;
  double chef_step = 1.0;        // projected-gradient step size
};

struct StepRecord {
  double t = 0.0;
  Eigen::VectorXd x0_hat;    // clean estimate from the velocity alone
  Eigen::VectorXd x0_hat_y;  // data-consistent clean estimate (if any)
};

struct Trajectory {
  std::vector<double> times;             // grid times, nfe + 1 entries
  std::vector<Eigen::VectorXd> states;   // states at those times
  std::vector<StepRecord> records;       // one per step

  const Eigen::VectorXd& terminal() const;
};

// Unconditional (or label-guided) transport from N(0, I) at t = 1 down the
// grid to t = 0. Each step: clamp the evaluation time, evaluate the
// velocity, split into the (x0_hat, x1_hat) pair, refresh the noise
// estimate with eta, and re-mix with the step coefficients.
Trajectory sample_flow(const VelocityField& field, const AffineSchedule& sched,
                       const SolverConfig& config, Rng& rng);

// Same transport run on n trajectories at once (columns). Draws are batched
// per step, so individual columns do not reproduce sample_flow streams.
// Guidance is not supported here; config.condition must be -1.
Eigen::MatrixXd sample_flow_terminal_batch(const VelocityField& field,
                                           const AffineSchedule& sched,
                                           const SolverConfig& config, Rng& rng,
                                           int n);

struct FlowDpsStep {
  Eigen::VectorXd next;
  Eigen::VectorXd x0_hat;
  Eigen::VectorXd x0_hat_y;
};

// One posterior-sampling step:
//   1. velocity at the clamped time, split into (x0_hat, x1_hat);
//   2. a few data-consistency iterations starting from x0_hat;
//   3. blend: gamma * x0_hat(y) + (1 - gamma) * x0_hat, gamma at the raw t;
//   4. renoise x1_hat (fresh draw consumed at every step);
//   5. re-mix: (1 - sigma_next) * blended + sigma_next * renoised.
// With data consistency disabled the blend is skipped entirely, so the step
// reduces bit-for-bit to the unconditional transport step.
FlowDpsStep flowdps_step(const VelocityField& field,
                         const AffineSchedule& sched, const Measurement& meas,
                         const Eigen::VectorXd& x, double t, double t_next,
                         const SolverConfig& config, Rng& rng);

Trajectory flowdps_solve(const VelocityField& field,
                         const AffineSchedule& sched, const Measurement& meas,
                         const SolverConfig& config, Rng& rng);

// Guidance applied through the velocity instead of the clean estimate:
//   x_next = C1 * (x0_hat - beta * grad log p(y | x0_hat)) + C2 * x1_tilde
// with beta the step-integrated guidance weight. The likelihood term is
// skipped on steps starting at t >= 1 (the weight diverges there).
Trajectory dps_velocity_solve(const VelocityField& field,
                              const AffineSchedule& sched,
                              const Measurement& meas,
                              const SolverConfig& config, Rng& rng);

// Projected-gradient baseline: Euler transport plus a gradient step of the
// measurement residual taken at the clean estimate but applied to the state:
//   x_next = x + dt * v(t, x) - s * 2 A^T (A x0_hat - y).
Trajectory flowchef_solve(const VelocityField& field,
                          const AffineSchedule& sched, const Measurement& meas,
                          const SolverConfig& config, Rng& rng);

// Exact reference: transport the analytic posterior mixture of the linear
// Gaussian measurement under the prior. Every approximate solver above is
// judged against the terminal law of this one.
Trajectory posterior_oracle_solve(const GaussianMixture& prior,
                                  const AffineSchedule& sched,
                                  const Measurement& meas,
                                  const SolverConfig& config, Rng& rng);

}  // namespace flowps
