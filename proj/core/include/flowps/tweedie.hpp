#pragma once

#include <Eigen/Dense>

#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"

namespace flowps {

// The two posterior-mean estimates recoverable from one velocity evaluation:
// x0_hat estimates the clean sample, x1_hat the noise sample, and the state
// is always their exact re-mixture: x = a_t * x0_hat + b_t * x1_hat.
struct TweediePair {
  Eigen::VectorXd x0_hat;
  Eigen::VectorXd x1_hat;
  double t = 0.0;
};

// Invert (state, velocity) -> (x0_hat, x1_hat) at interior times t in (0,1).
// For the linear schedule this is x - t*v and x + (1-t)*v; generically the
// denominators a - a_dot*b/b_dot and b - b_dot*a/a_dot must be nonzero.
TweediePair tweedie_split(const AffineSchedule& sched, double t,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& v);

// Plain explicit Euler update x + v*dt (dt may be negative; t+dt must stay
// in [0,1]).
Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                           double t, double dt);

// Re-mixture update: C1*x0_hat + C2*x1_hat with (C1, C2) the schedule
// coefficients of the step. For affine schedules this reproduces Euler
// exactly when the pair came from tweedie_split at the same (t, x, v).
Eigen::VectorXd decomposed_step(const AffineSchedule& sched,
                                const TweediePair& pair, double dt);

// Stochastic noise refresh: sqrt(1-eta)*x1_hat + sqrt(eta)*eps with
// eps ~ N(0, I). Draws from rng unconditionally (also at eta = 0) so that
// toggling eta does not shift the downstream random stream.
Eigen::VectorXd mix_noise(const Eigen::VectorXd& x1_hat, double eta, Rng& rng);

// One DDIM-style stochastic transport step:
//   x_next = C1*x0_hat + sqrt(C2^2 - k^2)*x1_hat + k*eps,  k = C2*sqrt(eta),
// which preserves the per-step marginal variance contributed by the noise
// channel for every eta in [0,1].
Eigen::VectorXd ddim_step(const AffineSchedule& sched, const TweediePair& pair,
                          double dt, double eta, const Eigen::VectorXd& eps);

}  // namespace flowps
