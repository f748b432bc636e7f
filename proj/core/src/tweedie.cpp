#include "flowps/tweedie.hpp"

#include <cmath>
#include <string>

#include "flowps/errors.hpp"

namespace flowps {

TweediePair tweedie_split(const AffineSchedule& sched, double t,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
  if (!(t > 0.0 && t < 1.0)) {
    throw DomainError("tweedie_split: t must lie in (0,1), got " +
                      std::to_string(t));
  }
  if (x.size() != v.size()) {
    throw UsageError("tweedie_split: state/velocity dimension mismatch");
  }
  TweediePair pair;
  pair.t = t;
  if (sched.kind() == ScheduleKind::linear) {
    // a=1-t, b=t, a_dot=-1, b_dot=1: the denominators collapse to 1.
    pair.x0_hat = x - t * v;
    pair.x1_hat = x + (1.0 - t) * v;
    return pair;
  }
  const ScheduleCoeffs c = sched.eval(t);
  if (c.b_dot == 0.0) {
    throw SingularityError("tweedie_split: b_dot vanishes at t = " +
                           std::to_string(t));
  }
  if (c.a_dot == 0.0) {
    throw SingularityError("tweedie_split: a_dot vanishes at t = " +
                           std::to_string(t));
  }
  const double d0 = c.a - c.a_dot * c.b / c.b_dot;
  const double d1 = c.b - c.b_dot * c.a / c.a_dot;
  if (d0 == 0.0) {
    throw SingularityError(
        "tweedie_split: clean-estimate denominator a - a_dot*b/b_dot "
        "vanishes at t = " +
        std::to_string(t));
  }
  if (d1 == 0.0) {
    throw SingularityError(
        "tweedie_split: noise-estimate denominator b - b_dot*a/a_dot "
        "vanishes at t = " +
        std::to_string(t));
  }
  pair.x0_hat = (x - (c.b / c.b_dot) * v) / d0;
  pair.x1_hat = (x - (c.a / c.a_dot) * v) / d1;
  return pair;
}

Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                           double t, double dt) {
  if (x.size() != v.size()) {
    throw UsageError("euler_step: state/velocity dimension mismatch");
  }
  const double t_next = t + dt;
  if (t_next < 0.0 || t_next > 1.0) {
    throw DomainError("euler_step: t + dt = " + std::to_string(t_next) +
                      " leaves [0,1]");
  }
  return x + dt * v;
}

Eigen::VectorXd decomposed_step(const AffineSchedule& sched,
                                const TweediePair& pair, double dt) {
  const StepCoeffs sc = step_coefficients(sched, pair.t, dt);
  return sc.C1 * pair.x0_hat + sc.C2 * pair.x1_hat;
}

Eigen::VectorXd mix_noise(const Eigen::VectorXd& x1_hat, double eta,
                          Rng& rng) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw DomainError("mix_noise: eta must lie in [0,1], got " +
                      std::to_string(eta));
  }
  // Draw unconditionally: eta = 0 must consume the same stream as eta > 0.
  const Eigen::VectorXd eps = rng.normal_vector(x1_hat.size());
  return std::sqrt(1.0 - eta) * x1_hat + std::sqrt(eta) * eps;
}

Eigen::VectorXd ddim_step(const AffineSchedule& sched, const TweediePair& pair,
                          double dt, double eta, const Eigen::VectorXd& eps) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw DomainError("ddim_step: eta must lie in [0,1], got " +
                      std::to_string(eta));
  }
  if (eps.size() != pair.x1_hat.size()) {
    throw UsageError("ddim_step: noise dimension mismatch");
  }
  const StepCoeffs sc = step_coefficients(sched, pair.t, dt);
  const double k = sc.C2 * std::sqrt(eta);
  const double rem = sc.C2 * sc.C2 - k * k;
  // rem = C2^2 (1 - eta) >= 0 up to rounding; clamp the rounding.
  const double coef1 = std::sqrt(rem > 0.0 ? rem : 0.0);
  return sc.C1 * pair.x0_hat + coef1 * pair.x1_hat + k * eps;
}

}  // namespace flowps
