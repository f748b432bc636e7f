#include "flowps/schedule.hpp"

#include <cmath>
#include <string>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

void check_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError(std::string(what) + ": t = " + std::to_string(t) +
                      " outside [0, 1]");
}

}  // namespace

AffineSchedule AffineSchedule::linear() {
  AffineSchedule s;
  s.kind_ = ScheduleKind::linear;
  return s;
}

AffineSchedule AffineSchedule::generic(Fn a, Fn b, Fn a_dot, Fn b_dot) {
  AffineSchedule s;
  s.kind_ = ScheduleKind::generic;
  s.a_ = std::move(a);
  s.b_ = std::move(b);
  s.a_dot_ = std::move(a_dot);
  s.b_dot_ = std::move(b_dot);
  return s;
}

ScheduleCoeffs AffineSchedule::eval(double t) const {
  check_unit_interval(t, "eval_schedule");
  if (kind_ == ScheduleKind::linear) return {1.0 - t, t, -1.0, 1.0};
  return {a_(t), b_(t), a_dot_(t), b_dot_(t)};
}

ScheduleCoeffs eval_schedule(const AffineSchedule& sched, double t) {
  return sched.eval(t);
}

StepCoeffs step_coefficients(const AffineSchedule& sched, double t, double dt) {
  if (!(t > 0.0 && t <= 1.0))
    throw DomainError("step_coefficients: t outside (0, 1]");
  const double t_next = t + dt;
  if (t_next < 0.0)
    throw DomainError("step_coefficients: t + dt < 0");
  if (t_next > 1.0)
    throw DomainError("step_coefficients: t + dt > 1");
  if (sched.kind() == ScheduleKind::linear) {
    // Exact for an affine-in-t schedule, and bit-identical to the
    // coefficients (1 - sigma_next, sigma_next) used by the samplers.
    return {1.0 - t_next, t_next};
  }
  const ScheduleCoeffs c = sched.eval(t);
  return {c.a + c.a_dot * dt, c.b + c.b_dot * dt};
}

double zeta(const AffineSchedule& sched, double t, ZetaConvention convention) {
  check_unit_interval(t, "zeta");
  const ScheduleCoeffs c = sched.eval(t);
  if (c.a == 0.0)
    throw SingularityError("zeta: a_t = 0 (t = 1)");
  const double first =
      (convention == ZetaConvention::paper) ? c.a_dot * c.b : c.b_dot * c.b;
  return first - c.b * c.b * (c.a_dot / c.a);
}

TimeGrid make_time_grid(int nfe, double shift) {
  if (nfe < 1) throw DomainError("make_time_grid: nfe must be >= 1");
  if (!(shift > 0.0)) throw DomainError("make_time_grid: shift must be > 0");
  TimeGrid grid;
  grid.nfe = nfe;
  grid.shift = shift;
  grid.times.resize(static_cast<std::size_t>(nfe) + 1);
  for (int k = 0; k <= nfe; ++k) {
    const double u = static_cast<double>(nfe - k) / static_cast<double>(nfe);
    grid.times[static_cast<std::size_t>(k)] =
        shift * u / (1.0 + (shift - 1.0) * u);
  }
  grid.times.front() = 1.0;
  grid.times.back() = 0.0;
  return grid;
}

double beta_t(const TimeGrid& grid, int step_index) {
  if (step_index < 0 || step_index >= grid.nfe)
    throw DomainError("beta_t: step index out of range");
  const double sigma = grid.sigma(step_index);
  const double sigma_next = grid.sigma(step_index + 1);
  if (sigma >= 1.0 || sigma_next >= 1.0)
    throw SingularityError("beta_t: sigma = 1 at the requested step");
  const double dt = sigma_next - sigma;
  const double om = 1.0 - sigma;
  return dt * sigma * (2.0 * sigma - 1.0) / (om * om * (1.0 - sigma_next));
}

double beta_step(const AffineSchedule& sched, double t, double t_next,
                 ZetaConvention convention) {
  const ScheduleCoeffs c = sched.eval(t);
  if (c.a == 0.0) throw SingularityError("beta_step: a_t = 0 (t = 1)");
  const double dt = t_next - t;
  const StepCoeffs sc = step_coefficients(sched, t, dt);
  if (sc.C1 == 0.0) throw SingularityError("beta_step: C1 = 0");
  return (zeta(sched, t, convention) / c.a) * (dt / sc.C1);
}

}  // namespace flowps
