#pragma once

#include <functional>
#include <vector>

namespace flowps {

enum class ScheduleKind { linear, generic };

// The four coefficients (a_t, b_t, da/dt, db/dt) of an affine path
// x_t = a_t * x0 + b_t * x1 at a fixed time t.
struct ScheduleCoeffs {
  double a;
  double b;
  double a_dot;
  double b_dot;
};

// An affine interpolation schedule on t in [0, 1] with boundary values
// a(0)=1, b(0)=0, a(1)=0, b(1)=1. The linear kind is a=1-t, b=t; the generic
// kind is defined by four user-supplied scalar functions.
class AffineSchedule {
 public:
  using Fn = std::function<double(double)>;

  static AffineSchedule linear();
  static AffineSchedule generic(Fn a, Fn b, Fn a_dot, Fn b_dot);

  ScheduleKind kind() const { return kind_; }

  // Coefficients at t; throws DomainError outside [0, 1].
  ScheduleCoeffs eval(double t) const;

 private:
  AffineSchedule() = default;
  ScheduleKind kind_ = ScheduleKind::linear;
  Fn a_, b_, a_dot_, b_dot_;
};

ScheduleCoeffs eval_schedule(const AffineSchedule& sched, double t);

struct StepCoeffs {
  double C1;
  double C2;
};

// Coefficients of the decomposed Euler update x_next = C1*x0_hat + C2*x1_hat:
// C1 = a + a_dot*dt, C2 = b + b_dot*dt. For the linear schedule these are
// computed directly as (1-(t+dt), t+dt), which is algebraically identical and
// bit-identical to evaluating the schedule at t+dt.
StepCoeffs step_coefficients(const AffineSchedule& sched, double t, double dt);

// Two published forms of the likelihood-weight coefficient zeta_t disagree in
// their first term; both are implemented and selectable.
enum class ZetaConvention { paper, derivation };

// zeta_t = a_dot*b - b^2*(a_dot/a)   (paper)
//        = b_dot*b - b^2*(a_dot/a)   (derivation)
// Requires t < 1 (a_t != 0).
double zeta(const AffineSchedule& sched, double t, ZetaConvention convention);

// Strictly decreasing times t_1 = 1 > ... > t_{N+1} = 0. Entry k is
// s*u/(1+(s-1)*u) for u on a uniform grid; shift=1 is the uniform grid.
// For the linear schedule the grid entries are the sigma values directly.
struct TimeGrid {
  std::vector<double> times;
  double shift = 1.0;
  int nfe = 0;

  double sigma(int k) const { return times[static_cast<std::size_t>(k)]; }
};

TimeGrid make_time_grid(int nfe, double shift);

// Closed-form likelihood step weight for the linear schedule at grid step k:
//   beta = dt * sigma*(2*sigma-1) / ((1-sigma)^2 * (1-sigma_next)),
// with dt = sigma_next - sigma < 0. Zero exactly at sigma = 0.5; requires
// sigma < 1 and sigma_next < 1.
double beta_t(const TimeGrid& grid, int step_index);

// Generic-route beta for one step [t, t_next]: (zeta/a) * dt / C1 under the
// chosen convention. Equals beta_t for the linear schedule under the paper
// convention.
double beta_step(const AffineSchedule& sched, double t, double t_next,
                 ZetaConvention convention);

}  // namespace flowps
