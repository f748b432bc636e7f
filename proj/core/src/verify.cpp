#include "flowps/verify.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "flowps/builtins.hpp"
#include "flowps/config.hpp"
#include "flowps/errors.hpp"
#include "flowps/forward_ops.hpp"
#include "flowps/gmm.hpp"
#include "flowps/io.hpp"
#include "flowps/metrics.hpp"
#include "flowps/mlp.hpp"
#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"
#include "flowps/solvers.hpp"
#include "flowps/tweedie.hpp"
#include "flowps/velocity.hpp"

namespace flowps {

namespace {

class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && pass) {
      pass = false;
      note = what;
    }
  }

  void near(double got, double want, double tol, const std::string& what) {
    const double err = std::abs(got - want);
    max_err = std::max(max_err, err);
    expect(err <= tol, what + " (got " + std::to_string(got) + ", want " +
                           std::to_string(want) + ")");
  }

  void small(double err, double tol, const std::string& what) {
    max_err = std::max(max_err, err);
    expect(err <= tol, what + " (err " + std::to_string(err) + ")");
  }

  template <typename Fn>
  void throws(Fn&& fn, const std::string& what) {
    bool thrown = false;
    try {
      fn();
    } catch (const Error&) {
      thrown = true;
    }
    expect(thrown, what + ": expected an error");
  }

  bool pass = true;
  double max_err = 0.0;
  std::string note;
};

SuiteResult run_suite(const std::string& name,
                      const std::function<void(Checker&)>& body) {
  SuiteResult r;
  r.name = name;
  Checker c;
  try {
    body(c);
    r.pass = c.pass;
    r.max_err = c.max_err;
    r.note = c.note;
  } catch (const std::exception& e) {
    r.pass = false;
    r.max_err = c.max_err;
    r.note = std::string("exception: ") + e.what();
  }
  return r;
}

GaussianMixture random_gmm(Rng& rng, int d, int k) {
  GaussianMixture g;
  g.weights.resize(k);
  for (int i = 0; i < k; ++i) {
    g.weights(i) = 0.2 + rng.uniform();
  }
  g.weights /= g.weights.sum();
  for (int i = 0; i < k; ++i) {
    g.means.push_back(2.0 * rng.normal_vector(d));
    const Eigen::MatrixXd m = rng.normal_matrix(d, d);
    g.covs.push_back(m * m.transpose() / d +
                     0.3 * Eigen::MatrixXd::Identity(d, d));
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------- schedules

void suite_schedule_boundary(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  const ScheduleCoeffs c0 = lin.eval(0.0);
  c.near(c0.a, 1.0, 0.0, "a(0)");
  c.near(c0.b, 0.0, 0.0, "b(0)");
  const ScheduleCoeffs c1 = lin.eval(1.0);
  c.near(c1.a, 0.0, 0.0, "a(1)");
  c.near(c1.b, 1.0, 0.0, "b(1)");
  const ScheduleCoeffs cq = lin.eval(0.25);
  c.near(cq.a, 0.75, 0.0, "a(0.25)");
  c.near(cq.b, 0.25, 0.0, "b(0.25)");
  c.near(cq.a_dot, -1.0, 0.0, "a_dot");
  c.near(cq.b_dot, 1.0, 0.0, "b_dot");
  c.throws([&] { lin.eval(-0.1); }, "eval(-0.1)");
  c.throws([&] { lin.eval(1.1); }, "eval(1.1)");

  const AffineSchedule cose = AffineSchedule::generic(
      [](double t) { return std::cos(0.5 * M_PI * t); },
      [](double t) { return std::sin(0.5 * M_PI * t); },
      [](double t) { return -0.5 * M_PI * std::sin(0.5 * M_PI * t); },
      [](double t) { return 0.5 * M_PI * std::cos(0.5 * M_PI * t); });
  c.near(cose.eval(0.0).a, 1.0, 1e-15, "generic a(0)");
  c.near(cose.eval(1.0).b, 1.0, 1e-15, "generic b(1)");
}

void suite_step_coefficients(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  const StepCoeffs id = step_coefficients(lin, 0.5, 0.0);
  c.near(id.C1, 0.5, 0.0, "dt=0 C1");
  c.near(id.C2, 0.5, 0.0, "dt=0 C2");
  const StepCoeffs full = step_coefficients(lin, 1.0, -1.0);
  c.near(full.C1, 1.0, 0.0, "full step C1");
  c.near(full.C2, 0.0, 0.0, "full step C2");
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const double t = 0.05 + 0.9 * rng.uniform();
    const double tn = t * rng.uniform();
    const StepCoeffs sc = step_coefficients(lin, t, tn - t);
    c.small(std::abs(sc.C1 - (1.0 - tn)), 1e-15, "C1 = 1 - t_next");
    c.small(std::abs(sc.C2 - tn), 1e-15, "C2 = t_next");
  }
  c.throws([&] { step_coefficients(lin, 0.0, 0.5); }, "t=0 rejected");
  c.throws([&] { step_coefficients(lin, 0.5, 0.6); }, "t+dt>1 rejected");
}

void suite_grid_beta(Checker& c) {
  const TimeGrid g = make_time_grid(2, 4.0);
  c.expect(g.times.size() == 3, "grid has nfe+1 entries");
  c.near(g.times[0], 1.0, 0.0, "grid starts at exactly 1");
  c.near(g.times[2], 0.0, 0.0, "grid ends at exactly 0");
  c.near(g.times[1], 0.8, 1e-15, "shift-4 midpoint");

  // Closed-form values.
  TimeGrid manual;
  manual.nfe = 2;
  manual.shift = 1.0;
  manual.times = {0.8, 0.7, 0.6};
  c.near(beta_t(manual, 0), -4.0, 1e-12, "beta(0.8, 0.7)");
  manual.times = {0.9, 0.8, 0.7};
  c.near(beta_t(manual, 0), -36.0, 1e-12, "beta(0.9, 0.8)");
  manual.times = {0.5, 0.4, 0.3};
  c.near(beta_t(manual, 0), 0.0, 0.0, "beta vanishes at sigma = 0.5");

  // Monotone -beta over the shift-4 NFE-28 grid for sigma_t > 0.5.
  const TimeGrid g28 = make_time_grid(28, 4.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k + 1 < static_cast<int>(g28.times.size()); ++k) {
    const double sig = g28.times[static_cast<std::size_t>(k)];
    if (sig >= 1.0) {
      continue;  // beta is singular exactly at sigma = 1
    }
    if (sig <= 0.5) {
      break;
    }
    const double nb = -beta_t(g28, k);
    c.expect(nb > 0.0, "-beta positive at step " + std::to_string(k));
    c.expect(nb < prev, "-beta decreasing at step " + std::to_string(k));
    prev = nb;
  }

  // Generic-route agreement with the closed form.
  const AffineSchedule lin = AffineSchedule::linear();
  c.near(beta_step(lin, 0.8, 0.7, ZetaConvention::paper), -4.0, 1e-12,
         "beta_step matches closed form");
}

void suite_zeta(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  c.near(zeta(lin, 0.5, ZetaConvention::paper), 0.0, 0.0, "zeta paper(0.5)");
  c.near(zeta(lin, 0.5, ZetaConvention::derivation), 1.0, 1e-15,
         "zeta derivation(0.5)");
  c.throws([&] { zeta(lin, 1.0, ZetaConvention::paper); },
           "zeta singular at t=1");
}

// ---------------------------------------------------------------------- rng

void suite_rng(Checker& c) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 200; ++i) {
    c.expect(a.normal() == b.normal(), "same seed, same stream");
  }
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    c.expect(x >= 0.0 && x < 1.0, "uniform in [0,1)");
    const double y = u.uniform_pos();
    c.expect(y > 0.0 && y <= 1.0, "uniform_pos in (0,1]");
  }
  Rng n(3);
  const int count = 20000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < count; ++i) {
    const double x = n.normal();
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / count;
  const double var = s2 / count - mean * mean;
  c.small(std::abs(mean), 0.05, "normal sample mean");
  c.small(std::abs(var - 1.0), 0.05, "normal sample variance");
  Rng parent(9);
  Rng sub = parent.substream(0);
  c.expect(sub.seed() != parent.seed(), "substream reseeds");
}

// ---------------------------------------------------------------------- gmm

void suite_denoiser_oracle(Checker& c, int cases) {
  const AffineSchedule lin = AffineSchedule::linear();
  Rng rng(101);
  for (int i = 0; i < cases; ++i) {
    const int d = 1 + static_cast<int>(rng.uniform() * 3.0);
    const int k = 1 + static_cast<int>(rng.uniform() * 3.0);
    const GaussianMixture g = random_gmm(rng, d, k);
    const double t = 0.05 + 0.9 * rng.uniform();
    const Eigen::VectorXd x = 2.0 * rng.normal_vector(d);

    // Velocity route -> clean estimate must equal the direct denoiser.
    const Eigen::VectorXd v = marginal_velocity(g, lin, t, x);
    const TweediePair pair = tweedie_split(lin, t, x, v);
    const Eigen::VectorXd direct = denoiser_mean(g, lin, t, x);
    const double rel =
        (pair.x0_hat - direct).norm() / std::max(1.0, direct.norm());
    c.small(rel, 1e-9, "velocity-route denoiser");

    // Recomposition: a*x0 + b*x1 = x.
    const ScheduleCoeffs sc = lin.eval(t);
    const double recomp =
        (sc.a * pair.x0_hat + sc.b * pair.x1_hat - x).norm();
    c.small(recomp, 1e-12 * std::max(1.0, x.norm()), "recomposition");
  }
}

void suite_score_relation(Checker& c, int cases) {
  const AffineSchedule lin = AffineSchedule::linear();
  Rng rng(202);
  for (int i = 0; i < cases; ++i) {
    const int d = 1 + static_cast<int>(rng.uniform() * 3.0);
    const int k = 1 + static_cast<int>(rng.uniform() * 2.0);
    const GaussianMixture g = random_gmm(rng, d, k);
    const double t = 0.05 + 0.9 * rng.uniform();
    const Eigen::VectorXd x = 2.0 * rng.normal_vector(d);
    const Eigen::VectorXd sc = score(g, lin, t, x);
    const Eigen::VectorXd v = marginal_velocity(g, lin, t, x);
    const TweediePair pair = tweedie_split(lin, t, x, v);
    // grad log p_t + (1/b) E[x1 | x_t] = 0.
    const double rel = (sc + pair.x1_hat / t).norm() /
                       std::max(1.0, sc.norm());
    c.small(rel, 1e-9, "score relation");
  }
  // Finite-difference score at a few points.
  Rng rng2(203);
  for (int i = 0; i < 5; ++i) {
    const GaussianMixture g = random_gmm(rng2, 2, 2);
    const double t = 0.3 + 0.4 * rng2.uniform();
    const Eigen::VectorXd x = rng2.normal_vector(2);
    const GaussianMixture marg = marginal_at(g, AffineSchedule::linear(), t);
    const double h = 1e-6;
    Eigen::VectorXd fd(2);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd xp = x;
      Eigen::VectorXd xm = x;
      xp(j) += h;
      xm(j) -= h;
      fd(j) = (marg.log_density(xp) - marg.log_density(xm)) / (2.0 * h);
    }
    const Eigen::VectorXd an = score(g, AffineSchedule::linear(), t, x);
    c.small((fd - an).norm() / std::max(1.0, an.norm()), 1e-5, "fd score");
  }
}

void suite_posterior(Checker& c) {
  // 1D: N(0,1), A = 1, sigma_n = 1, y = 2 -> N(1, 0.5).
  const GaussianMixture g1 =
      single_gaussian(Eigen::VectorXd::Zero(1),
                      Eigen::MatrixXd::Identity(1, 1));
  const LinearOperator a1 =
      LinearOperator::dense(Eigen::MatrixXd::Identity(1, 1));
  Eigen::VectorXd y1(1);
  y1 << 2.0;
  const GaussianMixture p1 = linear_gaussian_posterior(g1, a1, y1, 1.0);
  c.near(p1.means[0](0), 1.0, 1e-12, "1d posterior mean");
  c.near(p1.covs[0](0, 0), 0.5, 1e-12, "1d posterior var");

  // 2D mask keeping coordinate 0: N(0, I), y = 2, sigma = 1.
  const GaussianMixture g2 =
      single_gaussian(Eigen::VectorXd::Zero(2),
                      Eigen::MatrixXd::Identity(2, 2));
  const LinearOperator a2 = LinearOperator::mask({0}, 2);
  Eigen::VectorXd y2(1);
  y2 << 2.0;
  const GaussianMixture p2 = linear_gaussian_posterior(g2, a2, y2, 1.0);
  c.near(p2.means[0](0), 1.0, 1e-12, "masked coordinate mean");
  c.near(p2.means[0](1), 0.0, 1e-12, "hidden coordinate mean");
  c.near(p2.covs[0](0, 0), 0.5, 1e-12, "masked coordinate var");
  c.near(p2.covs[0](1, 1), 1.0, 1e-12, "hidden coordinate var");

  // Random case against the information-form solution.
  Rng rng(404);
  const int d = 3;
  const GaussianMixture g = random_gmm(rng, d, 1);
  const Eigen::MatrixXd amat = rng.normal_matrix(2, d);
  const LinearOperator a = LinearOperator::dense(amat);
  const Eigen::VectorXd y = rng.normal_vector(2);
  const double sn = 0.5;
  const GaussianMixture post = linear_gaussian_posterior(g, a, y, sn);
  const Eigen::MatrixXd prec = g.covs[0].inverse() +
                               amat.transpose() * amat / (sn * sn);
  const Eigen::MatrixXd cov_ref = prec.inverse();
  const Eigen::VectorXd mean_ref =
      cov_ref * (g.covs[0].inverse() * g.means[0] +
                 amat.transpose() * y / (sn * sn));
  c.small((post.means[0] - mean_ref).norm(), 1e-9, "information-form mean");
  c.small((post.covs[0] - cov_ref).norm(), 1e-9, "information-form cov");
  c.near(post.weights.sum(), 1.0, 1e-12, "posterior weights normalized");
}

void suite_prop2_jacobian(Checker& c) {
  // Rank-2 subspace in R^4: FD Jacobian of the denoiser approaches
  // (1/a_t) * projector as the spread grows.
  Rng rng(505);
  Eigen::MatrixXd basis(4, 2);
  basis.setZero();
  basis(0, 0) = 1.0;
  basis(2, 1) = 1.0;
  SubspacePrior sub;
  sub.basis = basis;
  sub.offset = rng.normal_vector(4);
  const AffineSchedule lin = AffineSchedule::linear();
  const Eigen::MatrixXd proj = sub.projector();
  const Eigen::VectorXd x = rng.normal_vector(4);

  double prev_err = std::numeric_limits<double>::infinity();
  for (double spread : {1e2, 1e4}) {
    sub.spread = spread;
    const GaussianMixture g = sub.to_mixture();
    double worst = 0.0;
    for (double t : {0.3, 0.5, 0.7}) {
      const Eigen::MatrixXd jac = denoiser_jacobian_fd(g, lin, t, x, 1e-5);
      const Eigen::MatrixXd want = proj / lin.eval(t).a;
      const double err = (jac - want).norm();
      worst = std::max(worst, err);
    }
    if (spread == 1e4) {
      c.small(worst, 1e-2, "jacobian vs projector at spread 1e4");
    }
    c.expect(worst < prev_err, "jacobian error decreases with spread");
    prev_err = worst;
  }
}

// ------------------------------------------------------------------ tweedie

void suite_tweedie(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();

  // Worked 1D example: t=0.4, x=2.0, v=0.5.
  Eigen::VectorXd x(1), v(1);
  x << 2.0;
  v << 0.5;
  const TweediePair p = tweedie_split(lin, 0.4, x, v);
  c.near(p.x0_hat(0), 1.8, 1e-15, "x0_hat example");
  c.near(p.x1_hat(0), 2.3, 1e-15, "x1_hat example");
  const Eigen::VectorXd dec = decomposed_step(lin, p, -0.2);
  c.near(dec(0), 1.9, 1e-15, "decomposed example");
  c.near(euler_step(x, v, 0.4, -0.2)(0), 1.9, 1e-15, "euler route example");

  // DDIM worked example: t=0.5, dt=-0.25, eta=0.36, x0=1, x1=2, eps=0.5.
  TweediePair q;
  q.t = 0.5;
  q.x0_hat = Eigen::VectorXd::Constant(1, 1.0);
  q.x1_hat = Eigen::VectorXd::Constant(1, 2.0);
  const Eigen::VectorXd eps = Eigen::VectorXd::Constant(1, 0.5);
  const Eigen::VectorXd dd = ddim_step(lin, q, -0.25, 0.36, eps);
  c.near(dd(0), 1.225, 1e-12, "ddim example");

  Rng rng(606);
  for (int i = 0; i < 1000; ++i) {
    const int d = 1 + static_cast<int>(rng.uniform() * 4.0);
    const double t = 0.05 + 0.9 * rng.uniform();
    const double tn = t * rng.uniform();
    const Eigen::VectorXd xx = 2.0 * rng.normal_vector(d);
    const Eigen::VectorXd vv = rng.normal_vector(d);
    const TweediePair pp = tweedie_split(lin, t, xx, vv);
    const Eigen::VectorXd eul = euler_step(xx, vv, t, tn - t);
    const Eigen::VectorXd de = decomposed_step(lin, pp, tn - t);
    c.small((eul - de).cwiseAbs().maxCoeff(), 1e-12, "euler == decomposed");
  }

  // ddim vs decomposed-with-shared-noise.
  Rng rng2(607);
  for (int i = 0; i < 100; ++i) {
    const int d = 1 + static_cast<int>(rng2.uniform() * 3.0);
    const double t = 0.05 + 0.9 * rng2.uniform();
    const double tn = t * rng2.uniform();
    const double eta = rng2.uniform();
    const Eigen::VectorXd xx = rng2.normal_vector(d);
    const Eigen::VectorXd vv = rng2.normal_vector(d);
    const Eigen::VectorXd ee = rng2.normal_vector(d);
    const TweediePair pp = tweedie_split(lin, t, xx, vv);
    const Eigen::VectorXd via_ddim = ddim_step(lin, pp, tn - t, eta, ee);
    const StepCoeffs sc = step_coefficients(lin, t, tn - t);
    const Eigen::VectorXd mixed =
        std::sqrt(1.0 - eta) * pp.x1_hat + std::sqrt(eta) * ee;
    const Eigen::VectorXd via_mix = sc.C1 * pp.x0_hat + sc.C2 * mixed;
    c.small((via_ddim - via_mix).cwiseAbs().maxCoeff(), 1e-12,
            "ddim == decomposed + mixed noise");
  }

  // mix_noise consumes the stream even at eta = 0 and returns x1 exactly.
  Rng ra(77);
  Rng rb(77);
  Eigen::VectorXd x1h = Eigen::VectorXd::Constant(3, 1.5);
  const Eigen::VectorXd m0 = mix_noise(x1h, 0.0, ra);
  c.small((m0 - x1h).norm(), 0.0, "mix_noise eta=0 exact");
  (void)mix_noise(x1h, 0.7, rb);
  c.expect(ra.normal() == rb.normal(), "mix_noise stream use independent of eta");
}

// -------------------------------------------------------------- forward ops

void suite_forward_ops(Checker& c) {
  Rng rng(808);

  auto adjoint_test = [&](const LinearOperator& op, const std::string& what) {
    const Eigen::VectorXd xx = rng.normal_vector(op.input_dim());
    const Eigen::VectorXd yy = rng.normal_vector(op.output_dim());
    const double lhs = op.apply(xx).dot(yy);
    const double rhs = xx.dot(op.apply_adjoint(yy));
    c.small(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-10,
            what + " adjoint identity");
  };

  adjoint_test(LinearOperator::avgpool(4, 4, 2), "avgpool");
  adjoint_test(LinearOperator::blur(5, 5, gaussian_blur_kernel(3, 0.8)),
               "blur");
  adjoint_test(LinearOperator::mask({0, 3, 7}, 9), "mask");
  adjoint_test(LinearOperator::dense(rng.normal_matrix(3, 6)), "dense");

  // Avgpool worked example: [[1,3],[5,7]] pooled 2x2 -> 4.
  Eigen::VectorXd img(4);
  img << 1.0, 3.0, 5.0, 7.0;
  const LinearOperator pool = LinearOperator::avgpool(2, 2, 2);
  c.near(pool.apply(img)(0), 4.0, 1e-15, "avgpool example");

  // Gaussian kernel values, size 3, std 0.5.
  const Eigen::MatrixXd ker = gaussian_blur_kernel(3, 0.5);
  c.near(ker(1, 1), 0.6193, 1e-4, "kernel center");
  c.near(ker(0, 1), 0.0838, 1e-4, "kernel edge");
  c.near(ker(0, 0), 0.0113, 1e-4, "kernel corner");
  c.near(ker.sum(), 1.0, 1e-10, "kernel normalized");

  // likelihood_grad 1D example: A=2, x=1, y=1, sigma=1 -> -2.
  const LinearOperator a2 =
      LinearOperator::dense(Eigen::MatrixXd::Constant(1, 1, 2.0));
  Eigen::VectorXd one(1);
  one << 1.0;
  c.near(likelihood_grad(a2, one, one, 1.0)(0), -2.0, 1e-15,
         "likelihood gradient example");
}

void suite_data_consistency(Checker& c) {
  Rng rng(909);

  // Identity system: CG converges in one step.
  const LinearOperator id =
      LinearOperator::dense(Eigen::MatrixXd::Identity(3, 3));
  const Eigen::VectorXd y = rng.normal_vector(3);
  const Eigen::VectorXd x_cg = data_consistency_solve(
      id, y, Eigen::VectorXd::Zero(3), DcMethod::cg(1));
  c.small((x_cg - y).norm(), 1e-12, "cg identity one step");

  // Overdetermined 3x2: CG(2) matches the normal equations.
  const Eigen::MatrixXd amat = rng.normal_matrix(3, 2);
  const Eigen::VectorXd yy = rng.normal_vector(3);
  const LinearOperator a = LinearOperator::dense(amat);
  const Eigen::VectorXd sol = data_consistency_solve(
      a, yy, Eigen::VectorXd::Zero(2), DcMethod::cg(2));
  const Eigen::VectorXd ne =
      (amat.transpose() * amat).ldlt().solve(amat.transpose() * yy);
  c.small((sol - ne).norm(), 1e-8, "cg matches normal equations");

  // GD reduces the residual monotonically on a scaled-identity system.
  const LinearOperator half =
      LinearOperator::dense(0.5 * Eigen::MatrixXd::Identity(2, 2));
  const Eigen::VectorXd y2 = rng.normal_vector(2);
  Eigen::VectorXd xk = Eigen::VectorXd::Zero(2);
  double prev = (half.apply(xk) - y2).norm();
  for (int i = 0; i < 3; ++i) {
    xk = data_consistency_solve(half, y2, xk, DcMethod::gd(1, 1.0));
    const double res = (half.apply(xk) - y2).norm();
    c.expect(res < prev, "gd residual decreases");
    prev = res;
  }

  // Disabled returns the input unchanged.
  const Eigen::VectorXd x0 = rng.normal_vector(2);
  const Eigen::VectorXd same =
      data_consistency_solve(half, y2, x0, DcMethod::disabled());
  c.small((same - x0).norm(), 0.0, "disabled is identity");
}

// ------------------------------------------------------------------ solvers

void suite_solver_reductions(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  const GaussianMixture prior = two_moons_gmm();
  const GmmVelocityField field(prior, lin);

  SolverConfig transport;
  transport.nfe = 16;
  transport.shift = 2.0;
  transport.eta.kind = EtaSchedule::Kind::zero;

  // flowchef with step 0 equals unconditional transport.
  auto opn = std::make_shared<LinearOperator>(
      LinearOperator::dense(Eigen::MatrixXd::Identity(2, 2)));
  Measurement meas;
  meas.op = opn;
  meas.y = Eigen::VectorXd::Zero(2);
  meas.sigma_n = 0.1;

  SolverConfig chef = transport;
  chef.chef_step = 0.0;
  Rng r1(33);
  Rng r2(33);
  const Trajectory tr_a = sample_flow(field, lin, transport, r1);
  const Trajectory tr_b = flowchef_solve(field, lin, meas, chef, r2);
  c.small((tr_a.terminal() - tr_b.terminal()).norm(), 1e-9,
          "flowchef step 0 reduces to transport");

  // flowdps with data consistency disabled and literal renoising equals
  // transport with the matching eta schedule.
  SolverConfig dps = transport;
  dps.eta.kind = EtaSchedule::Kind::flowdps;
  dps.dc = DcMethod::disabled();
  SolverConfig plain = transport;
  plain.eta.kind = EtaSchedule::Kind::flowdps;
  Rng r3(44);
  Rng r4(44);
  const Trajectory tr_c = sample_flow(field, lin, plain, r3);
  const Trajectory tr_d = flowdps_solve(field, lin, meas, dps, r4);
  c.small((tr_c.terminal() - tr_d.terminal()).norm(), 1e-9,
          "flowdps without dc reduces to transport");

  // dps_velocity and the oracle stay finite on a small task.
  Rng r5(55);
  SolverConfig dv = transport;
  dv.nfe = 8;
  const Trajectory tr_e = dps_velocity_solve(field, lin, meas, dv, r5);
  c.expect(tr_e.terminal().allFinite(), "dps_velocity finite");
  Rng r6(66);
  const Trajectory tr_f = posterior_oracle_solve(prior, lin, meas, dv, r6);
  c.expect(tr_f.terminal().allFinite(), "oracle finite");

  // Guidance algebra.
  Eigen::VectorXd vu(2), vc(2);
  vu << 1.0, 0.0;
  vc << 0.0, 1.0;
  c.small((guided_velocity(vu, vc, 0.0) - vu).norm(), 0.0, "lambda 0");
  c.small((guided_velocity(vu, vc, 1.0) - vc).norm(), 0.0, "lambda 1");
}

// ---------------------------------------------------------------------- mlp

void suite_mlp_gradcheck(Checker& c) {
  // 16-parameter toy: d=1, one frequency, two hidden layers of width 2, no
  // output bias: (3*2+2) + (2*2+2) + 2 = 16.
  MlpConfig cfg;
  cfg.dim = 1;
  cfg.freqs = 1;
  cfg.hidden_width = 2;
  cfg.hidden_layers = 2;
  cfg.output_bias = false;
  Rng rng(99);
  MlpVelocity net(cfg, rng);
  c.expect(net.parameter_count() == 16, "toy net has 16 parameters");

  // Give the zero output layer nonzero values so its gradients are live.
  Eigen::VectorXd theta = net.get_parameters();
  Rng tr(100);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) += 0.3 * tr.normal();
  }
  net.set_parameters(theta);

  const int n = 8;
  Rng br(101);
  const Eigen::MatrixXd x0m = br.normal_matrix(1, n);
  const Eigen::MatrixXd x1m = br.normal_matrix(1, n);
  Eigen::VectorXd tv(n);
  for (int j = 0; j < n; ++j) {
    tv(j) = br.uniform();
  }

  Eigen::VectorXd grad;
  const double base = cfm_loss_grad(net, x0m, x1m, tv, grad);
  c.expect(std::isfinite(base), "loss finite");

  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta;
    Eigen::VectorXd tm = theta;
    tp(i) += h;
    tm(i) -= h;
    Eigen::VectorXd dummy;
    net.set_parameters(tp);
    const double lp = cfm_loss_grad(net, x0m, x1m, tv, dummy);
    net.set_parameters(tm);
    const double lm = cfm_loss_grad(net, x0m, x1m, tv, dummy);
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst,
                     std::abs(fd - grad(i)) / std::max(1.0, std::abs(fd)));
  }
  net.set_parameters(theta);
  c.small(worst, 1e-4, "parameter gradient matches finite differences");

  // cfm_loss on samples agrees with the batched path.
  std::vector<CfmSample> batch;
  for (int j = 0; j < n; ++j) {
    batch.push_back({x0m.col(j), x1m.col(j), tv(j)});
  }
  const double generic = cfm_loss(net, batch);
  c.small(std::abs(generic - base) / std::max(1.0, base), 1e-12,
          "generic and batched losses agree");
}

void suite_mlp_serialization(Checker& c) {
  MlpConfig cfg;
  cfg.dim = 2;
  cfg.freqs = 3;
  cfg.hidden_width = 8;
  cfg.hidden_layers = 2;
  Rng rng(123);
  MlpVelocity net(cfg, rng);
  Eigen::VectorXd theta = net.get_parameters();
  Rng pr(124);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) += 0.1 * pr.normal();
  }
  net.set_parameters(theta);

  const auto path =
      (std::filesystem::temp_directory_path() / "flowps_verify_model.bin")
          .string();
  net.save(path);
  const MlpVelocity back = MlpVelocity::load(path);
  std::filesystem::remove(path);
  c.expect(back.parameter_count() == net.parameter_count(),
           "round-trip parameter count");
  c.small((back.get_parameters() - net.get_parameters()).cwiseAbs().maxCoeff(),
          0.0, "round-trip parameters exact");
  const Eigen::VectorXd probe = Eigen::VectorXd::LinSpaced(2, -0.5, 0.7);
  c.small((back.eval(0.37, probe) - net.eval(0.37, probe)).norm(), 0.0,
          "round-trip forward exact");
}

void suite_train_smoke(Checker& c, bool full) {
  const GaussianMixture prior = tri_gauss_2d();
  MlpConfig mcfg;
  mcfg.dim = 2;
  mcfg.hidden_width = 32;
  mcfg.hidden_layers = 2;
  mcfg.freqs = 4;
  Rng rng(7);
  MlpVelocity net(mcfg, rng);

  TrainConfig tc;
  tc.steps = full ? 600 : 40;
  tc.batch_size = 128;
  tc.learning_rate = 1e-3;
  tc.warmup_steps = 50;
  tc.cosine_decay = false;
  tc.seed = 5;
  const TrainResult res = train_flow(net, prior, tc);
  c.expect(static_cast<int>(res.losses.size()) == tc.steps,
           "one loss per step");
  for (double l : res.losses) {
    c.expect(std::isfinite(l), "finite losses");
  }
  if (full) {
    const int w = tc.steps / 6;
    double head = 0.0;
    double tail = 0.0;
    for (int i = 0; i < w; ++i) {
      head += res.losses[static_cast<std::size_t>(i)];
      tail += res.losses[res.losses.size() - 1 - static_cast<std::size_t>(i)];
    }
    c.expect(tail < 0.9 * head, "loss descends over a short run");
  }

  // steps = 0 leaves parameters untouched.
  MlpVelocity frozen(mcfg, rng);
  const Eigen::VectorXd before = frozen.get_parameters();
  TrainConfig none = tc;
  none.steps = 0;
  const TrainResult empty = train_flow(frozen, prior, none);
  c.expect(empty.losses.empty(), "steps=0 empty trace");
  c.small((frozen.get_parameters() - before).norm(), 0.0,
          "steps=0 parameters unchanged");

  // Same seed -> identical traces.
  MlpVelocity n1(mcfg, rng);
  MlpVelocity n2 = n1;
  TrainConfig tshort = tc;
  tshort.steps = 10;
  const TrainResult ra = train_flow(n1, prior, tshort);
  const TrainResult rb = train_flow(n2, prior, tshort);
  bool same = ra.losses.size() == rb.losses.size();
  for (std::size_t i = 0; same && i < ra.losses.size(); ++i) {
    same = ra.losses[i] == rb.losses[i];
  }
  c.expect(same, "same seed, identical traces");
}

// ------------------------------------------------------------- metrics / io

void suite_metrics(Checker& c) {
  Eigen::VectorXd ref(1), off(1);
  ref << 0.0;
  off << 0.1;
  c.near(psnr(off, ref, 1.0), 20.0, 1e-12, "psnr 0.1 example");
  Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5);
  c.near(psnr(Eigen::VectorXd::Zero(4), half, 1.0),
         10.0 * std::log10(1.0 / 0.25), 1e-12, "psnr uniform half");
  c.near(psnr(ref, ref, 1.0), 99.0, 0.0, "psnr sentinel");

  // Point masses in 1D: SW = |c|.
  Rng rng(2024);
  const Eigen::MatrixXd za = Eigen::MatrixXd::Zero(64, 1);
  const Eigen::MatrixXd zb = Eigen::MatrixXd::Constant(64, 1, -1.75);
  c.near(sliced_wasserstein(za, zb, 16, rng), 1.75, 1e-12,
         "point-mass distance");
}

void suite_io_roundtrip(Checker& c) {
  namespace fsys = std::filesystem;
  const auto dir = fsys::temp_directory_path();

  // PGM: quantized 16-bit levels survive a write/read cycle exactly.
  Rng rng(31);
  Eigen::MatrixXd img(4, 5);
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index cc = 0; cc < img.cols(); ++cc) {
      img(r, cc) = std::round(rng.uniform() * 65535.0);
    }
  }
  const auto pgm = (dir / "flowps_verify.pgm").string();
  write_pgm(pgm, img, 0.0, 65535.0);
  const Eigen::MatrixXd back = read_pgm(pgm, 0.0, 65535.0);
  fsys::remove(pgm);
  c.small((back - img).cwiseAbs().maxCoeff(), 0.0, "pgm lossless round trip");

  // Matrix round trip at full precision.
  const Eigen::MatrixXd m = rng.normal_matrix(3, 4);
  const auto mat = (dir / "flowps_verify.mat").string();
  write_matrix(mat, m);
  const Eigen::MatrixXd mb = read_matrix(mat);
  fsys::remove(mat);
  c.small((mb - m).cwiseAbs().maxCoeff(), 0.0, "matrix round trip exact");

  // Config snapshot re-parses to the same canonical form.
  ExperimentConfig cfg;
  cfg.prior_name = "two_moons_gmm";
  cfg.prior = builtin_prior(cfg.prior_name);
  cfg.task.kind = TaskSpec::Kind::sr_avgpool;
  const KvMap snap = cfg.snapshot();
  const std::string text = serialize_config(snap);
  const ExperimentConfig again = ExperimentConfig::from_kv(
      parse_config_text(text));
  c.expect(again.snapshot() == snap, "config snapshot round trip");
}

// ------------------------------------------------------- Monte-Carlo (full)

void suite_mc_transport(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  Eigen::VectorXd mu(2);
  mu << 1.5, -0.5;
  const GaussianMixture prior =
      single_gaussian(mu, Eigen::MatrixXd::Identity(2, 2));
  const GmmVelocityField field(prior, lin);

  SolverConfig cfg;
  cfg.nfe = 500;
  cfg.shift = 1.0;
  cfg.eta.kind = EtaSchedule::Kind::zero;
  Rng rng(1234);
  const int n = 10000;
  const Eigen::MatrixXd X = sample_flow_terminal_batch(field, lin, cfg, rng, n);

  const double se = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < 2; ++j) {
    const double m = X.row(j).mean();
    c.small(std::abs(m - mu(j)), 3.0 * se, "terminal mean coordinate");
    const double var =
        (X.row(j).array() - m).square().sum() / static_cast<double>(n - 1);
    c.small(std::abs(var - 1.0), 0.05, "terminal variance coordinate");
  }
}

void suite_mc_posterior(Checker& c) {
  const AffineSchedule lin = AffineSchedule::linear();
  Rng setup(4321);
  const int d = 8;
  const GaussianMixture prior = random_gmm(setup, d, 1);
  const Eigen::MatrixXd amat = setup.normal_matrix(4, d);
  const LinearOperator a = LinearOperator::dense(amat);
  const Eigen::VectorXd x0 = sample(prior, setup, 1).row(0);
  Rng noise(999);
  const auto op = std::make_shared<LinearOperator>(a);
  const Measurement meas = make_measurement(op, x0, 0.1, noise);

  const GaussianMixture post =
      linear_gaussian_posterior(prior, a, meas.y, 0.1);
  const GmmVelocityField field(post, lin);

  SolverConfig cfg;
  cfg.nfe = 500;
  cfg.shift = 1.0;
  cfg.eta.kind = EtaSchedule::Kind::zero;
  Rng rng(777);
  const int n = 10000;
  const Eigen::MatrixXd X = sample_flow_terminal_batch(field, lin, cfg, rng, n);

  const Eigen::VectorXd mu = post.mean();
  const Eigen::MatrixXd cov = post.covariance();
  const Eigen::VectorXd emp_mean = X.rowwise().mean();
  for (int j = 0; j < d; ++j) {
    const double se = std::sqrt(cov(j, j) / n);
    c.small(std::abs(emp_mean(j) - mu(j)), 3.0 * se, "posterior mean coord");
  }
  Eigen::MatrixXd centered = X;
  centered.colwise() -= emp_mean;
  const Eigen::MatrixXd emp_cov =
      centered * centered.transpose() / static_cast<double>(n - 1);
  c.small((emp_cov - cov).norm() / cov.norm(), 0.10, "posterior covariance");
}

void suite_mc_sampling(Checker& c) {
  // Mixture sampler moments at n = 1e5.
  const GaussianMixture g = tri_gauss_2d();
  Rng rng(31415);
  const int n = 100000;
  const Eigen::MatrixXd s = sample(g, rng, n);
  const Eigen::VectorXd mu = g.mean();
  const double se = 3.0 / std::sqrt(static_cast<double>(n));
  const Eigen::MatrixXd cov = g.covariance();
  for (int j = 0; j < 2; ++j) {
    c.small(std::abs(s.col(j).mean() - mu(j)),
            se * std::sqrt(cov(j, j)), "sample mean");
  }

  // Near point mass collapses to its mean.
  GaussianMixture pm = single_gaussian(Eigen::VectorXd::Constant(2, 3.0),
                                       1e-12 *
                                           Eigen::MatrixXd::Identity(2, 2));
  Rng rng2(8);
  const Eigen::MatrixXd sp = sample(pm, rng2, 100);
  c.small((sp.rowwise() - Eigen::RowVector2d(3.0, 3.0)).cwiseAbs().maxCoeff(),
          1e-4, "point mass samples");

  // SW self-distance of N(0,I) at n=1e4 is small.
  Rng rng3(9);
  const GaussianMixture std3 =
      single_gaussian(Eigen::VectorXd::Zero(3),
                      Eigen::MatrixXd::Identity(3, 3));
  const Eigen::MatrixXd a = sample(std3, rng3, 10000);
  const Eigen::MatrixXd b = sample(std3, rng3, 10000);
  Rng rng4(10);
  c.small(sliced_wasserstein(a, b, 64, rng4), 0.05, "sw self distance");
}

}  // namespace

std::vector<SuiteResult> run_verify(bool full) {
  std::vector<SuiteResult> out;
  const int oracle_cases = full ? 200 : 40;

  out.push_back(run_suite("schedule.boundary", suite_schedule_boundary));
  out.push_back(run_suite("schedule.step_coefficients",
                          suite_step_coefficients));
  out.push_back(run_suite("schedule.grid_beta", suite_grid_beta));
  out.push_back(run_suite("schedule.zeta", suite_zeta));
  out.push_back(run_suite("rng.streams", suite_rng));
  out.push_back(run_suite("gmm.denoiser_oracle", [&](Checker& c) {
    suite_denoiser_oracle(c, oracle_cases);
  }));
  out.push_back(run_suite("gmm.score_relation", [&](Checker& c) {
    suite_score_relation(c, oracle_cases);
  }));
  out.push_back(run_suite("gmm.posterior", suite_posterior));
  out.push_back(run_suite("gmm.subspace_jacobian", suite_prop2_jacobian));
  out.push_back(run_suite("tweedie.identities", suite_tweedie));
  out.push_back(run_suite("forward_ops.adjoints", suite_forward_ops));
  out.push_back(run_suite("forward_ops.data_consistency",
                          suite_data_consistency));
  out.push_back(run_suite("solvers.reductions", suite_solver_reductions));
  out.push_back(run_suite("mlp.gradcheck", suite_mlp_gradcheck));
  out.push_back(run_suite("mlp.serialization", suite_mlp_serialization));
  out.push_back(run_suite("train.smoke", [&](Checker& c) {
    suite_train_smoke(c, full);
  }));
  out.push_back(run_suite("metrics.examples", suite_metrics));
  out.push_back(run_suite("io.roundtrip", suite_io_roundtrip));
  if (full) {
    out.push_back(run_suite("mc.transport_moments", suite_mc_transport));
    out.push_back(run_suite("mc.posterior_moments", suite_mc_posterior));
    out.push_back(run_suite("mc.sampling", suite_mc_sampling));
  }
  return out;
}

int count_failures(const std::vector<SuiteResult>& results) {
  int n = 0;
  for (const auto& r : results) {
    if (!r.pass) {
      ++n;
    }
  }
  return n;
}

}  // namespace flowps
