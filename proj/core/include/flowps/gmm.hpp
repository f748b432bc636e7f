#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowps/forward_ops.hpp"
#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"

namespace flowps {

// A Gaussian mixture with dense symmetric PSD covariances. Serves as the
// analytically tractable prior/posterior family: forward marginals, scores,
// conditional-expectation denoisers, marginal velocities and exact
// linear-Gaussian posteriors all exist in closed form.
struct GaussianMixture {
  Eigen::VectorXd weights;               // K, positive, sums to 1
  std::vector<Eigen::VectorXd> means;    // K vectors of dimension d
  std::vector<Eigen::MatrixXd> covs;     // K symmetric PSD d x d matrices

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }

  // Enforces the type invariants; throws DomainError on violation.
  void validate() const;

  // Mixture-level moments.
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;

  // Log-density of the mixture at x (requires SPD covariances).
  double log_density(const Eigen::VectorXd& x) const;
};

GaussianMixture single_gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

// A nearly degenerate Gaussian spread over an affine subspace
// {offset + basis * z}: covariance spread * basis * basis^T + eps * I.
struct SubspacePrior {
  Eigen::MatrixXd basis;   // d x l, orthonormal columns
  Eigen::VectorXd offset;  // d
  double spread = 1.0;     // variance along the subspace, >> 1

  void validate() const;
  GaussianMixture to_mixture(double eps = 1e-8) const;
  Eigen::MatrixXd projector() const;  // basis * basis^T
};

// Forward marginal at time t: component k becomes N(a_t mu_k, a_t^2 Sigma_k
// + b_t^2 I) with unchanged weights.
GaussianMixture marginal_at(const GaussianMixture& prior,
                            const AffineSchedule& sched, double t);

// Exact conditional mean E[x0 | x_t = x]; valid for t in [0, 1] (t=0 returns
// x, t=1 reduces to the prior mean). Responsibilities are computed in
// log-space and the result is always finite.
Eigen::VectorXd denoiser_mean(const GaussianMixture& prior,
                              const AffineSchedule& sched, double t,
                              const Eigen::VectorXd& x);

// Column-wise denoiser for a batch X (d x n) at a shared time t.
Eigen::MatrixXd denoiser_mean_batch(const GaussianMixture& prior,
                                    const AffineSchedule& sched, double t,
                                    const Eigen::MatrixXd& X);

// Score of the forward marginal: grad_x log p_t(x); requires b_t > 0.
Eigen::VectorXd score(const GaussianMixture& prior, const AffineSchedule& sched,
                      double t, const Eigen::VectorXd& x);

// Marginal velocity v(t, x) = a_dot E[x0|x] + b_dot E[x1|x] with
// E[x1|x] = (x - a_t E[x0|x]) / b_t; requires t in (0, 1).
Eigen::VectorXd marginal_velocity(const GaussianMixture& prior,
                                  const AffineSchedule& sched, double t,
                                  const Eigen::VectorXd& x);

Eigen::MatrixXd marginal_velocity_batch(const GaussianMixture& prior,
                                        const AffineSchedule& sched, double t,
                                        const Eigen::MatrixXd& X);

// Exact Bayes posterior for y = A x + n, n ~ N(0, sigma_n^2 I). Implemented
// in measurement space (S = A Sigma A^T + sigma_n^2 I, gain = Sigma A^T
// S^{-1}), which requires only sigma_n > 0 and is exact for PSD-singular
// component covariances; component weights are re-weighted by their
// log-evidence.
GaussianMixture linear_gaussian_posterior(const GaussianMixture& prior,
                                          const LinearOperator& A,
                                          const Eigen::VectorXd& y,
                                          double sigma_n);

// n i.i.d. samples (rows); deterministic given the generator state.
Eigen::MatrixXd sample(const GaussianMixture& prior, Rng& rng, int n);

// Centered finite-difference Jacobian of denoiser_mean with respect to x.
Eigen::MatrixXd denoiser_jacobian_fd(const GaussianMixture& prior,
                                     const AffineSchedule& sched, double t,
                                     const Eigen::VectorXd& x, double h);

}  // namespace flowps
