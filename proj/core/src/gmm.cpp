#include "flowps/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// Log-density of N(mean, cov) at x via LLT; cov must be SPD.
double gaussian_log_density(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw DomainError("gaussian_log_density: covariance not SPD");
  const Eigen::VectorXd d = x - mean;
  const Eigen::VectorXd sol = llt.solve(d);
  double log_det = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < L.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
  return -0.5 * (d.dot(sol) + log_det + x.size() * kLog2Pi);
}

// Softmax of log-weights with max subtraction.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - m).exp();
  return w / w.sum();
}

struct ComponentMarginal {
  Eigen::LLT<Eigen::MatrixXd> llt;  // of M_k = a^2 Sigma_k + b^2 I
  double log_det = 0.0;
};

// Factorizations of the per-component forward-marginal covariances at time t.
std::vector<ComponentMarginal> factor_marginals(const GaussianMixture& prior,
                                                double a, double b) {
  const int d = prior.dim();
  std::vector<ComponentMarginal> out;
  out.reserve(static_cast<std::size_t>(prior.components()));
  for (int k = 0; k < prior.components(); ++k) {
    Eigen::MatrixXd M = a * a * prior.covs[static_cast<std::size_t>(k)];
    M.diagonal().array() += b * b;
    ComponentMarginal cm;
    cm.llt.compute(M);
    if (cm.llt.info() != Eigen::Success)
      throw DomainError("marginal covariance not SPD (is b_t = 0 with a "
                        "singular component covariance?)");
    const auto& L = cm.llt.matrixLLT();
    for (int i = 0; i < d; ++i) cm.log_det += 2.0 * std::log(L(i, i));
    out.push_back(std::move(cm));
  }
  return out;
}

}  // namespace

void GaussianMixture::validate() const {
  const int K = components();
  if (K == 0) throw DomainError("mixture: no components");
  if (static_cast<int>(means.size()) != K ||
      static_cast<int>(covs.size()) != K)
    throw DomainError("mixture: component count mismatch");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw DomainError("mixture: weights must sum to 1");
  const int d = dim();
  for (int k = 0; k < K; ++k) {
    if (!(weights[k] > 0.0)) throw DomainError("mixture: weight <= 0");
    const auto& mu = means[static_cast<std::size_t>(k)];
    const auto& S = covs[static_cast<std::size_t>(k)];
    if (static_cast<int>(mu.size()) != d || S.rows() != d || S.cols() != d)
      throw DomainError("mixture: inconsistent dimensions");
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw DomainError("mixture: covariance not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        S, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw DomainError("mixture: covariance not PSD");
  }
}

Eigen::VectorXd GaussianMixture::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < components(); ++k)
    m += weights[k] * means[static_cast<std::size_t>(k)];
  return m;
}

Eigen::MatrixXd GaussianMixture::covariance() const {
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dim(), dim());
  for (int k = 0; k < components(); ++k) {
    const Eigen::VectorXd d = means[static_cast<std::size_t>(k)] - m;
    c += weights[k] * (covs[static_cast<std::size_t>(k)] + d * d.transpose());
  }
  return c;
}

double GaussianMixture::log_density(const Eigen::VectorXd& x) const {
  Eigen::VectorXd logits(components());
  for (int k = 0; k < components(); ++k)
    logits[k] = std::log(weights[k]) +
                gaussian_log_density(x, means[static_cast<std::size_t>(k)],
                                     covs[static_cast<std::size_t>(k)]);
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

GaussianMixture single_gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means.push_back(std::move(mean));
  g.covs.push_back(std::move(cov));
  return g;
}

void SubspacePrior::validate() const {
  const Eigen::MatrixXd gram =
      basis.transpose() * basis -
      Eigen::MatrixXd::Identity(basis.cols(), basis.cols());
  if (gram.cwiseAbs().maxCoeff() > 1e-10)
    throw DomainError("subspace prior: basis columns not orthonormal");
  if (static_cast<int>(offset.size()) != basis.rows())
    throw DomainError("subspace prior: offset dimension mismatch");
  if (!(spread > 0.0)) throw DomainError("subspace prior: spread <= 0");
}

GaussianMixture SubspacePrior::to_mixture(double eps) const {
  validate();
  if (eps < 0.0 || eps > 1e-8)
    throw DomainError("subspace prior: eps must lie in [0, 1e-8]");
  Eigen::MatrixXd cov = spread * (basis * basis.transpose());
  cov.diagonal().array() += eps;
  return single_gaussian(offset, std::move(cov));
}

Eigen::MatrixXd SubspacePrior::projector() const {
  return basis * basis.transpose();
}

GaussianMixture marginal_at(const GaussianMixture& prior,
                            const AffineSchedule& sched, double t) {
  const ScheduleCoeffs c = sched.eval(t);
  GaussianMixture out;
  out.weights = prior.weights;
  out.means.reserve(prior.means.size());
  out.covs.reserve(prior.covs.size());
  for (int k = 0; k < prior.components(); ++k) {
    out.means.push_back(c.a * prior.means[static_cast<std::size_t>(k)]);
    Eigen::MatrixXd M = c.a * c.a * prior.covs[static_cast<std::size_t>(k)];
    M.diagonal().array() += c.b * c.b;
    out.covs.push_back(std::move(M));
  }
  return out;
}

Eigen::MatrixXd denoiser_mean_batch(const GaussianMixture& prior,
                                    const AffineSchedule& sched, double t,
                                    const Eigen::MatrixXd& X) {
  const ScheduleCoeffs c = sched.eval(t);
  const int d = prior.dim();
  const int n = static_cast<int>(X.cols());
  if (static_cast<int>(X.rows()) != d)
    throw UsageError("denoiser_mean_batch: state dimension mismatch");
  if (c.b == 0.0) return X;  // t = 0: x_t = x0 exactly

  const int K = prior.components();
  const auto marg = factor_marginals(prior, c.a, c.b);

  // Per-component log-responsibility numerators and conditional means.
  Eigen::MatrixXd logits(K, n);
  std::vector<Eigen::MatrixXd> cond(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& mu = prior.means[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd centered = X.colwise() - (c.a * mu).eval();
    const Eigen::MatrixXd sol = marg[static_cast<std::size_t>(k)].llt.solve(centered);
    logits.row(k) =
        -0.5 * (centered.array() * sol.array()).colwise().sum();
    logits.row(k).array() +=
        std::log(prior.weights[k]) -
        0.5 * marg[static_cast<std::size_t>(k)].log_det;
    cond[static_cast<std::size_t>(k)] =
        (c.a * (prior.covs[static_cast<std::size_t>(k)] * sol)).colwise() + mu;
  }

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, n);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd resp = softmax(logits.col(j));
    for (int k = 0; k < K; ++k)
      out.col(j) += resp[k] * cond[static_cast<std::size_t>(k)].col(j);
  }
  return out;
}

Eigen::VectorXd denoiser_mean(const GaussianMixture& prior,
                              const AffineSchedule& sched, double t,
                              const Eigen::VectorXd& x) {
  return denoiser_mean_batch(prior, sched, t, x);
}

Eigen::VectorXd score(const GaussianMixture& prior, const AffineSchedule& sched,
                      double t, const Eigen::VectorXd& x) {
  const ScheduleCoeffs c = sched.eval(t);
  if (c.b == 0.0)
    throw SingularityError("score: b_t = 0 (t = 0)");
  const int K = prior.components();
  const auto marg = factor_marginals(prior, c.a, c.b);
  Eigen::VectorXd logits(K);
  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd centered =
        x - c.a * prior.means[static_cast<std::size_t>(k)];
    const Eigen::VectorXd sol = marg[static_cast<std::size_t>(k)].llt.solve(centered);
    logits[k] = std::log(prior.weights[k]) - 0.5 * centered.dot(sol) -
                0.5 * marg[static_cast<std::size_t>(k)].log_det;
    grads[static_cast<std::size_t>(k)] = -sol;
  }
  const Eigen::VectorXd resp = softmax(logits);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(prior.dim());
  for (int k = 0; k < K; ++k) g += resp[k] * grads[static_cast<std::size_t>(k)];
  return g;
}

Eigen::MatrixXd marginal_velocity_batch(const GaussianMixture& prior,
                                        const AffineSchedule& sched, double t,
                                        const Eigen::MatrixXd& X) {
  if (!(t > 0.0 && t < 1.0))
    throw SingularityError("marginal_velocity: t must lie in (0, 1)");
  const ScheduleCoeffs c = sched.eval(t);
  const Eigen::MatrixXd e0 = denoiser_mean_batch(prior, sched, t, X);
  const Eigen::MatrixXd e1 = (X - c.a * e0) / c.b;
  return c.a_dot * e0 + c.b_dot * e1;
}

Eigen::VectorXd marginal_velocity(const GaussianMixture& prior,
                                  const AffineSchedule& sched, double t,
                                  const Eigen::VectorXd& x) {
  return marginal_velocity_batch(prior, sched, t, x);
}

GaussianMixture linear_gaussian_posterior(const GaussianMixture& prior,
                                          const LinearOperator& A,
                                          const Eigen::VectorXd& y,
                                          double sigma_n) {
  if (!(sigma_n > 0.0))
    throw DomainError("linear_gaussian_posterior: sigma_n must be > 0");
  if (A.input_dim() != prior.dim())
    throw UsageError("linear_gaussian_posterior: operator/prior dimension "
                     "mismatch");
  if (static_cast<int>(y.size()) != A.output_dim())
    throw UsageError("linear_gaussian_posterior: measurement dimension "
                     "mismatch");
  const Eigen::MatrixXd Am = A.materialize();
  const int K = prior.components();
  const int m = A.output_dim();

  GaussianMixture post;
  post.weights.resize(K);
  post.means.reserve(static_cast<std::size_t>(K));
  post.covs.reserve(static_cast<std::size_t>(K));
  Eigen::VectorXd log_evidence(K);
  for (int k = 0; k < K; ++k) {
    const auto& mu = prior.means[static_cast<std::size_t>(k)];
    const auto& Sig = prior.covs[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd SigAt = Sig * Am.transpose();
    Eigen::MatrixXd S = Am * SigAt;
    S.diagonal().array() += sigma_n * sigma_n;
    const Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      throw DomainError("linear_gaussian_posterior: innovation covariance "
                        "not SPD");
    const Eigen::VectorXd innov = y - Am * mu;
    const Eigen::VectorXd w = llt.solve(innov);

    post.means.push_back(mu + SigAt * w);
    Eigen::MatrixXd cov = Sig - SigAt * llt.solve(SigAt.transpose());
    cov = 0.5 * (cov + cov.transpose()).eval();
    post.covs.push_back(std::move(cov));

    double log_det = 0.0;
    const auto& L = llt.matrixLLT();
    for (int i = 0; i < m; ++i) log_det += 2.0 * std::log(L(i, i));
    log_evidence[k] = std::log(prior.weights[k]) -
                      0.5 * (innov.dot(w) + log_det + m * kLog2Pi);
  }
  post.weights = softmax(log_evidence);
  return post;
}

Eigen::MatrixXd sample(const GaussianMixture& prior, Rng& rng, int n) {
  if (n < 1) throw DomainError("sample: n must be >= 1");
  const int d = prior.dim();
  const int K = prior.components();

  // PSD square roots via eigendecomposition (exact for singular covariances).
  std::vector<Eigen::MatrixXd> roots(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        prior.covs[static_cast<std::size_t>(k)]);
    if (es.info() != Eigen::Success)
      throw DomainError("sample: eigendecomposition failed");
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    roots[static_cast<std::size_t>(k)] =
        es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
  }

  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    const int k = rng.categorical(prior.weights);
    out.row(i) = (prior.means[static_cast<std::size_t>(k)] +
                  roots[static_cast<std::size_t>(k)] * rng.normal_vector(d))
                     .transpose();
  }
  return out;
}

Eigen::MatrixXd denoiser_jacobian_fd(const GaussianMixture& prior,
                                     const AffineSchedule& sched, double t,
                                     const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw DomainError("denoiser_jacobian_fd: h must be > 0");
  const int d = prior.dim();
  Eigen::MatrixXd J(d, d);
  Eigen::VectorXd xp = x, xm = x;
  for (int j = 0; j < d; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    J.col(j) = (denoiser_mean(prior, sched, t, xp) -
                denoiser_mean(prior, sched, t, xm)) /
               (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

}  // namespace flowps
