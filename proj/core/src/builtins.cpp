#include "flowps/builtins.hpp"

#include <cmath>

#include "flowps/errors.hpp"

namespace flowps {

GaussianMixture two_moons_gmm() {
  const int per_moon = 6;
  const int k = 2 * per_moon;
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  const Eigen::MatrixXd cov = 0.01 * Eigen::MatrixXd::Identity(2, 2);
  for (int i = 0; i < per_moon; ++i) {
    const double theta = M_PI * (i + 0.5) / per_moon;
    Eigen::VectorXd upper(2);
    upper << std::cos(theta), std::sin(theta);
    Eigen::VectorXd lower(2);
    lower << 1.0 - std::cos(theta), 0.5 - std::sin(theta);
    g.means.push_back(upper);
    g.means.push_back(lower);
    g.covs.push_back(cov);
    g.covs.push_back(cov);
  }
  g.validate();
  return g;
}

GaussianMixture rings_gmm() {
  const int per_ring = 8;
  const int k = 2 * per_ring;
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  const Eigen::MatrixXd cov = 0.02 * Eigen::MatrixXd::Identity(2, 2);
  for (double radius : {1.0, 2.0}) {
    for (int i = 0; i < per_ring; ++i) {
      const double theta = 2.0 * M_PI * i / per_ring;
      Eigen::VectorXd mean(2);
      mean << radius * std::cos(theta), radius * std::sin(theta);
      g.means.push_back(mean);
      g.covs.push_back(cov);
    }
  }
  g.validate();
  return g;
}

GaussianMixture smooth_image_16() {
  const int side = 16;
  const int d = side * side;
  const double ell = 2.0;
  Eigen::MatrixXd cov(d, d);
  for (int i = 0; i < d; ++i) {
    const double ri = i / side;
    const double ci = i % side;
    for (int j = 0; j < d; ++j) {
      const double rj = j / side;
      const double cj = j % side;
      const double dist2 = (ri - rj) * (ri - rj) + (ci - cj) * (ci - cj);
      cov(i, j) = std::exp(-dist2 / (2.0 * ell * ell));
    }
  }
  GaussianMixture g = single_gaussian(Eigen::VectorXd::Zero(d), cov);
  g.validate();
  return g;
}

GaussianMixture tri_gauss_2d() {
  GaussianMixture g;
  g.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  Eigen::VectorXd m0(2), m1(2), m2(2);
  m0 << -4.5, -3.0;
  m1 << 4.5, -3.0;
  m2 << 0.0, 5.25;
  g.means = {m0, m1, m2};
  const Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  g.covs = {cov, cov, cov};
  g.validate();
  return g;
}

GaussianMixture builtin_prior(const std::string& name) {
  if (name == "two_moons_gmm") {
    return two_moons_gmm();
  }
  if (name == "rings_gmm") {
    return rings_gmm();
  }
  if (name == "smooth_image_16") {
    return smooth_image_16();
  }
  if (name == "tri_gauss_2d") {
    return tri_gauss_2d();
  }
  throw ConfigError("unknown builtin prior '" + name +
                    "' (expected two_moons_gmm, rings_gmm, smooth_image_16 "
                    "or tri_gauss_2d)");
}

}  // namespace flowps
