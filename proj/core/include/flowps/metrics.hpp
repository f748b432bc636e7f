#pragma once

#include <Eigen/Dense>

#include "flowps/forward_ops.hpp"
#include "flowps/rng.hpp"

namespace flowps {

// PSNR against a known peak: 10 log10(peak^2 * d / ||x - ref||^2).
// Identical inputs return the sentinel 99.0 dB.
double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& ref, double peak);

// PSNR after affinely mapping both vectors to [0,1] using the reference's
// min/max (peak 1). The reference must not be constant.
double psnr_mapped01(const Eigen::VectorXd& x, const Eigen::VectorXd& ref);

double mse(const Eigen::VectorXd& x, const Eigen::VectorXd& ref);

// ||A x - y|| / ||y||.
double relative_residual(const Measurement& meas, const Eigen::VectorXd& x);

// Sliced 2-Wasserstein distance between two equally sized sample sets
// (rows are samples): mean over random unit directions of the exact 1D
// W2 distance between the projected empirical distributions.
double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          int projections, Rng& rng);

}  // namespace flowps
