#include "flowps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowps/errors.hpp"

namespace flowps {

double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& ref,
            double peak) {
  if (x.size() != ref.size() || x.size() == 0) {
    throw UsageError("psnr: inputs must be non-empty and equally sized");
  }
  if (!(peak > 0.0)) {
    throw DomainError("psnr: peak must be positive");
  }
  const double err = (x - ref).squaredNorm();
  if (err == 0.0) {
    return 99.0;
  }
  const double d = static_cast<double>(x.size());
  return 10.0 * std::log10(peak * peak * d / err);
}

double psnr_mapped01(const Eigen::VectorXd& x, const Eigen::VectorXd& ref) {
  if (x.size() != ref.size() || x.size() == 0) {
    throw UsageError("psnr_mapped01: inputs must be non-empty and equal size");
  }
  const double lo = ref.minCoeff();
  const double hi = ref.maxCoeff();
  if (!(hi > lo)) {
    throw UsageError("psnr_mapped01: reference has no dynamic range");
  }
  const double scale = 1.0 / (hi - lo);
  const Eigen::VectorXd xm = (x.array() - lo) * scale;
  const Eigen::VectorXd rm = (ref.array() - lo) * scale;
  return psnr(xm, rm, 1.0);
}

double mse(const Eigen::VectorXd& x, const Eigen::VectorXd& ref) {
  if (x.size() != ref.size() || x.size() == 0) {
    throw UsageError("mse: inputs must be non-empty and equally sized");
  }
  return (x - ref).squaredNorm() / static_cast<double>(x.size());
}

double relative_residual(const Measurement& meas, const Eigen::VectorXd& x) {
  const double yn = meas.y.norm();
  if (yn == 0.0) {
    throw DomainError("relative_residual: measurement vector is zero");
  }
  return (meas.op->apply(x) - meas.y).norm() / yn;
}

double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          int projections, Rng& rng) {
  if (a.rows() == 0 || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(
        "sliced_wasserstein: sample sets must be non-empty with matching "
        "shapes");
  }
  if (projections < 1) {
    throw UsageError("sliced_wasserstein: projections must be >= 1");
  }
  const Eigen::Index n = a.rows();
  const Eigen::Index d = a.cols();
  std::vector<double> pa(static_cast<std::size_t>(n));
  std::vector<double> pb(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int p = 0; p < projections; ++p) {
    Eigen::VectorXd dir = rng.normal_vector(d);
    const double nrm = dir.norm();
    if (nrm == 0.0) {
      dir.setZero();
      dir(0) = 1.0;
    } else {
      dir /= nrm;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      pa[static_cast<std::size_t>(i)] = a.row(i).dot(dir);
      pb[static_cast<std::size_t>(i)] = b.row(i).dot(dir);
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double diff =
          pa[static_cast<std::size_t>(i)] - pb[static_cast<std::size_t>(i)];
      sq += diff * diff;
    }
    total += std::sqrt(sq / static_cast<double>(n));
  }
  return total / static_cast<double>(projections);
}

}  // namespace flowps
