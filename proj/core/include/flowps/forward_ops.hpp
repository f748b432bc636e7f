#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "flowps/rng.hpp"

namespace flowps {

// The linear forward model y = A x (+ noise). Four variants share one
// interface; all expose the exact adjoint of the realized action.
class LinearOperator {
 public:
  enum class Kind { dense, avgpool, blur, mask };

  static LinearOperator dense(Eigen::MatrixXd matrix);
  // Mean over f x f blocks of an h x w image (row-major flattening);
  // f must divide both h and w.
  static LinearOperator avgpool(int height, int width, int factor);
  // Zero-padded 2D correlation with a normalized kernel; same output size.
  static LinearOperator blur(int height, int width, Eigen::MatrixXd kernel);
  // Keeps the listed coordinates (sorted, unique, in range).
  static LinearOperator mask(std::vector<int> keep, int input_dim);

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const;

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  Kind kind() const { return kind_; }

  // Dense m x d matrix realizing the action (used by exact posterior
  // oracles); guarded to input_dim <= 4096.
  Eigen::MatrixXd materialize() const;

  // Image geometry when the output is image-shaped (avgpool/blur); zero
  // otherwise.
  int output_height() const { return out_h_; }
  int output_width() const { return out_w_; }
  int input_height() const { return in_h_; }
  int input_width() const { return in_w_; }

 private:
  LinearOperator() = default;
  Kind kind_ = Kind::dense;
  int input_dim_ = 0;
  int output_dim_ = 0;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  int factor_ = 0;
  Eigen::MatrixXd matrix_;  // dense matrix or blur kernel
  std::vector<int> keep_;
};

// Normalized 2D Gaussian kernel of odd size (sums to 1, symmetric).
Eigen::MatrixXd gaussian_blur_kernel(int size, double std);

struct Measurement {
  Eigen::VectorXd y;
  std::shared_ptr<const LinearOperator> op;
  double sigma_n = 0.0;
};

// y = A x0 + sigma_n * xi with xi ~ N(0, I); deterministic given the rng.
Measurement make_measurement(std::shared_ptr<const LinearOperator> op,
                             const Eigen::VectorXd& x0, double sigma_n,
                             Rng& rng);

// grad_x log p(y | x) = -A^T (A x - y) / sigma_n^2; requires sigma_n > 0.
Eigen::VectorXd likelihood_grad(const LinearOperator& op,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, double sigma_n);

// Inner solver for min_x ||y - A x||^2 starting from x_init.
struct DcMethod {
  enum class Kind { gradient_descent, conjugate_gradient };
  Kind kind = Kind::gradient_descent;
  int steps = 3;
  double step_size = 15.0;  // raw gradient-of-(1/2)||y-Ax||^2 units
  double tol = 1e-10;       // absolute residual stop for conjugate_gradient

  static DcMethod gd(int steps, double step_size);
  static DcMethod cg(int steps, double tol = 1e-10);
  static DcMethod disabled();  // zero steps: returns x_init unchanged
};

Eigen::VectorXd data_consistency_solve(const LinearOperator& op,
                                       const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& x_init,
                                       const DcMethod& method);

}  // namespace flowps
