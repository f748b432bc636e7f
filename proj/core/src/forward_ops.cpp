#include "flowps/forward_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

void check_dim(int got, int want, const char* what) {
  if (got != want)
    throw UsageError(std::string(what) + ": dimension " + std::to_string(got) +
                     " != expected " + std::to_string(want));
}

}  // namespace

LinearOperator LinearOperator::dense(Eigen::MatrixXd matrix) {
  LinearOperator op;
  op.kind_ = Kind::dense;
  op.output_dim_ = static_cast<int>(matrix.rows());
  op.input_dim_ = static_cast<int>(matrix.cols());
  op.matrix_ = std::move(matrix);
  return op;
}

LinearOperator LinearOperator::avgpool(int height, int width, int factor) {
  if (height <= 0 || width <= 0 || factor <= 0)
    throw DomainError("avgpool: nonpositive geometry");
  if (height % factor != 0 || width % factor != 0)
    throw DomainError("avgpool: factor must divide height and width");
  LinearOperator op;
  op.kind_ = Kind::avgpool;
  op.in_h_ = height;
  op.in_w_ = width;
  op.factor_ = factor;
  op.out_h_ = height / factor;
  op.out_w_ = width / factor;
  op.input_dim_ = height * width;
  op.output_dim_ = op.out_h_ * op.out_w_;
  return op;
}

LinearOperator LinearOperator::blur(int height, int width,
                                    Eigen::MatrixXd kernel) {
  if (height <= 0 || width <= 0)
    throw DomainError("blur: nonpositive geometry");
  if (kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0)
    throw DomainError("blur: kernel sides must be odd");
  if (std::abs(kernel.sum() - 1.0) > 1e-10)
    throw DomainError("blur: kernel entries must sum to 1");
  LinearOperator op;
  op.kind_ = Kind::blur;
  op.in_h_ = op.out_h_ = height;
  op.in_w_ = op.out_w_ = width;
  op.input_dim_ = op.output_dim_ = height * width;
  op.matrix_ = std::move(kernel);
  return op;
}

LinearOperator LinearOperator::mask(std::vector<int> keep, int input_dim) {
  if (input_dim <= 0) throw DomainError("mask: nonpositive input dimension");
  if (keep.empty()) throw DomainError("mask: empty index set");
  std::sort(keep.begin(), keep.end());
  if (std::adjacent_find(keep.begin(), keep.end()) != keep.end())
    throw DomainError("mask: duplicate indices");
  if (keep.front() < 0 || keep.back() >= input_dim)
    throw DomainError("mask: index out of range");
  LinearOperator op;
  op.kind_ = Kind::mask;
  op.input_dim_ = input_dim;
  op.output_dim_ = static_cast<int>(keep.size());
  op.keep_ = std::move(keep);
  return op;
}

Eigen::VectorXd LinearOperator::apply(const Eigen::VectorXd& x) const {
  check_dim(static_cast<int>(x.size()), input_dim_, "apply");
  switch (kind_) {
    case Kind::dense:
      return matrix_ * x;
    case Kind::avgpool: {
      Eigen::VectorXd y(output_dim_);
      const double inv = 1.0 / (factor_ * factor_);
      for (int r = 0; r < out_h_; ++r)
        for (int c = 0; c < out_w_; ++c) {
          double acc = 0.0;
          for (int i = 0; i < factor_; ++i)
            for (int j = 0; j < factor_; ++j)
              acc += x[(r * factor_ + i) * in_w_ + (c * factor_ + j)];
          y[r * out_w_ + c] = acc * inv;
        }
      return y;
    }
    case Kind::blur: {
      const int kh = static_cast<int>(matrix_.rows());
      const int kw = static_cast<int>(matrix_.cols());
      const int ch = kh / 2, cw = kw / 2;
      Eigen::VectorXd y(output_dim_);
      for (int r = 0; r < in_h_; ++r)
        for (int c = 0; c < in_w_; ++c) {
          double acc = 0.0;
          for (int i = 0; i < kh; ++i) {
            const int rr = r + i - ch;
            if (rr < 0 || rr >= in_h_) continue;
            for (int j = 0; j < kw; ++j) {
              const int cc = c + j - cw;
              if (cc < 0 || cc >= in_w_) continue;
              acc += matrix_(i, j) * x[rr * in_w_ + cc];
            }
          }
          y[r * in_w_ + c] = acc;
        }
      return y;
    }
    case Kind::mask: {
      Eigen::VectorXd y(output_dim_);
      for (int i = 0; i < output_dim_; ++i) y[i] = x[keep_[i]];
      return y;
    }
  }
  throw UsageError("apply: unknown operator kind");
}

Eigen::VectorXd LinearOperator::apply_adjoint(const Eigen::VectorXd& y) const {
  check_dim(static_cast<int>(y.size()), output_dim_, "apply_adjoint");
  switch (kind_) {
    case Kind::dense:
      return matrix_.transpose() * y;
    case Kind::avgpool: {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(input_dim_);
      const double inv = 1.0 / (factor_ * factor_);
      for (int r = 0; r < out_h_; ++r)
        for (int c = 0; c < out_w_; ++c) {
          const double v = y[r * out_w_ + c] * inv;
          for (int i = 0; i < factor_; ++i)
            for (int j = 0; j < factor_; ++j)
              x[(r * factor_ + i) * in_w_ + (c * factor_ + j)] = v;
        }
      return x;
    }
    case Kind::blur: {
      // Correlation with the kernel flipped along both axes.
      const int kh = static_cast<int>(matrix_.rows());
      const int kw = static_cast<int>(matrix_.cols());
      const int ch = kh / 2, cw = kw / 2;
      Eigen::VectorXd x(input_dim_);
      for (int r = 0; r < in_h_; ++r)
        for (int c = 0; c < in_w_; ++c) {
          double acc = 0.0;
          for (int i = 0; i < kh; ++i) {
            const int rr = r + i - ch;
            if (rr < 0 || rr >= in_h_) continue;
            for (int j = 0; j < kw; ++j) {
              const int cc = c + j - cw;
              if (cc < 0 || cc >= in_w_) continue;
              acc += matrix_(kh - 1 - i, kw - 1 - j) * y[rr * in_w_ + cc];
            }
          }
          x[r * in_w_ + c] = acc;
        }
      return x;
    }
    case Kind::mask: {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(input_dim_);
      for (int i = 0; i < output_dim_; ++i) x[keep_[i]] = y[i];
      return x;
    }
  }
  throw UsageError("apply_adjoint: unknown operator kind");
}

Eigen::MatrixXd LinearOperator::materialize() const {
  if (input_dim_ > 4096)
    throw UsageError("materialize: input dimension exceeds 4096");
  if (kind_ == Kind::dense) return matrix_;
  Eigen::MatrixXd m(output_dim_, input_dim_);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(input_dim_);
  for (int j = 0; j < input_dim_; ++j) {
    e[j] = 1.0;
    m.col(j) = apply(e);
    e[j] = 0.0;
  }
  return m;
}

Eigen::MatrixXd gaussian_blur_kernel(int size, double std) {
  if (size < 1 || size % 2 == 0)
    throw DomainError("gaussian_blur_kernel: size must be odd and >= 1");
  if (!(std > 0.0)) throw DomainError("gaussian_blur_kernel: std must be > 0");
  const int half = size / 2;
  Eigen::MatrixXd k(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double di = i - half, dj = j - half;
      k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * std * std));
    }
  k /= k.sum();
  return k;
}

Measurement make_measurement(std::shared_ptr<const LinearOperator> op,
                             const Eigen::VectorXd& x0, double sigma_n,
                             Rng& rng) {
  if (!op) throw UsageError("make_measurement: null operator");
  if (sigma_n < 0.0) throw DomainError("make_measurement: sigma_n < 0");
  Measurement m;
  m.y = op->apply(x0);
  if (sigma_n > 0.0) m.y += sigma_n * rng.normal_vector(op->output_dim());
  m.op = std::move(op);
  m.sigma_n = sigma_n;
  return m;
}

Eigen::VectorXd likelihood_grad(const LinearOperator& op,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, double sigma_n) {
  if (!(sigma_n > 0.0))
    throw SingularityError("likelihood_grad: sigma_n must be > 0");
  if (static_cast<int>(y.size()) != op.output_dim())
    throw UsageError("likelihood_grad: y dimension " +
                     std::to_string(y.size()) + " != operator output " +
                     std::to_string(op.output_dim()));
  return op.apply_adjoint(y - op.apply(x)) / (sigma_n * sigma_n);
}

DcMethod DcMethod::gd(int steps, double step_size) {
  DcMethod m;
  m.kind = Kind::gradient_descent;
  m.steps = steps;
  m.step_size = step_size;
  return m;
}

DcMethod DcMethod::cg(int steps, double tol) {
  DcMethod m;
  m.kind = Kind::conjugate_gradient;
  m.steps = steps;
  m.tol = tol;
  return m;
}

DcMethod DcMethod::disabled() {
  DcMethod m;
  m.kind = Kind::gradient_descent;
  m.steps = 0;
  return m;
}

Eigen::VectorXd data_consistency_solve(const LinearOperator& op,
                                       const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& x_init,
                                       const DcMethod& method) {
  check_dim(static_cast<int>(x_init.size()), op.input_dim(), "dc_solve x");
  check_dim(static_cast<int>(y.size()), op.output_dim(), "dc_solve y");
  Eigen::VectorXd x = x_init;
  if (method.steps <= 0) return x;

  if (method.kind == DcMethod::Kind::gradient_descent) {
    for (int it = 0; it < method.steps; ++it) {
      x -= method.step_size * op.apply_adjoint(op.apply(x) - y);
      if (!x.allFinite())
        throw OptimizationError("gradient descent produced a non-finite "
                                "iterate at step " + std::to_string(it + 1));
    }
    return x;
  }

  // CGLS: conjugate gradient on the normal equations; the residual norm
  // ||y - A x|| is non-increasing over iterations.
  Eigen::VectorXd r = y - op.apply(x);
  Eigen::VectorXd s = op.apply_adjoint(r);
  Eigen::VectorXd p = s;
  double gamma = s.squaredNorm();
  for (int it = 0; it < method.steps; ++it) {
    if (r.norm() < method.tol || gamma == 0.0) break;
    const Eigen::VectorXd q = op.apply(p);
    const double qn = q.squaredNorm();
    if (qn == 0.0) break;
    const double alpha = gamma / qn;
    x += alpha * p;
    r -= alpha * q;
    if (!x.allFinite())
      throw OptimizationError("conjugate gradient produced a non-finite "
                              "iterate at step " + std::to_string(it + 1));
    s = op.apply_adjoint(r);
    const double gamma_next = s.squaredNorm();
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
  }
  return x;
}

}  // namespace flowps
