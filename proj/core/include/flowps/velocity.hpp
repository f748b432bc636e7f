#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "flowps/gmm.hpp"
#include "flowps/schedule.hpp"

namespace flowps {

// The evaluation contract shared by every sampler: (t, state) -> velocity.
// Fields must return finite outputs of the input dimension for all finite
// inputs and t in [1e-5, 1 - 1e-5].
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual bool supports_condition() const { return false; }

  virtual Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const = 0;

  // Conditional evaluation; only valid when supports_condition() is true.
  virtual Eigen::VectorXd eval_cond(double t, const Eigen::VectorXd& x,
                                    int condition) const;

  // Column-wise batch evaluation at a shared time (default: loop).
  virtual Eigen::MatrixXd eval_batch(double t, const Eigen::MatrixXd& X) const;
};

// Uniform entry point: dispatches to eval or eval_cond and rejects a
// condition passed to an unconditional field.
Eigen::VectorXd eval_velocity(const VelocityField& field, double t,
                              const Eigen::VectorXd& x,
                              std::optional<int> condition = std::nullopt);

// The analytic mixture velocity field. When constructed as labeled, a
// condition k collapses the mixture to its k-th component (exact
// class-conditional velocity).
class GmmVelocityField : public VelocityField {
 public:
  GmmVelocityField(GaussianMixture prior, AffineSchedule sched,
                   bool labeled = false);

  int dim() const override { return prior_.dim(); }
  bool supports_condition() const override { return labeled_; }

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const override;
  Eigen::VectorXd eval_cond(double t, const Eigen::VectorXd& x,
                            int condition) const override;
  Eigen::MatrixXd eval_batch(double t, const Eigen::MatrixXd& X) const override;

  const GaussianMixture& prior() const { return prior_; }
  const AffineSchedule& schedule() const { return sched_; }

 private:
  GaussianMixture prior_;
  AffineSchedule sched_;
  bool labeled_ = false;
};

// Classifier-free mixing: v(uncond) + lambda * (v(cond) - v(uncond)).
Eigen::VectorXd guided_velocity(const Eigen::VectorXd& v_uncond,
                                const Eigen::VectorXd& v_cond, double lambda);

}  // namespace flowps
