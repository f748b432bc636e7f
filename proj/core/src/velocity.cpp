#include "flowps/velocity.hpp"

#include "flowps/errors.hpp"

namespace flowps {

Eigen::VectorXd VelocityField::eval_cond(double /*t*/,
                                         const Eigen::VectorXd& /*x*/,
                                         int /*condition*/) const {
  throw UsageError("eval_cond called on a field without condition support");
}

Eigen::MatrixXd VelocityField::eval_batch(double t,
                                          const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd V(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    V.col(j) = eval(t, X.col(j));
  }
  return V;
}

Eigen::VectorXd eval_velocity(const VelocityField& field, double t,
                              const Eigen::VectorXd& x,
                              std::optional<int> condition) {
  if (x.size() != field.dim()) {
    throw UsageError("eval_velocity: state dimension " +
                     std::to_string(x.size()) + " does not match field dim " +
                     std::to_string(field.dim()));
  }
  if (condition.has_value()) {
    if (!field.supports_condition()) {
      throw UsageError(
          "eval_velocity: condition given but field has no condition support");
    }
    return field.eval_cond(t, x, *condition);
  }
  return field.eval(t, x);
}

GmmVelocityField::GmmVelocityField(GaussianMixture prior, AffineSchedule sched,
                                   bool labeled)
    : prior_(std::move(prior)), sched_(std::move(sched)), labeled_(labeled) {
  prior_.validate();
}

Eigen::VectorXd GmmVelocityField::eval(double t,
                                       const Eigen::VectorXd& x) const {
  // Single column through the batch path so conditional and batch use the
  // same arithmetic (bitwise-identical trajectories either way).
  Eigen::MatrixXd X(x.size(), 1);
  X.col(0) = x;
  return marginal_velocity_batch(prior_, sched_, t, X).col(0);
}

Eigen::VectorXd GmmVelocityField::eval_cond(double t, const Eigen::VectorXd& x,
                                            int condition) const {
  if (!labeled_) {
    throw UsageError("eval_cond called on an unlabeled mixture field");
  }
  if (condition < 0 || condition >= prior_.components()) {
    throw UsageError("eval_cond: component index " +
                     std::to_string(condition) + " out of range");
  }
  GaussianMixture single;
  single.weights = Eigen::VectorXd::Ones(1);
  single.means = {prior_.means[static_cast<std::size_t>(condition)]};
  single.covs = {prior_.covs[static_cast<std::size_t>(condition)]};
  Eigen::MatrixXd X(x.size(), 1);
  X.col(0) = x;
  return marginal_velocity_batch(single, sched_, t, X).col(0);
}

Eigen::MatrixXd GmmVelocityField::eval_batch(double t,
                                             const Eigen::MatrixXd& X) const {
  return marginal_velocity_batch(prior_, sched_, t, X);
}

Eigen::VectorXd guided_velocity(const Eigen::VectorXd& v_uncond,
                                const Eigen::VectorXd& v_cond, double lambda) {
  if (v_uncond.size() != v_cond.size()) {
    throw UsageError("guided_velocity: mismatched velocity dimensions");
  }
  return v_uncond + lambda * (v_cond - v_uncond);
}

}  // namespace flowps
