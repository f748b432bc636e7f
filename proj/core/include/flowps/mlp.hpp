#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flowps/gmm.hpp"
#include "flowps/rng.hpp"
#include "flowps/velocity.hpp"

namespace flowps {

// Architecture of the learned velocity network: a plain tanh MLP on
// [x, time-features(t)] with sinusoidal time features at frequencies
// 2^k * 2*pi for k = 0 .. freqs-1 (sin and cos each).
struct MlpConfig {
  int dim = 2;
  int hidden_width = 128;
  int hidden_layers = 3;
  int freqs = 8;
  bool output_bias = true;

  int feature_dim() const { return dim + 2 * freqs; }
};

class MlpVelocity : public VelocityField {
 public:
  // Hidden layers get Xavier-uniform weights and zero biases; the output
  // layer starts at exactly zero so the initial field is the zero field.
  MlpVelocity(MlpConfig config, Rng& rng);

  int dim() const override { return config_.dim; }
  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd eval_batch(double t, const Eigen::MatrixXd& X) const override;

  // Batched forward with an independent time per column.
  Eigen::MatrixXd forward(const Eigen::VectorXd& t,
                          const Eigen::MatrixXd& X) const;

  const MlpConfig& config() const { return config_; }
  int parameter_count() const;
  Eigen::VectorXd get_parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);

  // Binary model files: fixed header, then per-layer shapes and row-major
  // little-endian doubles. save/load round-trip is exact.
  void save(const std::string& path) const;
  static MlpVelocity load(const std::string& path);

  friend double cfm_loss_grad(const MlpVelocity& model,
                              const Eigen::MatrixXd& X0,
                              const Eigen::MatrixXd& X1,
                              const Eigen::VectorXd& t, Eigen::VectorXd& grad);

 private:
  explicit MlpVelocity(MlpConfig config);  // uninitialized weights (loader)

  Eigen::MatrixXd time_features(const Eigen::VectorXd& t) const;

  MlpConfig config_;
  std::vector<Eigen::MatrixXd> weights_;  // hidden layers then output layer
  std::vector<Eigen::VectorXd> biases_;   // output bias omitted if disabled
};

// One conditional-flow-matching training triple; the regression target at
// x_t = (1-t) x0 + t x1 is the straight-line velocity x1 - x0.
struct CfmSample {
  Eigen::VectorXd x0;
  Eigen::VectorXd x1;
  double t = 0.0;
};

// Mean over the batch of the squared-norm regression error. Works for any
// field (loops sample-by-sample since each sample has its own time).
double cfm_loss(const VelocityField& field, const std::vector<CfmSample>& batch);

// Same loss on a column batch, plus the full analytic parameter gradient
// (manual backprop). Returns the loss; grad is resized to parameter_count().
double cfm_loss_grad(const MlpVelocity& model, const Eigen::MatrixXd& X0,
                     const Eigen::MatrixXd& X1, const Eigen::VectorXd& t,
                     Eigen::VectorXd& grad);

struct TrainConfig {
  int steps = 5000;
  int batch_size = 256;
  double learning_rate = 5e-4;
  int warmup_steps = 1500;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> losses;  // one entry per optimization step
  std::string header;          // human-readable recipe line for trace files
};

// Adam(0.9, 0.999, 1e-8) with linear warmup and optional cosine decay to 0.
// Each step draws x0 from the prior, x1 ~ N(0,I) and t ~ U(0,1). Throws
// TrainingError (with the step index) if the loss becomes non-finite or
// exceeds 1e6. steps = 0 leaves the model untouched and returns no trace.
TrainResult train_flow(MlpVelocity& model, const GaussianMixture& prior,
                       const TrainConfig& config);

}  // namespace flowps
