#include "flowps/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowps/errors.hpp"

namespace flowps {

namespace {

constexpr std::uint32_t kMagic = 0x53504C46u;  // "FLPS" little-endian
constexpr std::uint32_t kVersion = 1u;

void validate_config(const MlpConfig& c) {
  if (c.dim < 1 || c.hidden_width < 1 || c.hidden_layers < 1 || c.freqs < 0) {
    throw ConfigError("MlpConfig: dim/hidden_width/hidden_layers must be >= 1 "
                      "and freqs >= 0");
  }
}

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) {
    throw ConfigError("model file truncated");
  }
  return value;
}

void write_matrix_rowmajor(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      write_pod(os, m(r, c));
    }
  }
}

Eigen::MatrixXd read_matrix_rowmajor(std::istream& is, Eigen::Index rows,
                                     Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = read_pod<double>(is);
    }
  }
  return m;
}

}  // namespace

MlpVelocity::MlpVelocity(MlpConfig config) : config_(config) {
  validate_config(config_);
}

MlpVelocity::MlpVelocity(MlpConfig config, Rng& rng) : config_(config) {
  validate_config(config_);
  const int layer_count = config_.hidden_layers + 1;
  weights_.reserve(static_cast<std::size_t>(layer_count));
  biases_.reserve(static_cast<std::size_t>(layer_count));
  int in = config_.feature_dim();
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const int out = config_.hidden_width;
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = (2.0 * rng.uniform() - 1.0) * s;
      }
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  // Zero output layer: training starts from the zero velocity field, so the
  // first-window loss sits at the raw target second moment.
  weights_.push_back(Eigen::MatrixXd::Zero(config_.dim, in));
  if (config_.output_bias) {
    biases_.push_back(Eigen::VectorXd::Zero(config_.dim));
  }
}

Eigen::MatrixXd MlpVelocity::time_features(const Eigen::VectorXd& t) const {
  const Eigen::Index n = t.size();
  Eigen::MatrixXd f(2 * config_.freqs, n);
  for (int k = 0; k < config_.freqs; ++k) {
    const double w = std::ldexp(2.0 * M_PI, k);  // 2^k * 2*pi
    for (Eigen::Index j = 0; j < n; ++j) {
      f(2 * k, j) = std::sin(w * t(j));
      f(2 * k + 1, j) = std::cos(w * t(j));
    }
  }
  return f;
}

Eigen::MatrixXd MlpVelocity::forward(const Eigen::VectorXd& t,
                                     const Eigen::MatrixXd& X) const {
  if (X.rows() != config_.dim) {
    throw UsageError("MlpVelocity::forward: state rows != dim");
  }
  if (t.size() != X.cols()) {
    throw UsageError("MlpVelocity::forward: one time per column required");
  }
  const Eigen::Index n = X.cols();
  Eigen::MatrixXd z(config_.feature_dim(), n);
  z.topRows(config_.dim) = X;
  if (config_.freqs > 0) {
    z.bottomRows(2 * config_.freqs) = time_features(t);
  }
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    z = ((weights_[li] * z).colwise() + biases_[li]).array().tanh().matrix();
  }
  const auto lo = static_cast<std::size_t>(config_.hidden_layers);
  Eigen::MatrixXd v = weights_[lo] * z;
  if (config_.output_bias) {
    v.colwise() += biases_[lo];
  }
  return v;
}

Eigen::VectorXd MlpVelocity::eval(double t, const Eigen::VectorXd& x) const {
  Eigen::MatrixXd X(x.size(), 1);
  X.col(0) = x;
  Eigen::VectorXd tv(1);
  tv(0) = t;
  return forward(tv, X).col(0);
}

Eigen::MatrixXd MlpVelocity::eval_batch(double t,
                                        const Eigen::MatrixXd& X) const {
  return forward(Eigen::VectorXd::Constant(X.cols(), t), X);
}

int MlpVelocity::parameter_count() const {
  int n = 0;
  for (const auto& w : weights_) {
    n += static_cast<int>(w.size());
  }
  for (const auto& b : biases_) {
    n += static_cast<int>(b.size());
  }
  return n;
}

Eigen::VectorXd MlpVelocity::get_parameters() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::MatrixXd& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        theta(pos++) = w(r, c);
      }
    }
    if (l < biases_.size()) {
      theta.segment(pos, biases_[l].size()) = biases_[l];
      pos += biases_[l].size();
    }
  }
  return theta;
}

void MlpVelocity::set_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != parameter_count()) {
    throw UsageError("set_parameters: expected " +
                     std::to_string(parameter_count()) + " values, got " +
                     std::to_string(theta.size()));
  }
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd& w = weights_[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = theta(pos++);
      }
    }
    if (l < biases_.size()) {
      biases_[l] = theta.segment(pos, biases_[l].size());
      pos += biases_[l].size();
    }
  }
}

void MlpVelocity::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw ConfigError("cannot open model file for writing: " + path);
  }
  write_pod(os, kMagic);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint32_t>(config_.dim));
  write_pod(os, static_cast<std::uint32_t>(weights_.size()));
  write_pod(os, static_cast<std::uint32_t>(config_.freqs));
  write_pod(os, static_cast<std::uint32_t>(config_.output_bias ? 1 : 0));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    write_pod(os, static_cast<std::uint32_t>(weights_[l].cols()));
    write_pod(os, static_cast<std::uint32_t>(weights_[l].rows()));
    write_pod(os, static_cast<std::uint32_t>(l < biases_.size() ? 1 : 0));
    write_matrix_rowmajor(os, weights_[l]);
    if (l < biases_.size()) {
      write_matrix_rowmajor(os, biases_[l]);
    }
  }
  if (!os) {
    throw ConfigError("failed writing model file: " + path);
  }
}

MlpVelocity MlpVelocity::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw ConfigError("cannot open model file: " + path);
  }
  if (read_pod<std::uint32_t>(is) != kMagic) {
    throw ConfigError("not a model file (bad magic): " + path);
  }
  if (read_pod<std::uint32_t>(is) != kVersion) {
    throw ConfigError("unsupported model file version: " + path);
  }
  MlpConfig cfg;
  cfg.dim = static_cast<int>(read_pod<std::uint32_t>(is));
  const auto layer_count = read_pod<std::uint32_t>(is);
  cfg.freqs = static_cast<int>(read_pod<std::uint32_t>(is));
  cfg.output_bias = read_pod<std::uint32_t>(is) != 0;
  if (layer_count < 2) {
    throw ConfigError("model file must contain at least two layers");
  }
  cfg.hidden_layers = static_cast<int>(layer_count) - 1;

  MlpVelocity model(cfg);
  int expect_in = cfg.feature_dim();
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const auto in = static_cast<Eigen::Index>(read_pod<std::uint32_t>(is));
    const auto out = static_cast<Eigen::Index>(read_pod<std::uint32_t>(is));
    const bool has_bias = read_pod<std::uint32_t>(is) != 0;
    if (in != expect_in) {
      throw ConfigError("model file layer shapes are inconsistent");
    }
    model.weights_.push_back(read_matrix_rowmajor(is, out, in));
    if (has_bias) {
      model.biases_.push_back(read_matrix_rowmajor(is, out, 1).col(0));
    }
    expect_in = static_cast<int>(out);
  }
  const Eigen::Index last = static_cast<Eigen::Index>(layer_count) - 1;
  if (model.weights_[static_cast<std::size_t>(last)].rows() != cfg.dim) {
    throw ConfigError("model file output layer does not match dim");
  }
  model.config_.hidden_width =
      static_cast<int>(model.weights_.front().rows());
  model.config_.output_bias = model.biases_.size() == model.weights_.size();
  return model;
}

double cfm_loss(const VelocityField& field,
                const std::vector<CfmSample>& batch) {
  if (batch.empty()) {
    throw UsageError("cfm_loss: empty batch");
  }
  double total = 0.0;
  for (const CfmSample& s : batch) {
    const Eigen::VectorXd xt = (1.0 - s.t) * s.x0 + s.t * s.x1;
    const Eigen::VectorXd v = field.eval(s.t, xt);
    total += (v - (s.x1 - s.x0)).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

double cfm_loss_grad(const MlpVelocity& model, const Eigen::MatrixXd& X0,
                     const Eigen::MatrixXd& X1, const Eigen::VectorXd& t,
                     Eigen::VectorXd& grad) {
  const MlpConfig& cfg = model.config_;
  const Eigen::Index n = X0.cols();
  if (X1.cols() != n || t.size() != n || X0.rows() != cfg.dim ||
      X1.rows() != cfg.dim || n == 0) {
    throw UsageError("cfm_loss_grad: inconsistent batch shapes");
  }

  // Forward pass keeping every activation.
  Eigen::MatrixXd xt(cfg.dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    xt.col(j) = (1.0 - t(j)) * X0.col(j) + t(j) * X1.col(j);
  }
  std::vector<Eigen::MatrixXd> z(static_cast<std::size_t>(cfg.hidden_layers) +
                                 1);
  z[0].resize(cfg.feature_dim(), n);
  z[0].topRows(cfg.dim) = xt;
  if (cfg.freqs > 0) {
    z[0].bottomRows(2 * cfg.freqs) = model.time_features(t);
  }
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    z[li + 1] = ((model.weights_[li] * z[li]).colwise() + model.biases_[li])
                    .array()
                    .tanh()
                    .matrix();
  }
  const auto lo = static_cast<std::size_t>(cfg.hidden_layers);
  Eigen::MatrixXd v = model.weights_[lo] * z[lo];
  if (cfg.output_bias) {
    v.colwise() += model.biases_[lo];
  }

  const Eigen::MatrixXd resid = v - (X1 - X0);
  const double loss = resid.squaredNorm() / static_cast<double>(n);

  // Backward pass.
  std::vector<Eigen::MatrixXd> dW(model.weights_.size());
  std::vector<Eigen::VectorXd> db(model.biases_.size());
  Eigen::MatrixXd dv = (2.0 / static_cast<double>(n)) * resid;
  dW[lo] = dv * z[lo].transpose();
  if (cfg.output_bias) {
    db[lo] = dv.rowwise().sum();
  }
  Eigen::MatrixXd dz = model.weights_[lo].transpose() * dv;
  for (int l = cfg.hidden_layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Eigen::MatrixXd da =
        (dz.array() * (1.0 - z[li + 1].array().square())).matrix();
    dW[li] = da * z[li].transpose();
    db[li] = da.rowwise().sum();
    if (l > 0) {
      dz = model.weights_[li].transpose() * da;
    }
  }

  // Flatten in parameter order (row-major weights, then bias, per layer).
  grad.resize(model.parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < model.weights_.size(); ++l) {
    const Eigen::MatrixXd& g = dW[l];
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        grad(pos++) = g(r, c);
      }
    }
    if (l < model.biases_.size()) {
      grad.segment(pos, db[l].size()) = db[l];
      pos += db[l].size();
    }
  }
  return loss;
}

TrainResult train_flow(MlpVelocity& model, const GaussianMixture& prior,
                       const TrainConfig& config) {
  if (config.steps < 0 || config.batch_size < 1 ||
      config.learning_rate <= 0.0 || config.warmup_steps < 0) {
    throw ConfigError("train_flow: steps >= 0, batch_size >= 1, "
                      "learning_rate > 0, warmup_steps >= 0 required");
  }
  if (prior.dim() != model.dim()) {
    throw UsageError("train_flow: prior dimension does not match model");
  }

  TrainResult result;
  {
    std::ostringstream hs;
    hs << "# optimizer=adam beta1=0.9 beta2=0.999 eps=1e-8"
       << " lr=" << config.learning_rate << " warmup=" << config.warmup_steps
       << " decay=" << (config.cosine_decay ? "cosine" : "none")
       << " batch=" << config.batch_size << " steps=" << config.steps
       << " seed=" << config.seed;
    result.header = hs.str();
  }
  if (config.steps == 0) {
    return result;
  }

  const double beta1 = 0.9;
  const double beta2 = 0.999;
  const double adam_eps = 1e-8;

  Rng rng(config.seed);
  const int d = model.dim();
  const int n = config.batch_size;

  Eigen::VectorXd theta = model.get_parameters();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad;
  result.losses.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 1; step <= config.steps; ++step) {
    const Eigen::MatrixXd X0 = sample(prior, rng, n).transpose();
    const Eigen::MatrixXd X1 = rng.normal_matrix(d, n);
    Eigen::VectorXd t(n);
    for (int j = 0; j < n; ++j) {
      t(j) = rng.uniform();
    }

    const double loss = cfm_loss_grad(model, X0, X1, t, grad);
    if (!std::isfinite(loss) || loss > 1e6) {
      throw TrainingError("training diverged at step " + std::to_string(step) +
                          " (loss = " + std::to_string(loss) + ")");
    }
    result.losses.push_back(loss);

    double lr = config.learning_rate;
    if (config.warmup_steps > 0 && step <= config.warmup_steps) {
      lr *= static_cast<double>(step) / config.warmup_steps;
    } else if (config.cosine_decay && config.steps > config.warmup_steps) {
      const double progress =
          static_cast<double>(step - config.warmup_steps) /
          static_cast<double>(config.steps - config.warmup_steps);
      lr *= 0.5 * (1.0 + std::cos(M_PI * progress));
    }

    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    theta -= lr *
             (m / bc1)
                 .cwiseQuotient(((v / bc2).cwiseSqrt().array() + adam_eps)
                                    .matrix());
    model.set_parameters(theta);
  }
  return result;
}

}  // namespace flowps
