#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "flowps/builtins.hpp"
#include "flowps/errors.hpp"
#include "flowps/gmm.hpp"
#include "flowps/mlp.hpp"
#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"
#include "flowps/velocity.hpp"

using namespace flowps;

namespace {

// Velocity stub that ignores (t, x) and returns a fixed vector.
class ConstantField : public VelocityField {
 public:
  explicit ConstantField(Eigen::VectorXd value) : value_(std::move(value)) {}
  int dim() const override { return static_cast<int>(value_.size()); }
  Eigen::VectorXd eval(double, const Eigen::VectorXd&) const override {
    return value_;
  }

 private:
  Eigen::VectorXd value_;
};

GaussianMixture std_normal2() {
  return single_gaussian(Eigen::VectorXd::Zero(2),
                         Eigen::MatrixXd::Identity(2, 2));
}

}  // namespace

TEST_SUITE_BEGIN("velocity");

TEST_CASE("analytic field over a standard normal vanishes at the midpoint") {
  const GmmVelocityField field(std_normal2(), AffineSchedule::linear());
  Rng rng(30);
  for (int i = 0; i < 10; ++i) {
    CHECK(field.eval(0.5, rng.normal_vector(2)).norm() <= 1e-14);
  }
}

TEST_CASE("analytic field equals the mixture marginal velocity bitwise") {
  const GaussianMixture g = two_moons_gmm();
  const AffineSchedule lin = AffineSchedule::linear();
  const GmmVelocityField field(g, lin);
  Rng rng(31);
  for (int i = 0; i < 25; ++i) {
    const double t = 0.05 + 0.9 * rng.uniform();
    const Eigen::VectorXd x = rng.normal_vector(2);
    CHECK((field.eval(t, x) - marginal_velocity(g, lin, t, x))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("analytic field vanishes at the symmetry point of a mixture") {
  GaussianMixture g;
  g.weights = Eigen::Vector2d(0.5, 0.5);
  g.means = {Eigen::VectorXd::Constant(1, -2.0),
             Eigen::VectorXd::Constant(1, 2.0)};
  g.covs = {Eigen::MatrixXd::Constant(1, 1, 0.5),
            Eigen::MatrixXd::Constant(1, 1, 0.5)};
  const GmmVelocityField field(g, AffineSchedule::linear());
  CHECK(std::abs(field.eval(0.37, Eigen::VectorXd::Zero(1))(0)) <= 1e-14);
}

TEST_CASE("conditioning collapses the mixture to a single component") {
  const GaussianMixture g = rings_gmm();
  const AffineSchedule lin = AffineSchedule::linear();
  const GmmVelocityField field(g, lin, /*labeled=*/true);
  REQUIRE(field.supports_condition());
  Rng rng(32);
  for (int k : {0, 5, 15}) {
    const GaussianMixture comp =
        single_gaussian(g.means[static_cast<std::size_t>(k)],
                        g.covs[static_cast<std::size_t>(k)]);
    const double t = 0.2 + 0.6 * rng.uniform();
    const Eigen::VectorXd x = rng.normal_vector(2);
    const Eigen::VectorXd vc = field.eval_cond(t, x, k);
    const Eigen::VectorXd want = marginal_velocity(comp, lin, t, x);
    CHECK((vc - want).norm() <= 1e-12 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("conditions are rejected by unconditional fields") {
  const GmmVelocityField field(std_normal2(), AffineSchedule::linear());
  CHECK_FALSE(field.supports_condition());
  CHECK_THROWS_AS(
      (void)eval_velocity(field, 0.5, Eigen::VectorXd::Zero(2), 0),
      UsageError);
}

TEST_CASE("velocity evaluation validates dimension and condition range") {
  const GmmVelocityField field(rings_gmm(), AffineSchedule::linear(), true);
  CHECK_THROWS_AS(
      (void)eval_velocity(field, 0.5, Eigen::VectorXd::Zero(3), {}),
      UsageError);
  CHECK_THROWS_AS(
      (void)eval_velocity(field, 0.5, Eigen::VectorXd::Zero(2), 99),
      UsageError);
}

TEST_CASE("guidance mixing interpolates and extrapolates") {
  Eigen::VectorXd vu(1), vc(1);
  vu << 0.0;
  vc << 1.0;
  CHECK(guided_velocity(vu, vc, 0.0)(0) == 0.0);
  CHECK(guided_velocity(vu, vc, 1.0)(0) == 1.0);
  CHECK(guided_velocity(vu, vc, 2.0)(0) == 2.0);
  CHECK_THROWS_AS((void)guided_velocity(vu, Eigen::VectorXd::Zero(2), 1.0),
                  UsageError);
}

TEST_CASE("network reports its parameter count; the toy net has sixteen") {
  MlpConfig cfg;
  cfg.dim = 1;
  cfg.freqs = 1;
  cfg.hidden_width = 2;
  cfg.hidden_layers = 2;
  cfg.output_bias = false;
  Rng rng(33);
  const MlpVelocity net(cfg, rng);
  CHECK(net.parameter_count() == 16);

  MlpConfig big;
  big.dim = 2;
  big.hidden_width = 8;
  big.hidden_layers = 2;
  big.freqs = 2;
  Rng rng2(34);
  const MlpVelocity net2(big, rng2);
  // (2 + 4)->8, 8->8, 8->2 with biases everywhere.
  CHECK(net2.parameter_count() == (6 * 8 + 8) + (8 * 8 + 8) + (8 * 2 + 2));
}

TEST_CASE("freshly initialized network output is small on the unit ball") {
  MlpConfig cfg;
  Rng rng(35);
  const MlpVelocity net(cfg, rng);
  Rng probe(36);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x = probe.normal_vector(2);
    if (x.norm() > 1.0) {
      x /= x.norm();
    }
    const double t = probe.uniform();
    const double tc = std::min(std::max(t, 1e-5), 1.0 - 1e-5);
    CHECK(net.eval(tc, x).norm() <= 10.0 * (1.0 + x.norm()));
  }
}

TEST_CASE("network forward pass is deterministic and finite on the clamp range") {
  MlpConfig cfg;
  Rng rng(37);
  const MlpVelocity net(cfg, rng);
  Eigen::VectorXd x(2);
  x << 0.3, -0.7;
  const Eigen::VectorXd a = net.eval(1e-5, x);
  const Eigen::VectorXd b = net.eval(1e-5, x);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(net.eval(1.0 - 1e-5, x).allFinite());
  CHECK(static_cast<int>(a.size()) == 2);
}

TEST_CASE("flow-matching loss is zero when the field hits the target") {
  Eigen::VectorXd c(1);
  c << 1.5;
  const ConstantField field(c);
  std::vector<CfmSample> batch;
  Rng rng(38);
  for (int i = 0; i < 5; ++i) {
    CfmSample s;
    s.x0 = rng.normal_vector(1);
    s.x1 = s.x0 + c;  // target velocity x1 - x0 == c everywhere
    s.t = rng.uniform();
    batch.push_back(s);
  }
  // x0 + c - x0 re-rounds once, so the loss sits at the rounding floor
  // (~1e-32) rather than exactly zero.
  CHECK(cfm_loss(field, batch) <= 1e-30);
}

TEST_CASE("flow-matching loss of the zero field is the squared target norm") {
  const ConstantField zero(Eigen::VectorXd::Zero(1));
  CfmSample s;
  s.x0 = Eigen::VectorXd::Zero(1);
  s.x1 = Eigen::VectorXd::Constant(1, 2.0);
  s.t = 0.3;
  CHECK(cfm_loss(zero, {s}) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("flow-matching loss rejects an empty batch") {
  const ConstantField zero(Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS((void)cfm_loss(zero, {}), UsageError);
}

TEST_CASE("the marginal velocity has strictly positive loss on a mixture") {
  const GaussianMixture g = tri_gauss_2d();
  const AffineSchedule lin = AffineSchedule::linear();
  const GmmVelocityField field(g, lin);
  Rng rng(39);
  std::vector<CfmSample> batch;
  for (int i = 0; i < 256; ++i) {
    CfmSample s;
    s.x0 = sample(g, rng, 1).row(0);
    s.x1 = rng.normal_vector(2);
    s.t = rng.uniform();
    batch.push_back(s);
  }
  CHECK(cfm_loss(field, batch) > 0.1);
}

TEST_CASE("parameter gradients match finite differences on the toy net") {
  MlpConfig cfg;
  cfg.dim = 1;
  cfg.freqs = 1;
  cfg.hidden_width = 2;
  cfg.hidden_layers = 2;
  cfg.output_bias = false;
  Rng rng(40);
  MlpVelocity net(cfg, rng);
  Eigen::VectorXd theta = net.get_parameters();
  Rng pr(41);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) += 0.3 * pr.normal();
  }
  net.set_parameters(theta);

  Rng br(42);
  const int n = 8;
  const Eigen::MatrixXd x0 = br.normal_matrix(1, n);
  const Eigen::MatrixXd x1 = br.normal_matrix(1, n);
  Eigen::VectorXd tv(n);
  for (int j = 0; j < n; ++j) {
    tv(j) = br.uniform();
  }
  Eigen::VectorXd grad;
  (void)cfm_loss_grad(net, x0, x1, tv, grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta;
    Eigen::VectorXd tm = theta;
    tp(i) += h;
    tm(i) -= h;
    Eigen::VectorXd dummy;
    net.set_parameters(tp);
    const double lp = cfm_loss_grad(net, x0, x1, tv, dummy);
    net.set_parameters(tm);
    const double lm = cfm_loss_grad(net, x0, x1, tv, dummy);
    net.set_parameters(theta);
    const double fd = (lp - lm) / (2.0 * h);
    CHECK(std::abs(fd - grad(i)) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("model files round-trip exactly and reject corruption") {
  MlpConfig cfg;
  cfg.dim = 2;
  cfg.hidden_width = 8;
  cfg.hidden_layers = 2;
  cfg.freqs = 2;
  Rng rng(43);
  MlpVelocity net(cfg, rng);
  Eigen::VectorXd theta = net.get_parameters();
  Rng pr(44);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) += 0.1 * pr.normal();
  }
  net.set_parameters(theta);

  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "flowps_test_model.bin").string();
  net.save(path);
  const MlpVelocity back = MlpVelocity::load(path);
  CHECK((back.get_parameters() - net.get_parameters()).cwiseAbs().maxCoeff() ==
        0.0);
  Eigen::VectorXd x(2);
  x << -0.2, 0.9;
  CHECK((back.eval(0.41, x) - net.eval(0.41, x)).cwiseAbs().maxCoeff() == 0.0);

  {  // corrupt the magic number
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    const char junk[4] = {'J', 'U', 'N', 'K'};
    f.write(junk, 4);
  }
  CHECK_THROWS_AS((void)MlpVelocity::load(path), Error);
  fs::remove(path);
  CHECK_THROWS_AS((void)MlpVelocity::load(path), Error);
}

TEST_CASE("training returns one loss per step and is seed-deterministic") {
  MlpConfig cfg;
  cfg.dim = 2;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 2;
  cfg.freqs = 2;
  Rng rng(45);
  MlpVelocity a(cfg, rng);
  MlpVelocity b = a;
  TrainConfig tc;
  tc.steps = 25;
  tc.batch_size = 32;
  tc.warmup_steps = 10;
  tc.seed = 9;
  const GaussianMixture prior = tri_gauss_2d();
  const TrainResult ra = train_flow(a, prior, tc);
  const TrainResult rb = train_flow(b, prior, tc);
  REQUIRE(ra.losses.size() == 25);
  REQUIRE(rb.losses.size() == 25);
  for (std::size_t i = 0; i < ra.losses.size(); ++i) {
    CHECK(ra.losses[i] == rb.losses[i]);
    CHECK(std::isfinite(ra.losses[i]));
  }
  CHECK((a.get_parameters() - b.get_parameters()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("training with zero steps leaves the model untouched") {
  MlpConfig cfg;
  Rng rng(46);
  MlpVelocity net(cfg, rng);
  const Eigen::VectorXd before = net.get_parameters();
  TrainConfig tc;
  tc.steps = 0;
  const TrainResult r = train_flow(net, tri_gauss_2d(), tc);
  CHECK(r.losses.empty());
  CHECK((net.get_parameters() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training reports divergence with the offending step index") {
  MlpConfig cfg;
  cfg.dim = 2;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 2;
  cfg.freqs = 2;
  Rng rng(47);
  MlpVelocity net(cfg, rng);
  TrainConfig tc;
  tc.steps = 10;
  tc.batch_size = 16;
  tc.learning_rate = 1e9;  // guaranteed blow-up
  tc.warmup_steps = 0;
  try {
    (void)train_flow(net, tri_gauss_2d(), tc);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("training rejects a prior of mismatched dimension") {
  MlpConfig cfg;
  cfg.dim = 3;
  Rng rng(48);
  MlpVelocity net(cfg, rng);
  TrainConfig tc;
  tc.steps = 1;
  CHECK_THROWS_AS((void)train_flow(net, tri_gauss_2d(), tc), UsageError);
}

TEST_SUITE_END();
