// Microbenchmarks for the numerically hot paths: batched denoiser
// evaluation, a full posterior-sampling step, the blur operator, the
// sliced-Wasserstein metric, and the MLP forward pass.
#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <memory>

#include "flowps/builtins.hpp"
#include "flowps/forward_ops.hpp"
#include "flowps/gmm.hpp"
#include "flowps/metrics.hpp"
#include "flowps/mlp.hpp"
#include "flowps/rng.hpp"
#include "flowps/schedule.hpp"
#include "flowps/solvers.hpp"
#include "flowps/velocity.hpp"

namespace {

using namespace flowps;

void bm_denoiser_batch(benchmark::State& state) {
  const GaussianMixture prior = smooth_image_16();
  const AffineSchedule sched = AffineSchedule::linear();
  Rng rng(1);
  const Eigen::MatrixXd X = rng.normal_matrix(prior.dim(),
                                              static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoiser_mean_batch(prior, sched, 0.5, X));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_denoiser_batch)->Arg(16)->Arg(64)->Arg(256);

void bm_flowdps_step(benchmark::State& state) {
  const GaussianMixture prior = smooth_image_16();
  const AffineSchedule sched = AffineSchedule::linear();
  const GmmVelocityField field(prior, sched);
  const auto op = std::make_shared<const LinearOperator>(
      LinearOperator::avgpool(16, 16, 2));
  Rng rng(2);
  const Eigen::VectorXd x0 = sample(prior, rng, 1).row(0);
  const Measurement meas = make_measurement(op, x0, 0.03, rng);
  SolverConfig cfg;
  cfg.dc = DcMethod::gd(3, 10.0);
  const Eigen::VectorXd x = rng.normal_vector(prior.dim());
  for (auto _ : state) {
    Rng step_rng(3);
    benchmark::DoNotOptimize(
        flowdps_step(field, sched, meas, x, 0.6, 0.5, cfg, step_rng));
  }
}
BENCHMARK(bm_flowdps_step);

void bm_blur_apply(benchmark::State& state) {
  const LinearOperator op =
      LinearOperator::blur(16, 16, gaussian_blur_kernel(5, 1.0));
  Rng rng(4);
  const Eigen::VectorXd x = rng.normal_vector(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.apply(x));
  }
}
BENCHMARK(bm_blur_apply);

void bm_sliced_wasserstein(benchmark::State& state) {
  Rng rng(5);
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = rng.normal_matrix(n, 2);
  const Eigen::MatrixXd b = rng.normal_matrix(n, 2);
  for (auto _ : state) {
    Rng proj_rng(6);
    benchmark::DoNotOptimize(sliced_wasserstein(a, b, 64, proj_rng));
  }
}
BENCHMARK(bm_sliced_wasserstein)->Arg(1000)->Arg(10000);

void bm_mlp_forward(benchmark::State& state) {
  Rng rng(7);
  MlpVelocity model(MlpConfig{}, rng);
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd X = rng.normal_matrix(2, n);
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(n, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(t, X));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_mlp_forward)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
