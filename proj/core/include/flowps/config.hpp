#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowps/gmm.hpp"
#include "flowps/mlp.hpp"
#include "flowps/solvers.hpp"

namespace flowps {

// Flat "key = value" text with [section] headers; keys are stored as
// "section.key". '#' starts a comment.
using KvMap = std::map<std::string, std::string>;

KvMap parse_config_text(const std::string& text);
KvMap parse_config_file(const std::string& path);

// Deterministic canonical form: sections and keys sorted, one key per line.
std::string serialize_config(const KvMap& kv);

struct TaskSpec {
  enum class Kind { none, sr_avgpool, deblur_gauss, inpaint, dense };
  Kind kind = Kind::none;
  int factor = 2;            // sr_avgpool
  int kernel_size = 5;       // deblur_gauss
  double kernel_std = 1.0;   // deblur_gauss
  std::vector<int> mask;     // inpaint: kept flat indices
  std::string matrix_file;   // dense
  double sigma_n = 0.03;

  std::string name() const;
};

// Builds the measurement operator for a given signal dimension. Image tasks
// (sr_avgpool, deblur_gauss) require dim to be a perfect square.
std::shared_ptr<LinearOperator> make_task_operator(const TaskSpec& task,
                                                   int dim);

struct SolverSpec {
  enum class Name { flowdps, dps_velocity, flowchef, oracle, unconditional };
  Name name = Name::flowdps;
  SolverConfig config{};

  std::string name_string() const;
};

struct TrainSpec {
  TrainConfig config{};
  MlpConfig mlp{};
  std::string model_out = "model.bin";
};

struct RunSpec {
  std::uint64_t seed = 0;
  int runs = 1;
  int samples = 1000;  // sample-count for the `sample` subcommand
  std::string out_dir = "out";
  bool write_images = true;
};

struct ExperimentConfig {
  std::string prior_name;  // builtin name, empty when given inline
  GaussianMixture prior;
  TaskSpec task;
  SolverSpec solver;
  TrainSpec train;
  RunSpec run;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_kv(const KvMap& kv);

  // Fully explicit key set (all defaults resolved); from_kv(snapshot()) is
  // an equal configuration, and serialize_config(snapshot()) is the
  // config.snapshot file written next to run outputs.
  KvMap snapshot() const;
};

// Deterministic full-precision number formatting used across config
// snapshots and CSV output ("%.17g", with a trailing integer kept short).
std::string format_double(double v);

}  // namespace flowps
