#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace flowps {

// SplitMix64 mixing step; used to derive independent substream seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random generator.
//
// The engine is std::mt19937_64, whose output sequence is fully specified by
// the C++ standard. Uniform and normal variates are derived from raw engine
// output by fixed arithmetic (Box-Muller for normals) instead of the
// standard-library distributions, which are not bit-portable across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Uniform double in [0, 1).
  double uniform();
  // Uniform double in (0, 1].
  double uniform_pos();
  // Standard normal via Box-Muller (second variate of each pair is cached).
  double normal();

  Eigen::VectorXd normal_vector(int n);
  Eigen::MatrixXd normal_matrix(int rows, int cols);

  // Index k with probability weights[k] (weights must sum to ~1).
  int categorical(const Eigen::VectorXd& weights);

  // Raw engine output.
  std::uint64_t next_u64();

  // Independent generator derived from (seed, index).
  Rng substream(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace flowps
