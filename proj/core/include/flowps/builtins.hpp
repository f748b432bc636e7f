#pragma once

#include <string>

#include "flowps/gmm.hpp"

namespace flowps {

// Two interleaved half-circle arcs, 6 isotropic components each.
GaussianMixture two_moons_gmm();

// Two concentric circles (radius 1 and 2), 8 isotropic components each.
GaussianMixture rings_gmm();

// Single zero-mean Gaussian over 16x16 pixels (row-major, d = 256) with the
// squared-exponential covariance K_pq = exp(-||p - q||^2 / (2 l^2)), l = 2
// pixels. Near-degenerate: smallest eigenvalues reach ~1e-13.
GaussianMixture smooth_image_16();

// Three well-separated unit-covariance components, equal weights; the
// training target for the learned velocity field.
GaussianMixture tri_gauss_2d();

// Lookup by name (the names accepted in config files); throws ConfigError
// for unknown names.
GaussianMixture builtin_prior(const std::string& name);

}  // namespace flowps
