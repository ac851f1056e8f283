#pragma once

#include <cstdint>
#include <vector>

#include "hydro/nn/tensor.hpp"

namespace hydro::ade {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Maximum mean discrepancy with a Gaussian RBF kernel
// k(a, b) = exp(-|a - b|^2 / (2 sigma_k^2)).
// The biased estimator averages all pairs including self-pairs; the unbiased
// one excludes them and therefore needs at least two samples per set.
// ---------------------------------------------------------------------------

enum class MmdEstimator { Biased, Unbiased };

double mmd2(const std::vector<Vector>& a, const std::vector<Vector>& b, double bandwidth,
            MmdEstimator estimator);

// d MMD^2_biased / d a_i and / d b_j, for the training regularizer
struct MmdGrads {
  std::vector<Vector> d_a, d_b;
};

MmdGrads mmd2_biased_backward(const std::vector<Vector>& a, const std::vector<Vector>& b,
                              double bandwidth);

// median of pairwise Euclidean distances over the pooled samples (the
// standard bandwidth heuristic), floored at 1e-9
double median_bandwidth(const std::vector<Vector>& pooled);

// (1 - alpha) quantile of the unbiased MMD^2 between a random test_batch-size
// subset of the reference and the remainder, over B label permutations.
// Deterministic given seed. bandwidth 0 means the median heuristic over the
// reference. Also exposes the sorted permutation statistics for p-values.
double permutation_threshold(const std::vector<Vector>& reference, int b_perms, double alpha,
                             std::uint64_t seed, int test_batch = 8, double bandwidth = 0.0,
                             std::vector<double>* null_stats = nullptr);

}  // namespace hydro::ade
