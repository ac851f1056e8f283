#pragma once

#include "hydro/nn/tensor.hpp"

namespace hydro::plant {

using nn::Matrix;

// Twin-validation acceptance bounds for the two full-scale benchmark
// replicas this plant family is calibrated against (normalized RMSE of
// one-step predictions on held-out normal operation).
inline constexpr double kNrmseBoundSwat = 0.041;
inline constexpr double kNrmseBoundWadi = 0.053;

struct ChannelValidation {
  double nrmse = 0.0;          // rmse / (max - min) of the reference channel
  bool constant_reference = false;  // range below numerical floor; nrmse undefined
};

// Per-channel NRMSE of `candidate` against `reference` (same shape,
// rows = samples, cols = channels). Channels whose reference range is below
// the floor are flagged instead of dividing by ~0.
std::vector<ChannelValidation> validate_steady_state(const Matrix& reference,
                                                     const Matrix& candidate);

}  // namespace hydro::plant
