#pragma once

#include "hydro/dt/model.hpp"

namespace hydro::dt {

// ---------------------------------------------------------------------------
// Local linearization of the one-step prediction, in plant units: A is the
// sensitivity of the prediction to the newest sensor frame, B the sensitivity
// to the newest control frame. Computed with one backward pass per output
// channel, then rescaled through the normalization chain.
// ---------------------------------------------------------------------------

struct Linearization {
  Matrix a;  // d_y x d_y
  Matrix b;  // d_y x d_u
};

// `context` is normalized (predict's convention); u_prev in actuator units is
// written into the newest frame's control channels before differentiating.
Linearization jacobians(const Matrix& context, const Vector& u_prev, const ModelParams& p);

struct LipschitzEstimate {
  double l_f = 0.0;                 // max retained sample norm
  std::vector<double> sample_norms;  // per-context spectral norms
  double quantile = 1.0;            // retention quantile (1 = max)
};

// Max over contexts of the spectral norm of the full input-output Jacobian
// (plant units on both sides), each norm from 20 power iterations.
LipschitzEstimate estimate_lipschitz(const ModelParams& p, const std::vector<Matrix>& contexts);

}  // namespace hydro::dt
