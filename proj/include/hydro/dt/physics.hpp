#pragma once

#include "hydro/nn/tensor.hpp"
#include "hydro/plant/topology.hpp"

namespace hydro::dt {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Physics regularizers over a predicted sensor sequence [S, d_y] in plant
// units. Mass balance uses a backward difference on each metered tank's
// level, so it covers rows 1..S-1; the pipe term scores every row against
// the Hazen-Williams pressure drop. Both are mean squared residuals.
// ---------------------------------------------------------------------------

struct PhysicsTerms {
  double l_mass = 0.0;
  double l_pipe = 0.0;

  double total(double lambda_pipe) const { return l_mass + lambda_pipe * l_pipe; }
};

PhysicsTerms physics_residuals(const Matrix& y_seq, const plant::PlantTopology& topo, double dt);

// Gradient of l_mass + lambda_pipe * l_pipe w.r.t. every entry of y_seq.
Matrix physics_residuals_backward(const Matrix& y_seq, const plant::PlantTopology& topo,
                                  double dt, double lambda_pipe);

// Uncertainty-adaptive weight alpha0 * (1 + tanh(trace / theta)); monotone in
// the trace, equal to alpha0 at zero and saturating below 2*alpha0.
double adaptive_physics_weight(double sigma_trace, double alpha0, double theta_thresh);

}  // namespace hydro::dt
