#include "hydro/dt/physics.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::dt {

namespace {

void check_seq(const Matrix& y_seq, const plant::PlantTopology& topo, double dt) {
  if (y_seq.rows() < 2)
    throw std::invalid_argument("physics_residuals: need at least two prediction rows");
  if (y_seq.cols() != topo.n_sensors())
    throw std::invalid_argument("physics_residuals: column count must match sensor count");
  if (!(dt > 0.0)) throw std::invalid_argument("physics_residuals: dt must be positive");
}

// net metered flow into the tank minus storage change, m^3/s
double mass_residual(const Matrix& y, Eigen::Index t, const plant::MassBalance& mb, double dt) {
  double net = -mb.unmetered_outflow;
  for (int i : mb.inflow_sensors) net += y(t, i);
  for (int j : mb.outflow_sensors) net -= y(t, j);
  double dlevel = (y(t, mb.level_sensor) - y(t - 1, mb.level_sensor)) / dt;
  return net - mb.v_per_level * dlevel;
}

double pipe_residual(const Matrix& y, Eigen::Index t, const plant::PipeConstraint& pc) {
  return y(t, pc.pressure_sensor) -
         plant::hazen_williams_dp(y(t, pc.flow_sensor), pc.length, pc.diameter, pc.c_hw);
}

}  // namespace

PhysicsTerms physics_residuals(const Matrix& y_seq, const plant::PlantTopology& topo, double dt) {
  check_seq(y_seq, topo, dt);

  PhysicsTerms out;
  const auto balances = topo.mass_balances();
  const auto pipes = topo.pipe_constraints();
  const Eigen::Index s = y_seq.rows();

  for (Eigen::Index t = 1; t < s; ++t) {
    double sq = 0.0;
    for (const plant::MassBalance& mb : balances) {
      double r = mass_residual(y_seq, t, mb, dt);
      sq += r * r;
    }
    out.l_mass += sq;
  }
  out.l_mass /= static_cast<double>(s - 1);

  if (!pipes.empty()) {
    for (Eigen::Index t = 0; t < s; ++t) {
      double sq = 0.0;
      for (const plant::PipeConstraint& pc : pipes) {
        double r = pipe_residual(y_seq, t, pc);
        sq += r * r;
      }
      out.l_pipe += sq;
    }
    out.l_pipe /= static_cast<double>(s);
  }
  return out;
}

Matrix physics_residuals_backward(const Matrix& y_seq, const plant::PlantTopology& topo,
                                  double dt, double lambda_pipe) {
  check_seq(y_seq, topo, dt);

  Matrix grad = Matrix::Zero(y_seq.rows(), y_seq.cols());
  const auto balances = topo.mass_balances();
  const auto pipes = topo.pipe_constraints();
  const Eigen::Index s = y_seq.rows();

  const double mass_scale = 2.0 / static_cast<double>(s - 1);
  for (Eigen::Index t = 1; t < s; ++t) {
    for (const plant::MassBalance& mb : balances) {
      double g = mass_scale * mass_residual(y_seq, t, mb, dt);
      for (int i : mb.inflow_sensors) grad(t, i) += g;
      for (int j : mb.outflow_sensors) grad(t, j) -= g;
      double dl = g * mb.v_per_level / dt;
      grad(t, mb.level_sensor) -= dl;
      grad(t - 1, mb.level_sensor) += dl;
    }
  }

  const double pipe_scale = 2.0 * lambda_pipe / static_cast<double>(s);
  for (Eigen::Index t = 0; t < s; ++t) {
    for (const plant::PipeConstraint& pc : pipes) {
      double g = pipe_scale * pipe_residual(y_seq, t, pc);
      grad(t, pc.pressure_sensor) += g;
      grad(t, pc.flow_sensor) -=
          g * plant::hazen_williams_dp_dq(y_seq(t, pc.flow_sensor), pc.length, pc.diameter,
                                          pc.c_hw);
    }
  }
  return grad;
}

double adaptive_physics_weight(double sigma_trace, double alpha0, double theta_thresh) {
  if (!(theta_thresh > 0.0))
    throw std::invalid_argument("adaptive_physics_weight: theta_thresh must be positive");
  return alpha0 * (1.0 + std::tanh(sigma_trace / theta_thresh));
}

}  // namespace hydro::dt
