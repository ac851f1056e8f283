#pragma once

#include <cstdint>
#include <vector>

#include "hydro/core/rng.hpp"
#include "hydro/nn/tensor.hpp"
#include "hydro/plant/topology.hpp"

namespace hydro::plant {

using nn::Vector;

struct PlantState {
  double t = 0.0;
  Vector levels;     // per tank, m
  Vector flows;      // per pipe, m^3/s (realized, not commanded)
  Vector pressures;  // per pipe, Hazen-Williams head loss
  std::vector<bool> saturated;  // per tank: clamped at either bound this step
  double inflow_total = 0.0;    // cumulative volume from "source" pipes
  double outflow_total = 0.0;   // cumulative volume to "drain" pipes and demand
  double spilled_total = 0.0;   // cumulative overflow lost at tank tops
};

// Explicit-Euler plant integrator. Each 1 s sample step is split into
// kSubsteps internal Euler steps; realized flows respect tank emptiness
// (outflows scale down rather than driving a level negative) and levels
// clamp at the physical geometry with a saturation flag. Identical seeds
// reproduce trajectories bit for bit.
class Simulator {
public:
  static constexpr int kSubsteps = 10;

  Simulator(PlantTopology topo, std::uint64_t seed);

  const PlantTopology& topology() const { return topo_; }
  const PlantState& state() const { return st_; }

  // advance one sample interval under actuator command u (one entry per
  // actuator, interpreted in [0, 1])
  void step(const Vector& u, double dt = 1.0);

  // noisy sensor snapshot (advances the measurement noise stream)
  Vector measure();
  // noiseless snapshot of the same sensor map
  Vector measure_clean() const;

  // |sum tank volumes + outflows + spill - inflows - initial volume|;
  // stays below 1e-9 * horizon in noiseless runs
  double volume_balance_error() const;

private:
  void substep(const Vector& u, double sub_dt);

  PlantTopology topo_;
  PlantState st_;
  Rng proc_rng_, meas_rng_;
  double initial_volume_ = 0.0;
  double noise_scale_ = 1.0;  // sqrt(1 + gamma_mismatch)
  std::vector<int> pipe_actuator_;               // per pipe: actuator index
  std::vector<int> pipe_from_, pipe_to_;         // per pipe: tank index or -1
};

}  // namespace hydro::plant
