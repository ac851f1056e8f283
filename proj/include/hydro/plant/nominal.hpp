#pragma once

#include "hydro/plant/simulator.hpp"

namespace hydro::plant {

struct NominalConfig {
  double setpoint = 1.0;      // target level for every tank, m (per-tank override below)
  std::vector<double> setpoints;  // optional, aligned with topology tanks
  double band = 0.08;         // hysteresis half-width for on/off pumps, m
  double kp = 1.2;            // proportional valve gain, 1/m
  double valve_bias = 0.5;    // valve opening at zero level error
  double low_cutoff = 0.05;   // dry-run protection: close when the source tank is this low
};

// Baseline regulator: on/off pumps with hysteresis around the level setpoint
// of the tank they fill, proportional trim for continuous valves, and a
// low-level cutoff protecting source tanks. Operates on measured sensor
// values only, so sensor attacks mislead it the same way they would a PLC.
class NominalController {
public:
  NominalController(const PlantTopology& topo, NominalConfig cfg = {});

  Vector control(const Vector& y_meas);
  void reset();

  double setpoint_for_tank(int tank_idx) const;

private:
  NominalConfig cfg_;
  int n_actuators_;
  std::vector<bool> pump_on_;
  // per actuator: level sensor of the tank it fills (-1 if none), level
  // sensor of the tank it drains (-1 if fed from source), fill tank index
  std::vector<int> fill_sensor_, drain_sensor_, fill_tank_;
  std::vector<bool> continuous_;
};

}  // namespace hydro::plant
