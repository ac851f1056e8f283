#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace hydro::plant {

// Hazen-Williams head loss over a pipe, SI form. Extended to negative flow
// as an odd function so downstream code can differentiate through it.
inline constexpr double kHazenWilliamsCoeff = 10.67;

inline double hazen_williams_dp(double q, double length, double diameter, double c_hw) {
  const double mag = std::pow(std::abs(q), 1.852);
  const double dp = kHazenWilliamsCoeff * length * mag /
                    (std::pow(c_hw, 1.852) * std::pow(diameter, 4.87));
  return q < 0 ? -dp : dp;
}

inline double hazen_williams_dp_dq(double q, double length, double diameter, double c_hw) {
  return kHazenWilliamsCoeff * length * 1.852 * std::pow(std::abs(q), 0.852) /
         (std::pow(c_hw, 1.852) * std::pow(diameter, 4.87));
}

struct Tank {
  std::string id;
  double area = 1.0;          // cross section, m^2
  double v_per_level = 1.0;   // tank volume per metre of level (= area for a prism), m^3/m
  double level_min = 0.0;     // physical geometry, m
  double level_max = 2.0;
  double level_init = 1.0;
  double demand = 0.0;        // fixed offtake drawn from this tank, m^3/s
};

struct Pipe {
  std::string id;
  std::string from;  // tank id or "source"
  std::string to;    // tank id or "drain"
  double length = 100.0;   // m
  double diameter = 0.2;   // m
  double c_hw = 130.0;     // Hazen-Williams roughness coefficient
};

// Every pipe is driven by exactly one actuator. On/off pumps interpret the
// command as a threshold at 0.5; continuous valves scale max_flow linearly.
struct Actuator {
  std::string id;
  std::string pipe;
  double max_flow = 0.03;  // m^3/s
  bool continuous = false;
};

enum class SensorKind { Level, Flow, Pressure };

struct Sensor {
  std::string id;
  SensorKind kind = SensorKind::Level;
  std::string target;  // tank id for Level, pipe id for Flow/Pressure
  double noise_std = 0.0;
};

struct NoiseConfig {
  double process_std = 0.002;    // level disturbance, m per sqrt(s)
  double gamma_mismatch = 0.0;   // scales process noise variance by (1 + gamma)
};

// Sensor-level mass balance constraint for one tank: the indices refer to
// positions in the measurement vector. Only tanks whose inflows and outflows
// are all metered get an entry.
struct MassBalance {
  int level_sensor = -1;
  std::vector<int> inflow_sensors;
  std::vector<int> outflow_sensors;
  double unmetered_outflow = 0.0;  // fixed demand not seen by any flow sensor
  double v_per_level = 1.0;
};

// Pipe constraint linking a flow sensor to a pressure sensor.
struct PipeConstraint {
  int flow_sensor = -1;
  int pressure_sensor = -1;
  double length = 0.0, diameter = 0.0, c_hw = 0.0;
};

struct PlantTopology {
  std::vector<Tank> tanks;
  std::vector<Pipe> pipes;
  std::vector<Actuator> actuators;
  std::vector<Sensor> sensors;
  NoiseConfig noise;

  static PlantTopology default_three_tank();
  static PlantTopology from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;

  // throws std::invalid_argument naming the first broken reference
  void validate() const;

  int n_sensors() const { return static_cast<int>(sensors.size()); }
  int n_actuators() const { return static_cast<int>(actuators.size()); }

  int tank_index(const std::string& id) const;
  int pipe_index(const std::string& id) const;
  int sensor_index(const std::string& id) const;

  std::vector<MassBalance> mass_balances() const;
  std::vector<PipeConstraint> pipe_constraints() const;

  std::vector<std::string> sensor_ids() const;
  std::vector<std::string> actuator_ids() const;
  // per-sensor measurement noise std, in sensor units
  std::vector<double> sensor_noise() const;
};

}  // namespace hydro::plant
