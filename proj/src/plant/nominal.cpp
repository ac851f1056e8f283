#include "hydro/plant/nominal.hpp"

#include <stdexcept>

namespace hydro::plant {

NominalController::NominalController(const PlantTopology& topo, NominalConfig cfg)
    : cfg_(std::move(cfg)), n_actuators_(topo.n_actuators()) {
  if (!cfg_.setpoints.empty() && cfg_.setpoints.size() != topo.tanks.size())
    throw std::invalid_argument("NominalController: setpoints size " +
                                std::to_string(cfg_.setpoints.size()) + " != tank count " +
                                std::to_string(topo.tanks.size()));
  auto level_sensor_for = [&](const std::string& tank_id) {
    for (std::size_t s = 0; s < topo.sensors.size(); ++s)
      if (topo.sensors[s].kind == SensorKind::Level && topo.sensors[s].target == tank_id)
        return static_cast<int>(s);
    return -1;
  };
  for (const auto& act : topo.actuators) {
    const auto& pipe = topo.pipes[static_cast<std::size_t>(topo.pipe_index(act.pipe))];
    fill_sensor_.push_back(pipe.to == "drain" ? -1 : level_sensor_for(pipe.to));
    drain_sensor_.push_back(pipe.from == "source" ? -1 : level_sensor_for(pipe.from));
    fill_tank_.push_back(pipe.to == "drain" ? -1 : topo.tank_index(pipe.to));
    continuous_.push_back(act.continuous);
    if (pipe.to != "drain" && fill_sensor_.back() < 0)
      throw std::invalid_argument("NominalController: tank '" + pipe.to +
                                  "' filled by '" + act.id + "' has no level sensor");
  }
  pump_on_.assign(static_cast<std::size_t>(n_actuators_), false);
}

double NominalController::setpoint_for_tank(int tank_idx) const {
  if (tank_idx < 0) return cfg_.setpoint;
  if (!cfg_.setpoints.empty()) return cfg_.setpoints[static_cast<std::size_t>(tank_idx)];
  return cfg_.setpoint;
}

Vector NominalController::control(const Vector& y_meas) {
  Vector u(n_actuators_);
  for (int a = 0; a < n_actuators_; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    const double sp = setpoint_for_tank(fill_tank_[ai]);
    const double level = fill_sensor_[ai] >= 0 ? y_meas[fill_sensor_[ai]] : sp;
    if (continuous_[ai]) {
      u[a] = std::clamp(cfg_.valve_bias + cfg_.kp * (sp - level), 0.0, 1.0);
    } else {
      if (level < sp - cfg_.band) pump_on_[ai] = true;
      else if (level > sp + cfg_.band) pump_on_[ai] = false;
      u[a] = pump_on_[ai] ? 1.0 : 0.0;
    }
    // never draw a source tank dry
    if (drain_sensor_[ai] >= 0 && y_meas[drain_sensor_[ai]] < cfg_.low_cutoff) {
      u[a] = 0.0;
      pump_on_[ai] = false;
    }
  }
  return u;
}

void NominalController::reset() {
  std::fill(pump_on_.begin(), pump_on_.end(), false);
}

}  // namespace hydro::plant
