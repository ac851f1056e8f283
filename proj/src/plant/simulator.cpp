#include "hydro/plant/simulator.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::plant {

Simulator::Simulator(PlantTopology topo, std::uint64_t seed)
    : topo_(std::move(topo)),
      proc_rng_(derive_seed(seed, 0x9c0ce55)),
      meas_rng_(derive_seed(seed, 0x3ea5)) {
  topo_.validate();
  const auto n_tanks = topo_.tanks.size();
  const auto n_pipes = topo_.pipes.size();
  st_.levels.resize(static_cast<Eigen::Index>(n_tanks));
  for (std::size_t i = 0; i < n_tanks; ++i) st_.levels[static_cast<Eigen::Index>(i)] = topo_.tanks[i].level_init;
  st_.flows = Vector::Zero(static_cast<Eigen::Index>(n_pipes));
  st_.pressures = Vector::Zero(static_cast<Eigen::Index>(n_pipes));
  st_.saturated.assign(n_tanks, false);
  for (std::size_t i = 0; i < n_tanks; ++i)
    initial_volume_ += topo_.tanks[i].level_init * topo_.tanks[i].area;
  noise_scale_ = std::sqrt(1.0 + topo_.noise.gamma_mismatch);

  pipe_actuator_.assign(n_pipes, -1);
  for (std::size_t a = 0; a < topo_.actuators.size(); ++a)
    pipe_actuator_[static_cast<std::size_t>(topo_.pipe_index(topo_.actuators[a].pipe))] =
        static_cast<int>(a);
  pipe_from_.assign(n_pipes, -1);
  pipe_to_.assign(n_pipes, -1);
  for (std::size_t p = 0; p < n_pipes; ++p) {
    if (topo_.pipes[p].from != "source") pipe_from_[p] = topo_.tank_index(topo_.pipes[p].from);
    if (topo_.pipes[p].to != "drain") pipe_to_[p] = topo_.tank_index(topo_.pipes[p].to);
  }
}

void Simulator::step(const Vector& u, double dt) {
  if (u.size() != topo_.n_actuators())
    throw std::invalid_argument("Simulator::step: command has " + std::to_string(u.size()) +
                                " entries, plant has " + std::to_string(topo_.n_actuators()) +
                                " actuators");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i]))
      throw std::invalid_argument("Simulator::step: non-finite command for actuator '" +
                                  topo_.actuators[static_cast<std::size_t>(i)].id + "'");
  if (dt <= 0) throw std::invalid_argument("Simulator::step: dt must be positive");
  std::fill(st_.saturated.begin(), st_.saturated.end(), false);
  const double sub_dt = dt / kSubsteps;
  for (int s = 0; s < kSubsteps; ++s) substep(u, sub_dt);
  st_.t += dt;
}

void Simulator::substep(const Vector& u, double sub_dt) {
  const auto n_pipes = topo_.pipes.size();
  const auto n_tanks = topo_.tanks.size();

  // commanded flows
  std::vector<double> q(n_pipes, 0.0);
  for (std::size_t p = 0; p < n_pipes; ++p) {
    const auto& act = topo_.actuators[static_cast<std::size_t>(pipe_actuator_[p])];
    const double cmd = std::clamp(u[pipe_actuator_[p]], 0.0, 1.0);
    q[p] = act.continuous ? cmd * act.max_flow : (cmd >= 0.5 ? act.max_flow : 0.0);
  }

  // scale outflows of tanks that cannot supply them this substep; one pass
  // using current levels only, so the result is order-independent
  std::vector<double> demand(n_tanks);
  for (std::size_t k = 0; k < n_tanks; ++k) demand[k] = topo_.tanks[k].demand;
  for (std::size_t k = 0; k < n_tanks; ++k) {
    double out = demand[k];
    for (std::size_t p = 0; p < n_pipes; ++p)
      if (pipe_from_[p] == static_cast<int>(k)) out += q[p];
    if (out <= 0) continue;
    const auto& tank = topo_.tanks[k];
    const double available = (st_.levels[static_cast<Eigen::Index>(k)] - tank.level_min) * tank.area;
    const double wanted = out * sub_dt;
    if (wanted > available) {
      const double scale = available > 0 ? available / wanted : 0.0;
      for (std::size_t p = 0; p < n_pipes; ++p)
        if (pipe_from_[p] == static_cast<int>(k)) q[p] *= scale;
      demand[k] *= scale;
      st_.saturated[k] = true;
    }
  }

  // volume balance per tank
  for (std::size_t k = 0; k < n_tanks; ++k) {
    const auto& tank = topo_.tanks[k];
    double net = -demand[k];
    for (std::size_t p = 0; p < n_pipes; ++p) {
      if (pipe_to_[p] == static_cast<int>(k)) net += q[p];
      if (pipe_from_[p] == static_cast<int>(k)) net -= q[p];
    }
    double level = st_.levels[static_cast<Eigen::Index>(k)] + net * sub_dt / tank.area;
    if (topo_.noise.process_std > 0)
      level += topo_.noise.process_std * noise_scale_ * std::sqrt(sub_dt) * proc_rng_.normal();
    if (level > tank.level_max) {
      st_.spilled_total += (level - tank.level_max) * tank.area;
      level = tank.level_max;
      st_.saturated[k] = true;
    } else if (level < tank.level_min) {
      // only reachable through process noise; clamp and account the deficit
      st_.spilled_total -= (tank.level_min - level) * tank.area;
      level = tank.level_min;
      st_.saturated[k] = true;
    }
    st_.levels[static_cast<Eigen::Index>(k)] = level;
    st_.outflow_total += demand[k] * sub_dt;
  }

  // boundary accounting and instantaneous pipe observables
  for (std::size_t p = 0; p < n_pipes; ++p) {
    if (pipe_from_[p] < 0) st_.inflow_total += q[p] * sub_dt;
    if (pipe_to_[p] < 0) st_.outflow_total += q[p] * sub_dt;
    st_.flows[static_cast<Eigen::Index>(p)] = q[p];
    st_.pressures[static_cast<Eigen::Index>(p)] =
        hazen_williams_dp(q[p], topo_.pipes[p].length, topo_.pipes[p].diameter,
                          topo_.pipes[p].c_hw);
  }
}

Vector Simulator::measure_clean() const {
  Vector y(topo_.n_sensors());
  for (int s = 0; s < topo_.n_sensors(); ++s) {
    const auto& sensor = topo_.sensors[static_cast<std::size_t>(s)];
    switch (sensor.kind) {
      case SensorKind::Level:
        y[s] = st_.levels[topo_.tank_index(sensor.target)];
        break;
      case SensorKind::Flow:
        y[s] = st_.flows[topo_.pipe_index(sensor.target)];
        break;
      case SensorKind::Pressure:
        y[s] = st_.pressures[topo_.pipe_index(sensor.target)];
        break;
    }
  }
  return y;
}

Vector Simulator::measure() {
  Vector y = measure_clean();
  for (int s = 0; s < topo_.n_sensors(); ++s) {
    const double std = topo_.sensors[static_cast<std::size_t>(s)].noise_std;
    if (std > 0) y[s] += std * meas_rng_.normal();
  }
  return y;
}

double Simulator::volume_balance_error() const {
  double tanks = 0.0;
  for (std::size_t k = 0; k < topo_.tanks.size(); ++k)
    tanks += st_.levels[static_cast<Eigen::Index>(k)] * topo_.tanks[k].area;
  return std::abs(tanks + st_.outflow_total + st_.spilled_total - st_.inflow_total -
                  initial_volume_);
}

}  // namespace hydro::plant
