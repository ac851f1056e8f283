#include "hydro/plant/topology.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

// Topology file schema (JSON):
//   tanks:   [{id, area_m2, v_per_level_m3, level_min_m, level_max_m,
//              level_init_m, demand_m3s}]
//   pipes:   [{id, from, to, length_m, diameter_m, c_hw}]
//   pumps:   [{id, pipe, max_flow_m3s, kind: "onoff"|"continuous"}]
//   sensors: [{id, kind: "level"|"flow"|"pressure", target, noise_std}]
//   noise:   {process_std, gamma_mismatch}
// "from"/"to" reference tank ids, or the reserved words "source" (infinite
// supply) and "drain" (discharge out of the plant).

namespace hydro::plant {

using nlohmann::json;

PlantTopology PlantTopology::default_three_tank() {
  PlantTopology t;
  t.tanks = {
      {"raw", 2.0, 2.0, 0.0, 2.0, 1.0, 0.0},
      {"treat", 1.5, 1.5, 0.0, 2.0, 1.0, 0.0},
      {"dist", 1.0, 1.0, 0.0, 2.0, 1.0, 0.012},
  };
  t.pipes = {
      {"p_in", "source", "raw", 50.0, 0.15, 130.0},
      {"p_treat", "raw", "treat", 100.0, 0.20, 130.0},
      {"p_dist", "treat", "dist", 80.0, 0.15, 120.0},
  };
  t.actuators = {
      {"pump_in", "p_in", 0.030, false},
      {"pump_treat", "p_treat", 0.030, false},
      {"valve_dist", "p_dist", 0.025, true},
  };
  t.sensors = {
      {"lvl_raw", SensorKind::Level, "raw", 0.005},
      {"lvl_treat", SensorKind::Level, "treat", 0.005},
      {"lvl_dist", SensorKind::Level, "dist", 0.005},
      {"flow_in", SensorKind::Flow, "p_in", 2e-4},
      {"flow_treat", SensorKind::Flow, "p_treat", 2e-4},
      {"flow_dist", SensorKind::Flow, "p_dist", 2e-4},
      {"press_in", SensorKind::Pressure, "p_in", 2e-3},
      {"press_treat", SensorKind::Pressure, "p_treat", 2e-3},
      {"press_dist", SensorKind::Pressure, "p_dist", 2e-3},
  };
  t.noise = {0.002, 0.0};
  return t;
}

namespace {

SensorKind parse_kind(const std::string& s) {
  if (s == "level") return SensorKind::Level;
  if (s == "flow") return SensorKind::Flow;
  if (s == "pressure") return SensorKind::Pressure;
  throw std::invalid_argument("topology: unknown sensor kind '" + s + "'");
}

std::string kind_name(SensorKind k) {
  switch (k) {
    case SensorKind::Level: return "level";
    case SensorKind::Flow: return "flow";
    default: return "pressure";
  }
}

}  // namespace

PlantTopology PlantTopology::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open topology file " + path);
  json j;
  is >> j;
  PlantTopology t;
  for (const auto& jt : j.at("tanks")) {
    Tank tank;
    tank.id = jt.at("id").get<std::string>();
    tank.area = jt.at("area_m2").get<double>();
    tank.v_per_level = jt.value("v_per_level_m3", tank.area);
    tank.level_min = jt.value("level_min_m", 0.0);
    tank.level_max = jt.at("level_max_m").get<double>();
    tank.level_init = jt.value("level_init_m", 0.5 * (tank.level_min + tank.level_max));
    tank.demand = jt.value("demand_m3s", 0.0);
    t.tanks.push_back(tank);
  }
  for (const auto& jp : j.at("pipes")) {
    Pipe p;
    p.id = jp.at("id").get<std::string>();
    p.from = jp.at("from").get<std::string>();
    p.to = jp.at("to").get<std::string>();
    p.length = jp.at("length_m").get<double>();
    p.diameter = jp.at("diameter_m").get<double>();
    p.c_hw = jp.at("c_hw").get<double>();
    t.pipes.push_back(p);
  }
  for (const auto& ja : j.at("pumps")) {
    Actuator a;
    a.id = ja.at("id").get<std::string>();
    a.pipe = ja.at("pipe").get<std::string>();
    a.max_flow = ja.at("max_flow_m3s").get<double>();
    a.continuous = ja.value("kind", std::string("onoff")) == "continuous";
    t.actuators.push_back(a);
  }
  for (const auto& js : j.at("sensors")) {
    Sensor s;
    s.id = js.at("id").get<std::string>();
    s.kind = parse_kind(js.at("kind").get<std::string>());
    s.target = js.at("target").get<std::string>();
    s.noise_std = js.value("noise_std", 0.0);
    t.sensors.push_back(s);
  }
  if (j.contains("noise")) {
    t.noise.process_std = j["noise"].value("process_std", 0.002);
    t.noise.gamma_mismatch = j["noise"].value("gamma_mismatch", 0.0);
  }
  t.validate();
  return t;
}

void PlantTopology::to_json_file(const std::string& path) const {
  json j;
  for (const auto& tank : tanks)
    j["tanks"].push_back({{"id", tank.id},
                          {"area_m2", tank.area},
                          {"v_per_level_m3", tank.v_per_level},
                          {"level_min_m", tank.level_min},
                          {"level_max_m", tank.level_max},
                          {"level_init_m", tank.level_init},
                          {"demand_m3s", tank.demand}});
  for (const auto& p : pipes)
    j["pipes"].push_back({{"id", p.id},
                          {"from", p.from},
                          {"to", p.to},
                          {"length_m", p.length},
                          {"diameter_m", p.diameter},
                          {"c_hw", p.c_hw}});
  for (const auto& a : actuators)
    j["pumps"].push_back({{"id", a.id},
                          {"pipe", a.pipe},
                          {"max_flow_m3s", a.max_flow},
                          {"kind", a.continuous ? "continuous" : "onoff"}});
  for (const auto& s : sensors)
    j["sensors"].push_back({{"id", s.id},
                            {"kind", kind_name(s.kind)},
                            {"target", s.target},
                            {"noise_std", s.noise_std}});
  j["noise"] = {{"process_std", noise.process_std}, {"gamma_mismatch", noise.gamma_mismatch}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write topology file " + path);
  os << j.dump(2) << "\n";
}

void PlantTopology::validate() const {
  std::set<std::string> tank_ids, ids;
  for (const auto& tank : tanks) {
    if (!tank_ids.insert(tank.id).second)
      throw std::invalid_argument("topology: duplicate tank id '" + tank.id + "'");
    if (tank.area <= 0 || tank.v_per_level <= 0)
      throw std::invalid_argument("topology: tank '" + tank.id + "' has non-positive geometry");
    if (tank.level_max <= tank.level_min)
      throw std::invalid_argument("topology: tank '" + tank.id + "' has empty level range");
  }
  std::set<std::string> pipe_ids;
  auto is_tank = [&](const std::string& id) { return tank_ids.count(id) > 0; };
  for (const auto& p : pipes) {
    if (!pipe_ids.insert(p.id).second)
      throw std::invalid_argument("topology: duplicate pipe id '" + p.id + "'");
    if (p.from != "source" && !is_tank(p.from))
      throw std::invalid_argument("topology: pipe '" + p.id + "' references unknown tank '" +
                                  p.from + "'");
    if (p.to != "drain" && !is_tank(p.to))
      throw std::invalid_argument("topology: pipe '" + p.id + "' references unknown tank '" +
                                  p.to + "'");
    if (p.length <= 0 || p.diameter <= 0 || p.c_hw <= 0)
      throw std::invalid_argument("topology: pipe '" + p.id + "' has non-positive parameters");
  }
  std::set<std::string> driven;
  for (const auto& a : actuators) {
    if (!pipe_ids.count(a.pipe))
      throw std::invalid_argument("topology: pump '" + a.id + "' references unknown pipe '" +
                                  a.pipe + "'");
    if (!driven.insert(a.pipe).second)
      throw std::invalid_argument("topology: pipe '" + a.pipe + "' driven by more than one pump");
    if (a.max_flow <= 0)
      throw std::invalid_argument("topology: pump '" + a.id + "' has non-positive max flow");
  }
  for (const auto& p : pipes)
    if (!driven.count(p.id))
      throw std::invalid_argument("topology: pipe '" + p.id + "' has no pump or valve");
  for (const auto& s : sensors) {
    const bool ok = s.kind == SensorKind::Level ? is_tank(s.target)
                                                : pipe_ids.count(s.target) > 0;
    if (!ok)
      throw std::invalid_argument("topology: sensor '" + s.id + "' references unknown " +
                                  (s.kind == SensorKind::Level ? "tank '" : "pipe '") +
                                  s.target + "'");
    if (s.noise_std < 0)
      throw std::invalid_argument("topology: sensor '" + s.id + "' has negative noise std");
  }
  if (noise.gamma_mismatch < 0 || noise.gamma_mismatch > 0.5)
    throw std::invalid_argument("topology: gamma_mismatch must lie in [0, 0.5]");
}

int PlantTopology::tank_index(const std::string& id) const {
  for (std::size_t i = 0; i < tanks.size(); ++i)
    if (tanks[i].id == id) return static_cast<int>(i);
  throw std::invalid_argument("topology: unknown tank '" + id + "'");
}

int PlantTopology::pipe_index(const std::string& id) const {
  for (std::size_t i = 0; i < pipes.size(); ++i)
    if (pipes[i].id == id) return static_cast<int>(i);
  throw std::invalid_argument("topology: unknown pipe '" + id + "'");
}

int PlantTopology::sensor_index(const std::string& id) const {
  for (std::size_t i = 0; i < sensors.size(); ++i)
    if (sensors[i].id == id) return static_cast<int>(i);
  throw std::invalid_argument("topology: unknown sensor '" + id + "'");
}

std::vector<MassBalance> PlantTopology::mass_balances() const {
  std::vector<MassBalance> out;
  for (const auto& tank : tanks) {
    MassBalance mb;
    mb.v_per_level = tank.v_per_level;
    mb.unmetered_outflow = tank.demand;
    bool covered = true;
    for (std::size_t s = 0; s < sensors.size(); ++s)
      if (sensors[s].kind == SensorKind::Level && sensors[s].target == tank.id)
        mb.level_sensor = static_cast<int>(s);
    if (mb.level_sensor < 0) continue;
    for (const auto& p : pipes) {
      if (p.from != tank.id && p.to != tank.id) continue;
      int flow_sensor = -1;
      for (std::size_t s = 0; s < sensors.size(); ++s)
        if (sensors[s].kind == SensorKind::Flow && sensors[s].target == p.id)
          flow_sensor = static_cast<int>(s);
      if (flow_sensor < 0) {
        covered = false;  // an unmetered pipe makes the balance unusable
        break;
      }
      (p.to == tank.id ? mb.inflow_sensors : mb.outflow_sensors).push_back(flow_sensor);
    }
    if (covered) out.push_back(mb);
  }
  return out;
}

std::vector<PipeConstraint> PlantTopology::pipe_constraints() const {
  std::vector<PipeConstraint> out;
  for (const auto& p : pipes) {
    PipeConstraint pc;
    pc.length = p.length;
    pc.diameter = p.diameter;
    pc.c_hw = p.c_hw;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      if (sensors[s].target != p.id) continue;
      if (sensors[s].kind == SensorKind::Flow) pc.flow_sensor = static_cast<int>(s);
      if (sensors[s].kind == SensorKind::Pressure) pc.pressure_sensor = static_cast<int>(s);
    }
    if (pc.flow_sensor >= 0 && pc.pressure_sensor >= 0) out.push_back(pc);
  }
  return out;
}

std::vector<std::string> PlantTopology::sensor_ids() const {
  std::vector<std::string> out;
  for (const auto& s : sensors) out.push_back(s.id);
  return out;
}

std::vector<std::string> PlantTopology::actuator_ids() const {
  std::vector<std::string> out;
  for (const auto& a : actuators) out.push_back(a.id);
  return out;
}

std::vector<double> PlantTopology::sensor_noise() const {
  std::vector<double> out;
  for (const auto& s : sensors) out.push_back(s.noise_std);
  return out;
}

}  // namespace hydro::plant
