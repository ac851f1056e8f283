#include "hydro/attack/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

namespace hydro::attack {

using nlohmann::json;

const char* class_name(AttackClass cls) {
  switch (cls) {
    case AttackClass::None: return "none";
    case AttackClass::Single: return "single";
    default: return "multi";
  }
}

AttackClass class_from_name(const std::string& name) {
  if (name == "none") return AttackClass::None;
  if (name == "single") return AttackClass::Single;
  if (name == "multi") return AttackClass::Multi;
  throw std::invalid_argument("unknown attack class '" + name + "'");
}

namespace {

const char* profile_name(ProfileKind p) {
  switch (p) {
    case ProfileKind::Bias: return "bias";
    case ProfileKind::Ramp: return "ramp";
    default: return "periodic";
  }
}

ProfileKind profile_from_name(const std::string& name) {
  if (name == "bias") return ProfileKind::Bias;
  if (name == "ramp") return ProfileKind::Ramp;
  if (name == "periodic") return ProfileKind::Periodic;
  throw std::invalid_argument("unknown attack profile '" + name + "'");
}

}  // namespace

bool AttackScenario::active(double t) const {
  for (const auto& tgt : targets)
    if (t >= tgt.start && t < tgt.start + tgt.duration) return true;
  return false;
}

int subsystem_of_sensor(const plant::PlantTopology& topo, const std::string& sensor_id) {
  const auto& sensor = topo.sensors[static_cast<std::size_t>(topo.sensor_index(sensor_id))];
  if (sensor.kind == plant::SensorKind::Level) return topo.tank_index(sensor.target);
  const auto& pipe = topo.pipes[static_cast<std::size_t>(topo.pipe_index(sensor.target))];
  if (pipe.to != "drain") return topo.tank_index(pipe.to);
  return topo.tank_index(pipe.from);
}

void AttackScenario::validate(const plant::PlantTopology& topo) const {
  if (cls == AttackClass::None) {
    if (!targets.empty())
      throw std::invalid_argument("attack scenario: class 'none' cannot carry targets");
    return;
  }
  if (targets.empty())
    throw std::invalid_argument("attack scenario: no targets declared");
  std::set<int> subsystems;
  for (const auto& tgt : targets) {
    subsystems.insert(subsystem_of_sensor(topo, tgt.sensor));  // throws on unknown sensor
    if (tgt.duration <= 0)
      throw std::invalid_argument("attack scenario: target on '" + tgt.sensor +
                                  "' has non-positive duration");
    if (std::abs(tgt.magnitude) > tgt.magnitude_cap)
      throw std::invalid_argument("attack scenario: magnitude " +
                                  std::to_string(tgt.magnitude) + " on '" + tgt.sensor +
                                  "' exceeds the cap " + std::to_string(tgt.magnitude_cap));
    if (tgt.profile == ProfileKind::Periodic && tgt.period <= 0)
      throw std::invalid_argument("attack scenario: periodic target on '" + tgt.sensor +
                                  "' needs a positive period");
    if (tgt.start < start - 1e-9 || tgt.start + tgt.duration > end() + 1e-9)
      throw std::invalid_argument("attack scenario: target window on '" + tgt.sensor +
                                  "' leaves the scenario envelope");
  }
  if (cls == AttackClass::Single) {
    if (subsystems.size() != 1)
      throw std::invalid_argument("attack scenario: single-stage attack touches " +
                                  std::to_string(subsystems.size()) + " subsystems");
    if (duration < kSingleMinDuration || duration > kSingleMaxDuration)
      throw std::invalid_argument("attack scenario: single-stage duration " +
                                  std::to_string(duration) + " outside [" +
                                  std::to_string(kSingleMinDuration) + ", " +
                                  std::to_string(kSingleMaxDuration) + "]");
  } else {
    if (subsystems.size() < 2)
      throw std::invalid_argument("attack scenario: multi-stage attack needs >= 2 subsystems");
    if (duration < kMultiMinDuration || duration > kMultiMaxDuration)
      throw std::invalid_argument("attack scenario: multi-stage duration " +
                                  std::to_string(duration) + " outside [" +
                                  std::to_string(kMultiMinDuration) + ", " +
                                  std::to_string(kMultiMaxDuration) + "]");
  }
}

AttackScenario AttackScenario::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open scenario file " + path);
  json j;
  is >> j;
  AttackScenario s;
  s.cls = class_from_name(j.at("class").get<std::string>());
  s.start = j.at("start_s").get<double>();
  s.duration = j.at("duration_s").get<double>();
  s.seed = j.value("seed", 0ULL);
  for (const auto& jt : j.at("targets")) {
    AttackTarget t;
    t.sensor = jt.at("sensor").get<std::string>();
    t.profile = profile_from_name(jt.at("profile").get<std::string>());
    t.magnitude = jt.at("magnitude").get<double>();
    t.period = jt.value("period_s", 60.0);
    t.start = jt.value("start_s", s.start);
    t.duration = jt.value("duration_s", s.duration);
    if (jt.contains("magnitude_cap")) t.magnitude_cap = jt["magnitude_cap"].get<double>();
    s.targets.push_back(t);
  }
  return s;
}

void AttackScenario::to_json_file(const std::string& path) const {
  json j;
  j["class"] = class_name(cls);
  j["start_s"] = start;
  j["duration_s"] = duration;
  j["seed"] = seed;
  j["targets"] = json::array();
  for (const auto& t : targets) {
    json jt = {{"sensor", t.sensor},       {"profile", profile_name(t.profile)},
               {"magnitude", t.magnitude}, {"period_s", t.period},
               {"start_s", t.start},       {"duration_s", t.duration}};
    if (std::isfinite(t.magnitude_cap)) jt["magnitude_cap"] = t.magnitude_cap;
    j["targets"].push_back(jt);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write scenario file " + path);
  os << j.dump(2) << "\n";
}

AttackScenario generate_scenario(AttackClass kind, const plant::PlantTopology& topo,
                                 std::uint64_t seed, double start_time,
                                 const GeneratorConfig& cfg) {
  if (kind == AttackClass::None)
    throw std::invalid_argument("generate_scenario: nothing to generate for class 'none'");
  Rng rng(derive_seed(seed, 0xa77ac4));
  AttackScenario s;
  s.cls = kind;
  s.seed = seed;
  s.start = start_time;

  // group sensors by subsystem
  std::vector<std::vector<std::string>> by_subsystem(topo.tanks.size());
  for (const auto& sensor : topo.sensors)
    by_subsystem[static_cast<std::size_t>(subsystem_of_sensor(topo, sensor.id))].push_back(
        sensor.id);

  auto sample_stage = [&](int subsystem, double stage_start, double stage_duration) {
    const auto& pool = by_subsystem[static_cast<std::size_t>(subsystem)];
    const int n_targets =
        1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                std::min<std::size_t>(pool.size(), cfg.max_sensors_per_stage))));
    // sample distinct sensors from the pool
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (int k = 0; k < n_targets; ++k) {
      const auto& sensor_id = pool[order[static_cast<std::size_t>(k)]];
      const auto& sensor =
          topo.sensors[static_cast<std::size_t>(topo.sensor_index(sensor_id))];
      AttackTarget tgt;
      tgt.sensor = sensor_id;
      const double r = rng.uniform();
      tgt.profile = r < 1.0 / 3 ? ProfileKind::Bias
                                : (r < 2.0 / 3 ? ProfileKind::Ramp : ProfileKind::Periodic);
      const double noise = std::max(sensor.noise_std, 1e-9);
      const double lo = cfg.beta_low_mult * noise, hi = cfg.beta_high_mult * noise;
      tgt.magnitude = rng.uniform(lo, hi) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      tgt.magnitude_cap = hi;
      tgt.period = rng.uniform(30.0, 120.0);
      tgt.start = stage_start;
      tgt.duration = stage_duration;
      s.targets.push_back(tgt);
    }
  };

  if (kind == AttackClass::Single) {
    s.duration = rng.uniform(kSingleMinDuration, kSingleMaxDuration);
    const int subsystem = static_cast<int>(rng.uniform_int(topo.tanks.size()));
    sample_stage(subsystem, s.start, s.duration);
  } else {
    if (topo.tanks.size() < 2)
      throw std::invalid_argument("generate_scenario: multi-stage attack needs >= 2 subsystems");
    s.duration = rng.uniform(kMultiMinDuration, kMultiMaxDuration);
    const std::size_t n_stages =
        2 + rng.uniform_int(std::min<std::size_t>(topo.tanks.size(), 3) - 1);
    std::vector<std::size_t> order(topo.tanks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    const bool synchronized = rng.bernoulli(0.5);
    for (std::size_t k = 0; k < n_stages; ++k) {
      double stage_start = s.start, stage_duration = s.duration;
      if (!synchronized) {
        // staggered stages, each at least cfg.min_stage_duration long and
        // ending no later than the envelope
        const double latest = s.duration - cfg.min_stage_duration;
        const double offset = rng.uniform(0.0, latest);
        stage_start = s.start + offset;
        stage_duration = rng.uniform(cfg.min_stage_duration, s.duration - offset);
      }
      sample_stage(static_cast<int>(order[k]), stage_start, stage_duration);
    }
  }
  s.validate(topo);
  return s;
}

bool inject_fdi(Vector& frame, const AttackScenario& scenario,
                const plant::PlantTopology& topo, double t) {
  bool any = false;
  for (const auto& tgt : scenario.targets) {
    if (t < tgt.start || t >= tgt.start + tgt.duration) continue;
    double delta = 0.0;
    switch (tgt.profile) {
      case ProfileKind::Bias:
        delta = tgt.magnitude;
        break;
      case ProfileKind::Ramp:
        delta = tgt.magnitude * (t - tgt.start) / tgt.duration;
        break;
      case ProfileKind::Periodic:
        delta = tgt.magnitude *
                std::sin(2.0 * 3.14159265358979323846 * (t - tgt.start) / tgt.period);
        break;
    }
    frame[topo.sensor_index(tgt.sensor)] += delta;
    any = true;
  }
  return any;
}

AttackClass label_at(const AttackScenario& scenario, double t) {
  return scenario.active(t) ? scenario.cls : AttackClass::None;
}

Matrix adversarial_perturb(const Matrix& window, const LossGradFn& loss_grad, double epsilon,
                           AdvMethod method, int steps) {
  if (epsilon < 0)
    throw std::invalid_argument("adversarial_perturb: epsilon must be non-negative");
  if (method == AdvMethod::Fgsm) {
    const Matrix g = loss_grad(window);
    return window + epsilon * g.unaryExpr([](double v) {
             return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
           });
  }
  if (steps < 1) throw std::invalid_argument("adversarial_perturb: pgd needs steps >= 1");
  const double step_size = epsilon / steps;
  Matrix x = window;
  for (int i = 0; i < steps; ++i) {
    const Matrix g = loss_grad(x);
    x += step_size * g.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    // project back onto the l-inf ball around the original window
    x = x.cwiseMax(Matrix(window.array() - epsilon)).cwiseMin(Matrix(window.array() + epsilon));
  }
  return x;
}

Vector apply_sensor_dropout(const Vector& frame, double prob, const Vector& last_valid,
                            Rng& rng, std::vector<bool>* dropped) {
  if (prob < 0 || prob > 1)
    throw std::invalid_argument("apply_sensor_dropout: probability must lie in [0, 1]");
  if (last_valid.size() != frame.size())
    throw std::invalid_argument("apply_sensor_dropout: last_valid size mismatch");
  Vector out = frame;
  if (dropped) dropped->assign(static_cast<std::size_t>(frame.size()), false);
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    if (rng.bernoulli(prob)) {
      out[i] = last_valid[i];
      if (dropped) (*dropped)[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

}  // namespace hydro::attack
