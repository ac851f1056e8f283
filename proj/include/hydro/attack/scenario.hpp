#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hydro/core/rng.hpp"
#include "hydro/nn/tensor.hpp"
#include "hydro/plant/topology.hpp"

namespace hydro::attack {

using nn::Matrix;
using nn::Vector;

enum class AttackClass { None, Single, Multi };

enum class ProfileKind { Bias, Ramp, Periodic };

// One compromised channel. delta(t) is added to the sensor reading while
// t lies in [start, start + duration):
//   bias      m
//   ramp      m * (t - start) / duration        (reaches m at the end)
//   periodic  m * sin(2*pi * (t - start) / period)
struct AttackTarget {
  std::string sensor;
  ProfileKind profile = ProfileKind::Bias;
  double magnitude = 0.0;
  double period = 60.0;
  double start = 0.0;
  double duration = 0.0;
  double magnitude_cap = std::numeric_limits<double>::infinity();
};

// Class envelopes: a single-stage attack stays inside one subsystem for
// 60..300 s; a multi-stage attack spans at least two subsystems for
// 300..900 s, either synchronized or staggered in sequence.
inline constexpr double kSingleMinDuration = 60.0, kSingleMaxDuration = 300.0;
inline constexpr double kMultiMinDuration = 300.0, kMultiMaxDuration = 900.0;

struct AttackScenario {
  AttackClass cls = AttackClass::None;
  double start = 0.0;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<AttackTarget> targets;

  double end() const { return start + duration; }
  bool active(double t) const;

  // throws std::invalid_argument on unknown channels, empty target lists,
  // magnitudes above their cap, or durations outside the class envelope
  void validate(const plant::PlantTopology& topo) const;

  static AttackScenario from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;
};

// A sensor belongs to the subsystem of its tank; flow/pressure sensors
// follow their pipe's downstream tank (upstream if the pipe discharges to
// the drain). Returns the tank index.
int subsystem_of_sensor(const plant::PlantTopology& topo, const std::string& sensor_id);

struct GeneratorConfig {
  double beta_low_mult = 2.0;    // magnitude floor, in units of channel noise std
  double beta_high_mult = 20.0;  // magnitude cap, same units
  int max_sensors_per_stage = 2;
  double min_stage_duration = 60.0;  // for sequential multi-stage timing
};

// Deterministic scenario sampler; identical (kind, seed) pairs yield
// identical scenarios on the same topology.
AttackScenario generate_scenario(AttackClass kind, const plant::PlantTopology& topo,
                                 std::uint64_t seed, double start_time,
                                 const GeneratorConfig& cfg = {});

// Additive false-data injection on one measurement frame. Returns true when
// any target is active at time t (the frame's ground-truth attack flag).
bool inject_fdi(Vector& frame, const AttackScenario& scenario,
                const plant::PlantTopology& topo, double t);

AttackClass label_at(const AttackScenario& scenario, double t);

// ---------------------------------------------------------------------------
// Gradient-based evasion. The caller provides the loss gradient w.r.t. the
// input window; FGSM takes one signed step of size epsilon, PGD iterates
// steps of epsilon/steps and re-projects onto the l-inf ball around the
// original window after every step. PGD with steps = 1 reproduces FGSM.
// ---------------------------------------------------------------------------

enum class AdvMethod { Fgsm, Pgd };

using LossGradFn = std::function<Matrix(const Matrix&)>;

Matrix adversarial_perturb(const Matrix& window, const LossGradFn& loss_grad, double epsilon,
                           AdvMethod method, int steps = 10);

// Bernoulli sensor dropout with forward fill: each channel independently
// drops with probability `prob` and is replaced by its last valid reading.
Vector apply_sensor_dropout(const Vector& frame, double prob, const Vector& last_valid,
                            Rng& rng, std::vector<bool>* dropped = nullptr);

const char* class_name(AttackClass cls);
AttackClass class_from_name(const std::string& name);

}  // namespace hydro::attack
