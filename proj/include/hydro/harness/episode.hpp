#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hydro/ade/classify.hpp"
#include "hydro/attack/scenario.hpp"
#include "hydro/dt/model.hpp"
#include "hydro/mpc/solver.hpp"
#include "hydro/plant/nominal.hpp"
#include "hydro/plant/simulator.hpp"

namespace hydro::harness {

using nn::Matrix;
using nn::Vector;

// What happens once an attack call is confirmed: the resilient controller
// takes over, or the plant runs the scripted full shutdown baseline.
enum class MitigationPolicy { Resilient, Shutdown };

struct EpisodeOptions {
  int steps = 900;
  double sample_dt = 1.0;
  double gamma = 0.8;  // confidence needed before mitigation engages
  int n_mc = 25;       // MC-dropout passes per engaged step

  MitigationPolicy policy = MitigationPolicy::Resilient;

  // shutdown script: inflows closed and everything opened until measured
  // levels fall to drain_level (or drain_timeout expires), all actuators
  // closed for restart_delay, then nominal control resumes; settled means
  // every level within settle_tol of its setpoint for settle_hold seconds
  double drain_level = 0.6;
  double drain_timeout = 600.0;
  double restart_delay = 1500.0;
  double settle_tol = 0.06;
  int settle_hold = 30;

  plant::NominalConfig nominal;
};

struct StepRecord {
  double time = 0.0;
  attack::AttackClass truth = attack::AttackClass::None;
  attack::AttackClass predicted = attack::AttackClass::None;
  double confidence = 0.0;
  bool validated = false;
  mpc::ControlMode mode = mpc::ControlMode::nominal;
  mpc::PlanStatus status = mpc::PlanStatus::optimal;  // meaningful when planned
  bool planned = false;                               // resilient MPC ran this step
  double delta_mp = 0.0;
  double zeta_bar = 0.0;

  // safety-bound excursion of the true plant state: depth is the worst
  // overshoot as a fraction of the safe band, duration the age of the
  // current excursion (0 when inside bounds)
  double excursion_depth = 0.0;
  double excursion_duration = 0.0;

  Vector crit_dev;  // |Y_i - Y*_i| per critical sensor, for cost integration
  Vector u;         // input applied this step
  Vector margins;   // first-stage margins (empty when not planned)
};

struct EpisodeResult {
  std::vector<StepRecord> records;
  std::optional<attack::AttackScenario> scenario;
  std::uint64_t seed = 0;
  MitigationPolicy policy = MitigationPolicy::Resilient;

  double t_detect = -1.0;   // first confirmed attack call (-1: never)
  double t_recover = -1.0;  // nominal operation restored (-1: not within episode)
  bool recovery_truncated = false;
  bool failsafe_tripped = false;

  bool detected() const { return t_detect >= 0.0; }
};

// Safety band and disruption weights shared by the episode loop and the
// metrics. Critical sensors default to every level channel.
struct SafetySpec {
  std::vector<int> crit_sensors;  // indices into the measurement vector
  std::vector<double> weights;    // w_i > 0, aligned with crit_sensors
  Vector y_safe;                  // full measurement vector at the setpoint
  Vector y_min, y_max;            // +-inf on unconstrained channels

  static SafetySpec from_topology(const plant::PlantTopology& topo, const Vector& y_safe,
                                  double band_lo = 0.15, double band_hi = 0.85);
  void validate(int n_sensors) const;
};

// One closed-loop run of the online pipeline: simulate, inject, predict,
// classify with statistical validation, gate, control, apply. The attack
// perturbs the measurement stream consumed by the twin and every controller;
// the plant itself integrates the honest state. Deterministic under seed.
EpisodeResult run_episode(const plant::PlantTopology& topo,
                          const std::optional<attack::AttackScenario>& scenario,
                          const dt::ModelParams& dtp, const ade::AdeParams& adep,
                          const ade::AdeGate& gate, const mpc::ControllerConfig& ctrl,
                          const mpc::TerminalIngredients& term, const SafetySpec& safety,
                          const EpisodeOptions& opts, std::uint64_t seed);

// Per-step controller trace: time, mode, status, inputs, per-channel margins,
// delta_MP, zeta_bar.
void write_plan_trace_csv(const EpisodeResult& episode, const std::string& path);

}  // namespace hydro::harness
