#pragma once

#include <cstdint>
#include <vector>

#include "hydro/harness/data.hpp"
#include "hydro/harness/episode.hpp"
#include "hydro/harness/metrics.hpp"

namespace hydro::harness {

// ---------------------------------------------------------------------------
// Evaluation campaign: a batch of seeded attack episodes run twice (resilient
// control and the scripted shutdown baseline on identical plant/noise seeds)
// plus quiet episodes for the false-alarm floor, aggregated into one report.
// ---------------------------------------------------------------------------

struct CampaignConfig {
  int n_single = 30;
  int n_multi = 20;
  int n_normal = 6;        // quiet episodes measuring false alarms
  int normal_steps = 900;

  double attack_start_min = 120.0;
  double attack_start_max = 180.0;
  double resilient_tail = 300.0;  // episode runs this long past the attack end
  double shutdown_tail = 400.0;   // slack past the scripted restart

  attack::GeneratorConfig generator;
  EpisodeOptions episode;

  // controller shaping on top of the trained twin
  int horizon = 15;
  double q_aux = 0.05;   // stage weight on non-level channels
  double r_weight = 0.1;
  double du_max = 0.5;
  // mitigation rests on the classifier here, so the mismatch failsafe is a
  // last resort; large injected offsets would otherwise trip it immediately
  double failsafe_factor = 10.0;

  double c_prod = 1.0;     // $/s of interrupted production
  double c_restart = 500.0;

  void validate() const;  // throws std::invalid_argument
};

struct CampaignResult {
  MetricsReport report;
  std::vector<EpisodeResult> resilient;  // attack episodes under the resilient controller
  std::vector<EpisodeResult> shutdown;   // the same scenarios under the shutdown script
  std::vector<EpisodeResult> normal;     // quiet runs

  mpc::ControllerConfig controller;
  mpc::TerminalIngredients terminal;
  SafetySpec safety;
};

// Stage weights, actuator/output boxes, and twin-calibrated error bounds for
// the resilient controller.
mpc::ControllerConfig make_controller_config(const plant::PlantTopology& topo,
                                             const dt::ModelParams& dtp, const SafetySpec& safety,
                                             const CampaignConfig& cfg);

// Terminal set from the twin linearized at the safe operating point. The
// learned linearization can sit outside the Riccati solver's reach; the state
// matrix is then damped stepwise toward stability, trading set size for a
// certificate that still holds under the true terminal constraint.
mpc::TerminalIngredients make_terminal_ingredients(const dt::ModelParams& dtp,
                                                   const SteadyState& steady,
                                                   const SafetySpec& safety,
                                                   const mpc::ControllerConfig& ctrl,
                                                   std::uint64_t seed = 0);

// Deterministic under (models, cfg, seed): scenario draws, episode noise, and
// aggregation order all derive from `seed`.
CampaignResult run_campaign(const plant::PlantTopology& topo, const TrainedModels& models,
                            const CampaignConfig& cfg, std::uint64_t seed);

}  // namespace hydro::harness
