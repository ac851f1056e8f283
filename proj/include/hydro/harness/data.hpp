#pragma once

#include <cstdint>
#include <vector>

#include "hydro/ade/classify.hpp"
#include "hydro/ade/train.hpp"
#include "hydro/attack/scenario.hpp"
#include "hydro/dt/train.hpp"
#include "hydro/plant/nominal.hpp"

namespace hydro::harness {

using nn::Matrix;
using nn::Vector;

// Logs the plant under the nominal regulator: row k holds the measurement
// taken at k and the input it triggered.
std::vector<dt::TraceRow> collect_nominal_trace(const plant::PlantTopology& topo,
                                                const plant::NominalConfig& nominal, int steps,
                                                std::uint64_t seed, double sample_dt = 1.0);

// Noise-free operating point under the nominal regulator, from the tail mean
// of a settled run. Anchors the safe setpoint and the terminal linearization.
struct SteadyState {
  Vector y_safe;
  Vector u_ss;
};

SteadyState steady_state(const plant::PlantTopology& topo, const plant::NominalConfig& nominal,
                         int settle_steps = 600, int tail = 120);

// Twin residual stream against a (possibly attacked) plant under nominal
// control. Residual k is aligned with truth[k]; the stream starts once tau
// context frames exist.
struct ResidualStream {
  std::vector<Vector> residuals;
  std::vector<attack::AttackClass> truth;
};

ResidualStream residual_stream(const plant::PlantTopology& topo, const dt::ModelParams& dtp,
                               const plant::NominalConfig& nominal,
                               const attack::AttackScenario* scenario, int steps,
                               std::uint64_t seed, double sample_dt = 1.0);

// Sliding windows over a residual stream, labeled by the truth at each
// window's newest sample.
std::vector<ade::LabeledWindow> make_labeled_windows(const ResidualStream& stream, int window,
                                                     int stride);

// ---------------------------------------------------------------------------
// End-to-end training pipeline: clean traces -> twin -> attacked residual
// streams -> discriminator -> gate calibrated on held-out normal embeddings.
// ---------------------------------------------------------------------------

struct TrainingConfig {
  dt::DtConfig dt;
  ade::AdeConfig ade;
  plant::NominalConfig nominal;
  attack::GeneratorConfig generator;

  int dt_train_steps = 4000;
  int dt_val_steps = 800;

  int ade_train_episodes = 6;  // per attack class; one normal stream of equal length
  int ade_val_episodes = 2;
  int ade_steps = 1100;        // covers attack start + the longest envelope
  double attack_start = 120.0;
  int window_stride = 5;

  int gate_steps = 600;  // held-out normal stream feeding the gate reference
};

// Labeled windows for one split: `episodes` attacked streams per class plus
// quiet streams keeping the normal class represented. split_tag separates
// train from validation draws under the same seed.
std::vector<ade::LabeledWindow> ade_training_windows(const plant::PlantTopology& topo,
                                                     const dt::ModelParams& dtp,
                                                     const TrainingConfig& cfg, int episodes,
                                                     std::uint64_t seed, std::uint64_t split_tag);

// Normal-operation embeddings from a held-out quiet stream, stride 1 to
// match the online window cadence; feeds gate calibration.
std::vector<Vector> gate_reference_embeddings(const plant::PlantTopology& topo,
                                              const dt::ModelParams& dtp,
                                              const ade::AdeParams& adep,
                                              const TrainingConfig& cfg, std::uint64_t seed);

struct TrainedModels {
  dt::ModelParams dtp;
  ade::AdeParams adep;
  ade::AdeGate gate;
  SteadyState steady;
};

TrainedModels train_campaign_models(const plant::PlantTopology& topo, const TrainingConfig& cfg,
                                    std::uint64_t seed, bool verbose = false);

}  // namespace hydro::harness
