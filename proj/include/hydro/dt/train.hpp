#pragma once

#include <cstdint>
#include <vector>

#include "hydro/dt/model.hpp"
#include "hydro/plant/topology.hpp"

namespace hydro::dt {

// One supervised pair in plant units: tau context frames of [y(k), u(k)]
// (u(k) = input applied at k) and the next measurement y(t).
struct DtSample {
  Matrix context;  // [tau, d_y + d_u]
  Vector target;   // d_y
};

// Logged plant step: the measurement taken at k and the input applied at k.
struct TraceRow {
  Vector y;
  Vector u;
};

// Sliding supervised pairs from a trace; empty when the trace is too short.
std::vector<DtSample> build_dataset(const std::vector<TraceRow>& trace, int tau);

struct DtTrainReport {
  double initial_val = 0.0;  // untrained model, same frozen loss scales
  double best_val = 0.0;
  std::vector<double> val_losses;  // one per main epoch
};

struct DtTrainOptions {
  double sample_dt = 1.0;        // seconds between trace rows
  int lipschitz_contexts = 200;  // validation contexts used for L_f
  bool verbose = false;
  DtTrainReport* report = nullptr;
};

// Composite-loss training: prediction term scaled by the warm-up residual
// variance plus the uncertainty-weighted physics penalty. Early stopping on
// validation loss; spectral projection of conv kernels each step. Returns the
// best-validation parameters with normalization and empirical constants set.
ModelParams train_dt(const std::vector<DtSample>& train, const std::vector<DtSample>& val,
                     const plant::PlantTopology& topo, const DtConfig& cfg, std::uint64_t seed,
                     const DtTrainOptions& opts = {});

// nearest-rank percentile (q in [0, 100]) of a copied, sorted sample
double percentile(std::vector<double> values, double q);

}  // namespace hydro::dt
