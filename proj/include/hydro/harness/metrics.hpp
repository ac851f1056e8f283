#pragma once

#include <cstdint>
#include <vector>

#include "hydro/harness/episode.hpp"

namespace hydro::harness {

// Disruption cost model: weighted deviation of the critical sensors from
// their safe values, integrated between detection and recovery, plus lost
// production and (for shutdown runs) a one-time restart charge.
struct DisruptionCostParams {
  std::vector<int> crit_sensors;
  std::vector<double> weights;  // w_i > 0
  double c_prod = 1.0;          // $/s
  double c_restart = 500.0;     // $
  Vector y_safe;

  void validate() const;  // throws std::invalid_argument
};

struct Interval {
  double lo = 0.0, hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  // detection
  ClassMetrics normal, single, multi;
  double macro_attack_f1 = 0.0;
  double eps_disc = 0.0;  // |F1 single - F1 multi|
  double far = 0.0;
  double far_worst_hour = 0.0;
  double mttd_mean = -1.0;   // -1: no detected attack
  double mttd_worst = -1.0;
  double miss_rate = 0.0;
  long attacks_total = 0, attacks_detected = 0;
  Interval macro_f1_ci, far_ci;

  // resilience
  double d_rel_mean = -1.0;  // -1: not computed
  bool d_normalized = false;
  double d_raw_mean = -1.0;  // reported when shutdown pairs are missing
  double recovery_mean = -1.0;
  double recovery_shutdown_mean = -1.0;
  long recovery_truncated = 0;
  double critical_violation_rate = 0.0;  // attacks with a critical excursion
  double minor_violation_rate = 0.0;     // attacked steps in minor excursions
  double clopper_pearson_upper = 0.0;    // one-sided 95% bound on the critical rate
  Interval d_rel_ci;

  void validate() const;  // rates in [0, 1], CIs contain their points
};

// Per-class one-vs-rest precision/recall/F1, false alarm rate on normal
// samples (validated attack calls only), worst-hour FAR on the concatenated
// campaign clock, and MTTD with undetected attacks split into a miss rate.
MetricsReport compute_detection_metrics(const std::vector<EpisodeResult>& results);

// Fills the resilience half of a report from paired runs: `resilient` and
// `shutdown` are matched by scenario seed. Pairs without a shutdown run fall
// back to unnormalized cost with d_normalized = false.
void compute_resilience_metrics(const std::vector<EpisodeResult>& resilient,
                                const std::vector<EpisodeResult>& shutdown,
                                const DisruptionCostParams& cost, MetricsReport& report);

// disruption of one episode over its own detection-to-recovery window;
// returns 0 for undetected runs
double disruption_cost(const EpisodeResult& episode, const DisruptionCostParams& cost);

struct BootstrapResult {
  double delta = 0.0;
  Interval ci;
  bool significant = false;  // CI excludes zero
};

// Percentile CI of the paired mean difference a - b. The original sample is
// included in the resample pool, so the interval always contains the point.
BootstrapResult bootstrap_ci(const std::vector<double>& a, const std::vector<double>& b,
                             int resamples = 10000, std::uint64_t seed = 0);

// One-sided upper confidence bound for k events in n trials. k = 0 reduces
// to the closed form 1 - alpha^(1/n).
double clopper_pearson_upper(int k, int n, double alpha = 0.05);

}  // namespace hydro::harness
