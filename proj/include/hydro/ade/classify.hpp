#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydro/ade/encoder.hpp"
#include "hydro/attack/scenario.hpp"

namespace hydro::ade {

struct ClassProbabilities {
  double p_n = 0.0;   // normal
  double p_as = 0.0;  // single-point attack
  double p_am = 0.0;  // multi-stage attack

  // lowest index wins ties, so ambiguity resolves toward the safer label
  attack::AttackClass argmax() const;
  double confidence() const;  // probability of the argmax class
  double at(attack::AttackClass c) const;
};

ClassProbabilities classify(const Vector& z, const AdeParams& p);

// Ratio of attack mass to normal mass; omega upweights multi-stage attacks
// because they erode several safety margins at once.
double stealth_risk(const ClassProbabilities& probs, double omega = 2.0, double eps = 1e-6);

// ---------------------------------------------------------------------------
// Statistical gate: an attack label only stands when the recent embeddings
// are distinguishable from normal-operation reference embeddings under an
// MMD permutation test.
// ---------------------------------------------------------------------------

struct AdeGate {
  std::vector<Vector> reference;  // normal-operation embeddings
  double bandwidth = 0.0;         // shared RBF kernel scale
  double ref_self_term = 0.0;     // reference self-similarity, precomputed
  int max_batch = 8;              // largest pooled test set
  double alpha = 0.05;

  // per test-set size s = 2..max_batch, stored at index s - 2
  std::vector<double> tau_by_size;
  std::vector<std::vector<double>> null_by_size;  // sorted permutation stats

  double threshold(int test_size) const;
  // permutation p-value (1 + #{null >= stat}) / (B + 1)
  double p_value(int test_size, double stat) const;
};

// Builds per-size rejection thresholds from held-out normal embeddings.
// Requires at least cfg.min_reference embeddings and twice the largest
// test-set size.
AdeGate calibrate_gate(const std::vector<Vector>& reference, const AdeConfig& cfg,
                       std::uint64_t seed);

void save_gate(const AdeGate& gate, const std::string& path);
AdeGate load_gate(const std::string& path);

// Unbiased MMD^2 between a pooled test set and the gate reference, using the
// precomputed reference self-term. Matches mmd2(test, reference, Unbiased).
double gate_statistic(const std::vector<Vector>& test, const AdeGate& gate);

struct ValidatedDecision {
  ClassProbabilities probs;  // raw softmax output
  Vector z;                  // embedding of the current window

  attack::AttackClass label = attack::AttackClass::None;
  double confidence = 0.0;  // halved when an attack call fails validation
  double mmd_stat = 0.0;    // 0 when the permutation test did not run
  double p_value = 1.0;
  bool validated = false;  // permutation test confirmed an attack call
};

// One pipeline step: encode, classify, and statistically validate. `recent`
// holds embeddings from preceding steps (most recent last); the test set is
// the current embedding plus up to max_batch - 1 of them. Attack calls that
// cannot be confirmed (test fails, or not enough embeddings yet) are
// suppressed to N at half confidence. Normal calls pass through unchanged.
ValidatedDecision classify_validated(const Matrix& window, const AdeParams& params,
                                     const AdeGate& gate, const std::vector<Vector>& recent);

}  // namespace hydro::ade
