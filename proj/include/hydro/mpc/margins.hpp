#pragma once

#include <vector>

#include "hydro/nn/tensor.hpp"

namespace hydro::mpc {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Horizon-wide uncertainty bookkeeping: covariance rolled through the local
// linearizations, an exponentially decaying risk profile, and the per-channel
// constraint back-offs built from both. All sequences are stage-indexed
// k = t .. t+H-1 (length H).
// ---------------------------------------------------------------------------

// Sigma(k+1) = A(k) Sigma(k) A(k)' + Sigma_w, symmetrized each step to kill
// drift. a_seq supplies A(t), A(t+1), ...; the last entry is reused when the
// sequence is shorter than H-1.
std::vector<Matrix> propagate_covariance(const Matrix& sigma0, const std::vector<Matrix>& a_seq,
                                         const Matrix& sigma_w, int horizon);

// zeta(k) = max(zeta_t * exp(-lambda_d (k - t)), floor_factor * zeta_t).
std::vector<double> horizon_risk(double zeta_t, double lambda_d, int horizon,
                                 double floor_factor = 0.1);

// One EMA update: (1 - mu) * prev + mu * now, mu in (0, 1].
double ema_smooth(double prev, double now, double mu);

struct MarginResult {
  std::vector<Vector> margins;  // per stage, per output channel
  bool clipped = false;         // true when the non-empty-set clip was binding
};

// Per-channel back-off kappa * sqrt(diag Sigma(k)) + eta * zeta(k), raised to
// at least kappa * sqrt(diag Sigma(k)) + e_bar, then clipped to half the
// width of [y_min, y_max] so the tightened set stays non-empty. A binding
// clip voids the margin guarantee and is flagged.
MarginResult safety_margins(const std::vector<Matrix>& covariances,
                            const std::vector<double>& risk, double kappa, double eta,
                            double e_bar, const Vector& y_min, const Vector& y_max);

}  // namespace hydro::mpc
