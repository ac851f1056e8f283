#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hydro/attack/scenario.hpp"
#include "hydro/dt/model.hpp"
#include "hydro/mpc/margins.hpp"
#include "hydro/mpc/terminal.hpp"

namespace hydro::mpc {

// ---------------------------------------------------------------------------
// Uncertainty-aware finite-horizon controller on top of the digital twin.
// Each solve linearizes the twin along the candidate input trajectory,
// tightens the output box by covariance- and risk-driven margins, and closes
// with an invariant terminal sublevel set. Margins are computed once per
// solve from the first rollout, so the QP constraints stay explicit.
// ---------------------------------------------------------------------------

struct ControllerConfig {
  int horizon = 15;
  Matrix q;  // stage output weight, d_y x d_y
  Matrix r;  // input move weight, d_u x d_u
  Matrix p;  // terminal output weight; harness mirrors TerminalIngredients.p

  double kappa = 1.96;  // 95% back-off on the predictive deviation
  double eta = 0.5;     // risk-to-margin gain
  double omega = 2.0;   // multi-point risk weight (used by the risk source)
  double mu = 0.2;      // EMA smoothing of the raw risk
  double lambda_d = 0.1;
  double zeta_floor = 0.1;  // fraction of the current risk kept at horizon end

  double du_max = std::numeric_limits<double>::infinity();  // step norm limit

  Vector u_min, u_max;
  Vector y_min, y_max;
  Vector y_safe;
  double e_bar = 0.0;      // prediction error bound, sensor units (margins)
  double e_bar_rel = 0.0;  // relative mismatch bound (recovery and failsafe)
  Matrix sigma_w;          // process noise for covariance propagation

  int t_confirm = 60;           // consecutive normal classifications
  double tau_recovery = 0.05;   // relative mismatch ceiling during validation
  int t_val = 30;               // validation window, samples at 1 Hz
  double failsafe_factor = 3.0; // failsafe when mismatch exceeds factor*e_bar_rel

  // Optional pull toward a nominal input (prose variant of the move cost);
  // 0 keeps the pure input-increment penalty.
  double u_nom_weight = 0.0;
  Vector u_nom;

  int sqp_max_iter = 15;
  double sqp_tol = 1e-6;

  static ControllerConfig defaults(int d_y, int d_u);
  void validate() const;  // throws std::invalid_argument
};

enum class PlanStatus { optimal, rate_limited, infeasible, fallback };
std::string to_string(PlanStatus s);

struct ControlPlan {
  std::vector<Vector> inputs;       // u(t .. t+H-1)
  std::vector<Vector> predicted;    // twin means for t+1 .. t+H
  std::vector<Matrix> covariances;  // stage-indexed t .. t+H-1
  std::vector<Vector> margins;      // stage-indexed; margins[j] tightens predicted[j]
  std::vector<double> risk;         // decayed smoothed risk, t .. t+H-1
  PlanStatus status = PlanStatus::infeasible;
  int sqp_iterations = 0;
};

// One controller step. `context` holds the raw [tau, d_y + d_u] twin frames
// (newest last; its input channels are overwritten by the candidates),
// `sigma0` the current MC-dropout covariance, `zeta_bar` the smoothed risk.
// `warm` shifts the previous plan forward with an appended terminal-gain
// step. Infeasibility at any point degrades to the terminal-gain input
// projected onto the actuator box, never a throw.
ControlPlan solve_mpc(const Matrix& context, const dt::ModelParams& dtp, const Matrix& sigma0,
                      double zeta_bar, const Vector& u_prev, const ControllerConfig& cfg,
                      const TerminalIngredients& term, const ControlPlan* warm = nullptr);

// Scales u_star back toward u_prev when the step norm exceeds du_max.
Vector rate_limit(const Vector& u_star, const Vector& u_prev, double du_max);

enum class ControlMode { resilient, nominal, failsafe };
std::string to_string(ControlMode m);

// Two-stage recovery plus the mismatch interlock. Histories are aligned per
// sample, oldest first; the newest entries decide. Failsafe (mismatch above
// failsafe_factor * e_bar_rel) overrides everything; nominal requires
// t_confirm + t_val trailing normal classifications whose last t_val samples
// also keep the mismatch under tau_recovery.
ControlMode recovery_and_fallback(const std::vector<attack::AttackClass>& class_history,
                                  const std::vector<double>& delta_mp_history,
                                  const ControllerConfig& cfg);

}  // namespace hydro::mpc
