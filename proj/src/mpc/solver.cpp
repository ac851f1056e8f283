#include "hydro/mpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "hydro/dt/jacobian.hpp"
#include "hydro/mpc/qp.hpp"

namespace hydro::mpc {

namespace {

bool is_psd(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-9 * scale;
}

Vector clamp_box(const Vector& v, const Vector& lo, const Vector& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

Matrix normalize_context(const Matrix& raw, const dt::ModelParams& dtp) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index t = 0; t < raw.rows(); ++t)
    out.row(t) = dtp.normalize_frame(raw.row(t).head(dtp.d_y).transpose(),
                                     raw.row(t).tail(dtp.d_u).transpose())
                     .transpose();
  return out;
}

struct Rollout {
  std::vector<Vector> y;  // predictions t+1 .. t+H, sensor units
  std::vector<Matrix> a;  // a[j], b[j]: twin linearization at stage j
  std::vector<Matrix> b;
};

// Rolls the twin forward under the candidate inputs, sliding its own
// predictions back into the context. Jacobians are skipped when the caller
// only needs the trajectory.
Rollout roll_trajectory(Matrix ctx, const std::vector<Vector>& u, const dt::ModelParams& dtp,
                        bool want_jacobians) {
  const auto tau = ctx.rows();
  Rollout out;
  for (size_t j = 0; j < u.size(); ++j) {
    ctx.row(tau - 1).tail(dtp.d_u) = u[j].transpose();
    Matrix ctx_n = normalize_context(ctx, dtp);
    if (want_jacobians) {
      auto lin = dt::jacobians(ctx_n, u[j], dtp);
      out.a.push_back(std::move(lin.a));
      out.b.push_back(std::move(lin.b));
    }
    Vector y_next = dt::predict(ctx_n, dtp);
    for (Eigen::Index t = 0; t + 1 < tau; ++t) ctx.row(t) = ctx.row(t + 1);
    ctx.row(tau - 1).head(dtp.d_y) = y_next.transpose();
    out.y.push_back(std::move(y_next));
  }
  return out;
}

std::vector<Vector> lqr_hold_plan(const Matrix& ctx, const dt::ModelParams& dtp,
                                  const Vector& u_prev, const ControllerConfig& cfg,
                                  const TerminalIngredients& term) {
  Rollout probe = roll_trajectory(ctx, {u_prev}, dtp, false);
  Vector u_fb = clamp_box(u_prev - term.k * (probe.y[0] - cfg.y_safe), cfg.u_min, cfg.u_max);
  return std::vector<Vector>(static_cast<size_t>(cfg.horizon), u_fb);
}

}  // namespace

ControllerConfig ControllerConfig::defaults(int d_y, int d_u) {
  ControllerConfig c;
  c.q = Matrix::Identity(d_y, d_y);
  c.r = 0.1 * Matrix::Identity(d_u, d_u);
  c.p = Matrix::Identity(d_y, d_y);
  const double inf = std::numeric_limits<double>::infinity();
  c.u_min = Vector::Constant(d_u, -inf);
  c.u_max = Vector::Constant(d_u, inf);
  c.y_min = Vector::Constant(d_y, -inf);
  c.y_max = Vector::Constant(d_y, inf);
  c.y_safe = Vector::Zero(d_y);
  c.sigma_w = Matrix::Zero(d_y, d_y);
  return c;
}

void ControllerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("controller: horizon must be >= 1");
  if (!is_psd(q)) throw std::invalid_argument("controller: Q must be symmetric PSD");
  if (!is_psd(r)) throw std::invalid_argument("controller: R must be symmetric PSD");
  if (!is_psd(p)) throw std::invalid_argument("controller: P must be symmetric PSD");
  const auto d_y = q.rows();
  const auto d_u = r.rows();
  if (p.rows() != d_y) throw std::invalid_argument("controller: P/Q dimension mismatch");
  if (u_min.size() != d_u || u_max.size() != d_u || y_min.size() != d_y ||
      y_max.size() != d_y || y_safe.size() != d_y)
    throw std::invalid_argument("controller: bound dimension mismatch");
  if ((u_min.array() >= u_max.array()).any() || (y_min.array() >= y_max.array()).any())
    throw std::invalid_argument("controller: bounds must satisfy min < max");
  if (sigma_w.rows() != d_y || sigma_w.cols() != d_y || !is_psd(sigma_w))
    throw std::invalid_argument("controller: Sigma_w must be PSD with output dimension");
  if (kappa < 0 || eta < 0) throw std::invalid_argument("controller: kappa, eta must be >= 0");
  if (mu <= 0 || mu > 1) throw std::invalid_argument("controller: mu must be in (0, 1]");
  if (lambda_d < 0) throw std::invalid_argument("controller: lambda_d must be >= 0");
  if (zeta_floor < 0 || zeta_floor > 1)
    throw std::invalid_argument("controller: zeta_floor must be in [0, 1]");
  if (!(du_max > 0)) throw std::invalid_argument("controller: du_max must be positive");
  if (e_bar < 0 || e_bar_rel < 0) throw std::invalid_argument("controller: error bounds must be >= 0");
  if (t_confirm < 1 || t_val < 1) throw std::invalid_argument("controller: recovery windows must be >= 1");
  if (tau_recovery <= 0) throw std::invalid_argument("controller: tau_recovery must be positive");
  if (failsafe_factor <= 0) throw std::invalid_argument("controller: failsafe_factor must be positive");
  if (u_nom_weight < 0) throw std::invalid_argument("controller: u_nom_weight must be >= 0");
  if (u_nom_weight > 0 && u_nom.size() != d_u)
    throw std::invalid_argument("controller: u_nom required when its weight is set");
  if (sqp_max_iter < 1 || sqp_tol <= 0) throw std::invalid_argument("controller: bad SQP settings");
}

std::string to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::optimal: return "optimal";
    case PlanStatus::rate_limited: return "rate-limited";
    case PlanStatus::infeasible: return "infeasible";
    case PlanStatus::fallback: return "fallback";
  }
  return "unknown";
}

std::string to_string(ControlMode m) {
  switch (m) {
    case ControlMode::resilient: return "resilient";
    case ControlMode::nominal: return "nominal";
    case ControlMode::failsafe: return "failsafe";
  }
  return "unknown";
}

ControlPlan solve_mpc(const Matrix& context, const dt::ModelParams& dtp, const Matrix& sigma0,
                      double zeta_bar, const Vector& u_prev, const ControllerConfig& cfg,
                      const TerminalIngredients& term, const ControlPlan* warm) {
  cfg.validate();
  const int h = cfg.horizon;
  const auto d_y = static_cast<Eigen::Index>(dtp.d_y);
  const auto d_u = static_cast<Eigen::Index>(dtp.d_u);
  if (cfg.q.rows() != d_y || cfg.r.rows() != d_u)
    throw std::invalid_argument("solve_mpc: config sized for a different twin");
  if (context.rows() != dtp.tau || context.cols() != dtp.d_x())
    throw std::invalid_argument("solve_mpc: context shape mismatch");
  if (sigma0.rows() != d_y || sigma0.cols() != d_y)
    throw std::invalid_argument("solve_mpc: Sigma0 shape mismatch");
  if (u_prev.size() != d_u) throw std::invalid_argument("solve_mpc: u_prev length mismatch");
  if (zeta_bar < 0) throw std::invalid_argument("solve_mpc: risk must be nonnegative");
  if (term.k.rows() != d_u || term.k.cols() != d_y || term.p.rows() != d_y)
    throw std::invalid_argument("solve_mpc: terminal ingredients shape mismatch");

  ControlPlan plan;
  plan.risk = horizon_risk(zeta_bar, cfg.lambda_d, h, cfg.zeta_floor);

  // Initial guess: shifted previous plan with an appended terminal-gain step,
  // or a held input when no usable plan exists.
  std::vector<Vector> u(static_cast<size_t>(h));
  const bool warm_ok = warm != nullptr && static_cast<int>(warm->inputs.size()) == h &&
                       static_cast<int>(warm->predicted.size()) == h &&
                       warm->inputs.front().size() == d_u &&
                       warm->status != PlanStatus::infeasible;
  if (warm_ok) {
    for (int j = 0; j + 1 < h; ++j) u[static_cast<size_t>(j)] = warm->inputs[static_cast<size_t>(j + 1)];
    Vector appended = warm->inputs.back() - term.k * (warm->predicted.back() - cfg.y_safe);
    u[static_cast<size_t>(h - 1)] = clamp_box(appended, cfg.u_min, cfg.u_max);
  } else {
    std::fill(u.begin(), u.end(), clamp_box(u_prev, cfg.u_min, cfg.u_max));
  }

  auto finish = [&](std::vector<Vector> inputs, PlanStatus status) {
    // Rate limiter and actuator projection on the committed first input, then
    // a consistency re-roll so the stored means match the stored inputs.
    Vector first = rate_limit(inputs[0], u_prev, cfg.du_max);
    if (status == PlanStatus::optimal &&
        (first - inputs[0]).cwiseAbs().maxCoeff() > 0) status = PlanStatus::rate_limited;
    inputs[0] = clamp_box(first, cfg.u_min, cfg.u_max);
    for (auto& uk : inputs) uk = clamp_box(uk, cfg.u_min, cfg.u_max);
    Rollout final_roll = roll_trajectory(context, inputs, dtp, false);
    plan.inputs = std::move(inputs);
    plan.predicted = std::move(final_roll.y);
    plan.status = status;
    return plan;
  };

  // First rollout fixes the linearization used for uncertainty propagation,
  // so margins enter the QP as constants.
  Rollout ref = roll_trajectory(context, u, dtp, true);
  plan.covariances = propagate_covariance(sigma0, ref.a, cfg.sigma_w, h);
  MarginResult margins = safety_margins(plan.covariances, plan.risk, cfg.kappa, cfg.eta,
                                        cfg.e_bar, cfg.y_min, cfg.y_max);
  plan.margins = margins.margins;
  if (margins.clipped)
    return finish(lqr_hold_plan(context, dtp, u_prev, cfg, term), PlanStatus::infeasible);

  const auto n_var = static_cast<Eigen::Index>(h) * d_u;
  Matrix w_stage = cfg.q;
  Matrix w_term = cfg.q + cfg.p;

  for (int it = 1; it <= cfg.sqp_max_iter; ++it) {
    plan.sqp_iterations = it;
    if (it > 1) ref = roll_trajectory(context, u, dtp, true);

    // Condensed sensitivities: s[j][i] = d y(t+j+1) / d u(t+i).
    std::vector<std::vector<Matrix>> s(static_cast<size_t>(h));
    for (int j = 0; j < h; ++j) {
      auto& row = s[static_cast<size_t>(j)];
      row.resize(static_cast<size_t>(j) + 1);
      for (int i = 0; i < j; ++i)
        row[static_cast<size_t>(i)] = ref.a[static_cast<size_t>(j)] * s[static_cast<size_t>(j - 1)][static_cast<size_t>(i)];
      row[static_cast<size_t>(j)] = ref.b[static_cast<size_t>(j)];
    }
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(h) * d_y, n_var);
    Vector e(static_cast<Eigen::Index>(h) * d_y);
    for (int j = 0; j < h; ++j) {
      e.segment(j * d_y, d_y) = ref.y[static_cast<size_t>(j)] - cfg.y_safe;
      for (int i = 0; i <= j; ++i)
        g.block(j * d_y, i * d_u, d_y, d_u) = s[static_cast<size_t>(j)][static_cast<size_t>(i)];
    }

    QpProblem qp;
    qp.h = Matrix::Zero(n_var, n_var);
    qp.f = Vector::Zero(n_var);
    for (int j = 0; j < h; ++j) {
      const Matrix& w = (j == h - 1) ? w_term : w_stage;
      Matrix gw = g.middleRows(j * d_y, d_y).transpose() * w;
      qp.h += 2.0 * gw * g.middleRows(j * d_y, d_y);
      qp.f += 2.0 * gw * e.segment(j * d_y, d_y);
    }
    for (int k = 0; k < h; ++k) {
      const Vector& prev = (k == 0) ? u_prev : u[static_cast<size_t>(k - 1)];
      Vector delta = u[static_cast<size_t>(k)] - prev;
      qp.h.block(k * d_u, k * d_u, d_u, d_u) += 2.0 * cfg.r;
      qp.f.segment(k * d_u, d_u) += 2.0 * cfg.r * delta;
      if (k > 0) {
        qp.h.block(k * d_u, (k - 1) * d_u, d_u, d_u) -= 2.0 * cfg.r;
        qp.h.block((k - 1) * d_u, k * d_u, d_u, d_u) -= 2.0 * cfg.r;
        qp.h.block((k - 1) * d_u, (k - 1) * d_u, d_u, d_u) += 2.0 * cfg.r;
        qp.f.segment((k - 1) * d_u, d_u) -= 2.0 * cfg.r * delta;
      }
      if (cfg.u_nom_weight > 0) {
        qp.h.block(k * d_u, k * d_u, d_u, d_u) +=
            2.0 * cfg.u_nom_weight * Matrix::Identity(d_u, d_u);
        qp.f.segment(k * d_u, d_u) +=
            2.0 * cfg.u_nom_weight * (u[static_cast<size_t>(k)] - cfg.u_nom);
      }
    }

    std::vector<Vector> rows;
    std::vector<double> rhs;
    auto add_row = [&](const Vector& row, double bound) {
      rows.push_back(row);
      rhs.push_back(bound);
    };
    for (int k = 0; k < h; ++k) {
      for (Eigen::Index c = 0; c < d_u; ++c) {
        Vector row = Vector::Zero(n_var);
        row[k * d_u + c] = 1.0;
        if (std::isfinite(cfg.u_max[c])) add_row(row, cfg.u_max[c] - u[static_cast<size_t>(k)][c]);
        if (std::isfinite(cfg.u_min[c])) add_row(Vector(-row), u[static_cast<size_t>(k)][c] - cfg.u_min[c]);
      }
    }
    for (int j = 0; j < h; ++j) {
      for (Eigen::Index c = 0; c < d_y; ++c) {
        const double eps = plan.margins[static_cast<size_t>(j)][c];
        const double mean = ref.y[static_cast<size_t>(j)][c];
        Vector row = g.row(j * d_y + c).transpose();
        if (std::isfinite(cfg.y_max[c])) add_row(row, cfg.y_max[c] - eps - mean);
        if (std::isfinite(cfg.y_min[c])) add_row(Vector(-row), mean - (cfg.y_min[c] + eps));
      }
    }
    {
      // Linearized terminal sublevel cut; exact on the converged iterate.
      Vector v = ref.y.back() - cfg.y_safe;
      Vector grad_y = 2.0 * (term.p * v);
      if (grad_y.cwiseAbs().maxCoeff() > 1e-12) {
        Vector row = g.middleRows((h - 1) * d_y, d_y).transpose() * grad_y;
        add_row(row, term.c - v.dot(term.p * v));
      }
    }
    qp.c = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), n_var);
    qp.d = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
      qp.c.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
      qp.d[static_cast<Eigen::Index>(i)] = rhs[i];
    }

    QpResult sol = solve_qp(qp);
    if (sol.status != QpStatus::optimal || !sol.x.allFinite())
      return finish(lqr_hold_plan(context, dtp, u_prev, cfg, term), PlanStatus::infeasible);

    double step = sol.x.cwiseAbs().maxCoeff();
    for (int k = 0; k < h; ++k) u[static_cast<size_t>(k)] += sol.x.segment(k * d_u, d_u);
    if (step < cfg.sqp_tol) break;
  }

  return finish(std::move(u), PlanStatus::optimal);
}

Vector rate_limit(const Vector& u_star, const Vector& u_prev, double du_max) {
  if (!(du_max > 0)) throw std::invalid_argument("rate_limit: du_max must be positive");
  if (u_star.size() != u_prev.size()) throw std::invalid_argument("rate_limit: length mismatch");
  Vector step = u_star - u_prev;
  const double norm = step.norm();
  if (norm <= du_max) return u_star;
  return u_prev + (du_max / norm) * step;
}

ControlMode recovery_and_fallback(const std::vector<attack::AttackClass>& class_history,
                                  const std::vector<double>& delta_mp_history,
                                  const ControllerConfig& cfg) {
  if (!delta_mp_history.empty() && cfg.e_bar_rel > 0 &&
      delta_mp_history.back() > cfg.failsafe_factor * cfg.e_bar_rel)
    return ControlMode::failsafe;

  const size_t need_class = static_cast<size_t>(cfg.t_confirm) + static_cast<size_t>(cfg.t_val);
  const size_t need_delta = static_cast<size_t>(cfg.t_val);
  if (class_history.size() < need_class || delta_mp_history.size() < need_delta)
    return ControlMode::resilient;
  for (size_t i = class_history.size() - need_class; i < class_history.size(); ++i)
    if (class_history[i] != attack::AttackClass::None) return ControlMode::resilient;
  for (size_t i = delta_mp_history.size() - need_delta; i < delta_mp_history.size(); ++i)
    if (delta_mp_history[i] >= cfg.tau_recovery) return ControlMode::resilient;
  return ControlMode::nominal;
}

}  // namespace hydro::mpc
