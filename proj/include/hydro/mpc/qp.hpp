#pragma once

#include "hydro/nn/tensor.hpp"

namespace hydro::mpc {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Dense strictly convex QP: minimize 0.5 x'Hx + f'x subject to Cx <= d.
// Solved with the Goldfarb-Idnani dual active-set method, which starts from
// the unconstrained minimizer and needs no feasible initial point; primal
// infeasibility surfaces as an unbounded dual step. Deterministic, and sized
// for the condensed input-only horizons used here (tens of variables).
// ---------------------------------------------------------------------------

struct QpProblem {
  Matrix h;  // n x n, symmetric positive definite (regularized internally)
  Vector f;
  Matrix c;  // m x n
  Vector d;  // m
};

enum class QpStatus { optimal, infeasible, iteration_limit };

struct QpResult {
  Vector x;
  Vector duals;  // one multiplier per constraint row, zero when inactive
  QpStatus status = QpStatus::iteration_limit;
  int iterations = 0;
};

QpResult solve_qp(const QpProblem& qp);

}  // namespace hydro::mpc
