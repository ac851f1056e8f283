#pragma once

#include <cstdint>

#include "hydro/nn/tensor.hpp"

namespace hydro::mpc {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Terminal ingredients for the resilient controller: an unconstrained LQR
// gain K, the closed-loop Lyapunov cost P, and a certified radius c so that
// the sublevel set {x : x'Px <= c} (deviation coordinates around the safe
// setpoint) is invariant under x+ = (A - BK)x with state and input
// constraints held. Sampling stands in for an exact maximal-invariant-set
// computation; a Lyapunov sublevel set is invariant for the nominal loop by
// construction, so only constraint containment needs certifying.
// ---------------------------------------------------------------------------

struct TerminalIngredients {
  Matrix k;       // d_u x d_y LQR gain
  Matrix p;       // d_y x d_y terminal cost
  double c = 1.0; // sublevel radius; 1.0 when no constraints were certified
};

// Constraint box in deviation coordinates: the terminal set must fit inside
// [x_lo, x_hi], and the terminal law u = -Kx inside [u_lo, u_hi].
struct TerminalBox {
  Vector x_lo, x_hi;
  Vector u_lo, u_hi;
};

// Fixed-point iteration of the discrete algebraic Riccati equation starting
// from P = Q, run to residual < 1e-10 (capped at 1e4 sweeps). Divergence is
// reported as an unstabilizable pair.
Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r);

// K = (R + B'PB)^{-1} B'PA for the P returned by solve_dare.
Matrix lqr_gain(const Matrix& a, const Matrix& b, const Matrix& p, const Matrix& r);

// Discrete Lyapunov equation A'PA - P = -Rhs for Schur-stable A, solved by
// the doubling iteration; the residual is verified to 1e-8 before returning.
Matrix solve_lyapunov(const Matrix& a, const Matrix& rhs);

double spectral_radius(const Matrix& a);

// K from the Riccati fixed point, P from A_K'PA_K - P = -Q - K'RK, and c
// certified on n_samples boundary points per box (nullptr box -> c = 1.0).
TerminalIngredients compute_terminal_ingredients(const Matrix& a, const Matrix& b,
                                                 const Matrix& q, const Matrix& r,
                                                 const TerminalBox* box = nullptr,
                                                 int n_samples = 10000,
                                                 std::uint64_t seed = 0);

}  // namespace hydro::mpc
