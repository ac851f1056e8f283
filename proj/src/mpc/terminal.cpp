#include "hydro/mpc/terminal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hydro/core/rng.hpp"

namespace hydro::mpc {

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r) {
  const auto n = a.rows();
  const auto m = b.cols();
  if (a.cols() != n) throw std::invalid_argument("terminal: A must be square");
  if (b.rows() != n) throw std::invalid_argument("terminal: B row count must match A");
  if (q.rows() != n || q.cols() != n) throw std::invalid_argument("terminal: Q must be d_y x d_y");
  if (r.rows() != m || r.cols() != m) throw std::invalid_argument("terminal: R must be d_u x d_u");
}

}  // namespace

Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r) {
  check_shapes(a, b, q, r);
  Matrix p = q;
  for (int it = 0; it < 10000; ++it) {
    Matrix btp = b.transpose() * p;
    Matrix gain = (r + btp * b).fullPivLu().solve(btp * a);
    Matrix next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    next = 0.5 * (next + next.transpose().eval());
    double step = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (!p.allFinite() || p.cwiseAbs().maxCoeff() > 1e12)
      throw std::runtime_error("solve_dare: iteration diverged (pair not stabilizable)");
    if (step < 1e-10) return p;
  }
  throw std::runtime_error("solve_dare: no fixed point in 1e4 sweeps (pair not stabilizable)");
}

Matrix lqr_gain(const Matrix& a, const Matrix& b, const Matrix& p, const Matrix& r) {
  Matrix btp = b.transpose() * p;
  return (r + btp * b).fullPivLu().solve(btp * a);
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& rhs) {
  if (a.rows() != a.cols() || rhs.rows() != a.rows() || rhs.cols() != a.cols())
    throw std::invalid_argument("solve_lyapunov: shape mismatch");
  // P = sum_i (A')^i Rhs A^i via doubling: each pass squares the power of A.
  Matrix p = rhs;
  Matrix m = a;
  for (int it = 0; it < 200; ++it) {
    p = (p + m.transpose() * p * m).eval();
    m = (m * m).eval();
    if (!p.allFinite() || p.cwiseAbs().maxCoeff() > 1e14)
      throw std::runtime_error("solve_lyapunov: series diverged (A not Schur stable)");
    if (m.cwiseAbs().maxCoeff() < 1e-300) break;
    if (it > 2 && m.cwiseAbs().maxCoeff() * p.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  p = 0.5 * (p + p.transpose().eval());
  double residual = (a.transpose() * p * a - p + rhs).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (residual > 1e-8 * scale)
    throw std::runtime_error("solve_lyapunov: residual above 1e-8");
  return p;
}

double spectral_radius(const Matrix& a) {
  Eigen::MatrixXd dense = a;
  return Eigen::EigenSolver<Eigen::MatrixXd>(dense, false).eigenvalues().cwiseAbs().maxCoeff();
}

TerminalIngredients compute_terminal_ingredients(const Matrix& a, const Matrix& b,
                                                 const Matrix& q, const Matrix& r,
                                                 const TerminalBox* box, int n_samples,
                                                 std::uint64_t seed) {
  Matrix p_dare = solve_dare(a, b, q, r);
  TerminalIngredients out;
  out.k = lqr_gain(a, b, p_dare, r);
  Matrix a_cl = a - b * out.k;
  if (spectral_radius(a_cl) >= 1.0)
    throw std::runtime_error("compute_terminal_ingredients: closed loop not contractive");
  out.p = solve_lyapunov(a_cl, q + out.k.transpose() * r * out.k);
  out.c = 1.0;
  if (box == nullptr) return out;

  const auto n = a.rows();
  if (box->x_lo.size() != n || box->x_hi.size() != n || box->u_lo.size() != out.k.rows() ||
      box->u_hi.size() != out.k.rows())
    throw std::invalid_argument("compute_terminal_ingredients: box dimension mismatch");
  if ((box->x_lo.array() >= 0).any() || (box->x_hi.array() <= 0).any())
    throw std::invalid_argument("compute_terminal_ingredients: deviation box must contain 0");

  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(out.p));
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("compute_terminal_ingredients: terminal cost not positive definite");

  // Boundary samples x = sqrt(c) * L^{-T} s, s uniform on the unit sphere;
  // box extrema over a convex set live on its boundary, so these points
  // certify containment for the whole sublevel set.
  Rng rng(derive_seed(seed, 0x7e51));
  std::vector<Vector> dirs(static_cast<size_t>(n_samples));
  for (auto& s : dirs) {
    Vector v(n);
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
      norm = v.norm();
    } while (norm < 1e-12);
    s = llt.matrixU().solve(Eigen::VectorXd(v / norm));
  }

  auto certified = [&](double c) {
    const double root = std::sqrt(c);
    for (const auto& base : dirs) {
      Vector x = root * base;
      if ((x.array() < box->x_lo.array()).any() || (x.array() > box->x_hi.array()).any())
        return false;
      Vector u = -(out.k * x);
      if ((u.array() < box->u_lo.array()).any() || (u.array() > box->u_hi.array()).any())
        return false;
      Vector x_next = a_cl * x;
      if (x_next.dot(out.p * x_next) > c * (1.0 + 1e-9)) return false;
    }
    return true;
  };

  // Analytic box fit: the largest |x_i| over {x'Px <= c} is sqrt(c (P^-1)_ii),
  // and the terminal law's reach is sqrt(c (K P^-1 K')_jj). Start there, then
  // certify by sampling and bisect downward if numerics disagree.
  Matrix p_inv = Matrix(out.p).fullPivLu().inverse();
  Matrix ku = out.k * p_inv * out.k.transpose();
  double c_fit = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double reach = std::max(p_inv(i, i), 0.0);
    double half = std::min(box->x_hi[i], -box->x_lo[i]);
    if (reach > 0) c_fit = std::min(c_fit, half * half / reach);
  }
  for (Eigen::Index j = 0; j < ku.rows(); ++j) {
    double reach = std::max(ku(j, j), 0.0);
    double half = std::min(box->u_hi[j], -box->u_lo[j]);
    if (reach > 0) c_fit = std::min(c_fit, half * half / reach);
  }
  if (!std::isfinite(c_fit)) c_fit = 1.0;

  double good = c_fit;
  if (!certified(good)) {
    double bad = good;
    int halvings = 0;
    do {
      bad = good;
      good *= 0.5;
      if (++halvings > 200) throw std::runtime_error("compute_terminal_ingredients: no certifiable radius");
    } while (!certified(good));
    for (int it = 0; it < 40; ++it) {
      double mid = 0.5 * (good + bad);
      (certified(mid) ? good : bad) = mid;
    }
  }
  if (!certified(good))
    throw std::runtime_error("compute_terminal_ingredients: certification lost after refinement");
  out.c = good;
  return out;
}

}  // namespace hydro::mpc
