#include "hydro/mpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace hydro::mpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

QpResult solve_qp(const QpProblem& qp) {
  const auto n = qp.h.rows();
  const auto m = qp.c.rows();
  if (qp.h.cols() != n || qp.f.size() != n)
    throw std::invalid_argument("solve_qp: objective shape mismatch");
  if (m > 0 && qp.c.cols() != n)
    throw std::invalid_argument("solve_qp: constraint shape mismatch");
  if (qp.d.size() != m) throw std::invalid_argument("solve_qp: rhs length mismatch");

  // Factor H once, with a scale-aware ridge: the condensed Hessians here are
  // SPD in exact arithmetic but can be numerically borderline.
  const double h_scale = std::max(1.0, qp.h.cwiseAbs().maxCoeff());
  Eigen::LLT<Eigen::MatrixXd> llt;
  double ridge = 1e-12;
  for (;; ridge *= 100.0) {
    Eigen::MatrixXd reg = Eigen::MatrixXd(qp.h) +
                          ridge * h_scale * Eigen::MatrixXd::Identity(n, n);
    llt.compute(reg);
    if (llt.info() == Eigen::Success) break;
    if (ridge > 1e-4) throw std::invalid_argument("solve_qp: H is not positive definite");
  }
  auto h_solve = [&](const Vector& v) { return Vector(llt.solve(Eigen::VectorXd(v))); };

  QpResult res;
  res.x = h_solve(Vector(-qp.f));
  res.duals = Vector::Zero(m);
  if (m == 0) {
    res.status = QpStatus::optimal;
    return res;
  }

  const double viol_tol = 1e-9 * std::max(1.0, qp.d.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> active;
  std::vector<double> mult;
  const int max_iter = 200 + 50 * static_cast<int>(m + n);

  auto drop = [&](size_t j) {
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
    mult.erase(mult.begin() + static_cast<std::ptrdiff_t>(j));
  };

  for (;;) {
    // Most violated inequality becomes the incoming constraint.
    Eigen::Index p = -1;
    double worst = viol_tol;
    Vector slack = qp.c * res.x - qp.d;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (slack[i] > worst) {
        worst = slack[i];
        p = i;
      }
    }
    if (p < 0) {
      for (size_t j = 0; j < active.size(); ++j) res.duals[active[j]] = mult[j];
      res.status = QpStatus::optimal;
      return res;
    }

    const Vector n_p = -qp.c.row(p).transpose();
    const double b_p = -qp.d[p];
    double u_p = 0.0;

    for (;;) {
      if (++res.iterations > max_iter) {
        res.status = QpStatus::iteration_limit;
        return res;
      }
      const double s_p = n_p.dot(res.x) - b_p;  // negative while p is violated
      const Vector hn = h_solve(n_p);

      Vector r;
      Vector z = hn;
      if (!active.empty()) {
        const auto k = static_cast<Eigen::Index>(active.size());
        Matrix nact(n, k);
        for (Eigen::Index j = 0; j < k; ++j) nact.col(j) = -qp.c.row(active[static_cast<size_t>(j)]).transpose();
        Matrix hin(n, k);
        for (Eigen::Index j = 0; j < k; ++j) hin.col(j) = h_solve(Vector(nact.col(j)));
        Matrix gram = nact.transpose() * hin;
        r = Vector(gram.fullPivLu().solve(Vector(nact.transpose() * hn)));
        z = hn - hin * r;
      }

      // Longest dual step before an active multiplier hits zero.
      double t1 = kInf;
      size_t blocking = 0;
      for (size_t j = 0; j < active.size(); ++j) {
        if (r[static_cast<Eigen::Index>(j)] > 1e-12) {
          const double cand = mult[j] / r[static_cast<Eigen::Index>(j)];
          if (cand < t1) {
            t1 = cand;
            blocking = j;
          }
        }
      }
      // Primal step that makes constraint p tight.
      const double denom = n_p.dot(z);
      const double t2 = denom > 1e-12 ? -s_p / denom : kInf;

      const double t = std::min(t1, t2);
      if (t == kInf) {
        res.status = QpStatus::infeasible;  // dual unbounded along this direction
        return res;
      }

      if (t2 == kInf) {
        // Dual-only move: constraint p stays violated, blocking row leaves.
        for (size_t j = 0; j < active.size(); ++j) mult[j] -= t * r[static_cast<Eigen::Index>(j)];
        u_p += t;
        drop(blocking);
        continue;
      }

      res.x += t * z;
      for (size_t j = 0; j < active.size(); ++j) mult[j] -= t * r[static_cast<Eigen::Index>(j)];
      u_p += t;
      if (t == t2) {
        active.push_back(p);
        mult.push_back(u_p);
        break;
      }
      drop(blocking);
    }
  }
}

}  // namespace hydro::mpc
