#include "hydro/mpc/margins.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hydro::mpc {

std::vector<Matrix> propagate_covariance(const Matrix& sigma0, const std::vector<Matrix>& a_seq,
                                         const Matrix& sigma_w, int horizon) {
  const auto d = sigma0.rows();
  if (sigma0.cols() != d) throw std::invalid_argument("propagate_covariance: Sigma0 must be square");
  if (sigma_w.rows() != d || sigma_w.cols() != d)
    throw std::invalid_argument("propagate_covariance: Sigma_w shape mismatch");
  if (horizon < 1) throw std::invalid_argument("propagate_covariance: horizon must be >= 1");
  if (a_seq.empty() && horizon > 1)
    throw std::invalid_argument("propagate_covariance: need at least one A matrix");

  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(horizon));
  Matrix sigma = 0.5 * (sigma0 + sigma0.transpose().eval());
  out.push_back(sigma);
  for (int k = 1; k < horizon; ++k) {
    const Matrix& a = a_seq[std::min<size_t>(static_cast<size_t>(k - 1), a_seq.size() - 1)];
    if (a.rows() != d || a.cols() != d)
      throw std::invalid_argument("propagate_covariance: A shape mismatch");
    sigma = a * sigma * a.transpose() + sigma_w;
    sigma = 0.5 * (sigma + sigma.transpose().eval());
    out.push_back(sigma);
  }
  return out;
}

std::vector<double> horizon_risk(double zeta_t, double lambda_d, int horizon,
                                 double floor_factor) {
  if (zeta_t < 0) throw std::invalid_argument("horizon_risk: risk must be nonnegative");
  if (horizon < 1) throw std::invalid_argument("horizon_risk: horizon must be >= 1");
  std::vector<double> out(static_cast<size_t>(horizon));
  const double floor = floor_factor * zeta_t;
  for (int k = 0; k < horizon; ++k)
    out[static_cast<size_t>(k)] = std::max(zeta_t * std::exp(-lambda_d * k), floor);
  return out;
}

double ema_smooth(double prev, double now, double mu) {
  if (mu <= 0.0 || mu > 1.0) throw std::invalid_argument("ema_smooth: mu must be in (0, 1]");
  return (1.0 - mu) * prev + mu * now;
}

MarginResult safety_margins(const std::vector<Matrix>& covariances,
                            const std::vector<double>& risk, double kappa, double eta,
                            double e_bar, const Vector& y_min, const Vector& y_max) {
  if (covariances.size() != risk.size())
    throw std::invalid_argument("safety_margins: covariance/risk length mismatch");
  if (covariances.empty()) throw std::invalid_argument("safety_margins: empty horizon");
  const auto d = covariances.front().rows();
  if (y_min.size() != d || y_max.size() != d)
    throw std::invalid_argument("safety_margins: bound dimension mismatch");

  MarginResult out;
  out.margins.reserve(covariances.size());
  for (size_t k = 0; k < covariances.size(); ++k) {
    const Matrix& sigma = covariances[k];
    if (sigma.rows() != d || sigma.cols() != d)
      throw std::invalid_argument("safety_margins: covariance shape mismatch");
    Vector margin(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double sd = std::sqrt(std::max(sigma(i, i), 0.0));
      const double backed = kappa * sd + std::max(eta * risk[k], e_bar);
      const double half_width = 0.5 * (y_max[i] - y_min[i]);
      if (half_width <= 0) throw std::invalid_argument("safety_margins: empty output box");
      margin[i] = backed;
      if (backed > half_width) {
        margin[i] = half_width;
        out.clipped = true;
      }
    }
    out.margins.push_back(std::move(margin));
  }
  return out;
}

}  // namespace hydro::mpc
