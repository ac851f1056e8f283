#include "hydro/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::nn {

void Adam::step(const std::vector<ParamRef>& refs) {
  if (m_.empty()) {
    m_.resize(refs.size());
    v_.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      m_[i].assign(refs[i].n, 0.0);
      v_[i].assign(refs[i].n, 0.0);
    }
  }
  if (refs.size() != m_.size())
    throw std::invalid_argument("Adam::step: parameter block count changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    if (r.n != m_[i].size())
      throw std::invalid_argument("Adam::step: parameter block size changed between steps");
    for (std::size_t j = 0; j < r.n; ++j) {
      const double g = r.grad[j] + cfg_.weight_decay * r.param[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m_[i][j] / bc1;
      const double v_hat = v_[i][j] / bc2;
      r.param[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

double ReduceLROnPlateau::observe(double metric, double current_lr) {
  if (metric < best_ - 1e-12) {
    best_ = metric;
    bad_epochs_ = 0;
    return current_lr;
  }
  if (++bad_epochs_ > patience_) {
    bad_epochs_ = 0;
    const double next = current_lr * factor_;
    return next < min_lr_ ? min_lr_ : next;
  }
  return current_lr;
}

double CosineAnnealingLR::lr_at(int epoch) const {
  if (t_max_ <= 0) return base_lr_;
  const double frac = static_cast<double>(epoch < t_max_ ? epoch : t_max_) / t_max_;
  return eta_min_ + 0.5 * (base_lr_ - eta_min_) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace hydro::nn
