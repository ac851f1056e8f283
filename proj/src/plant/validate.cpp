#include "hydro/plant/validate.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::plant {

std::vector<ChannelValidation> validate_steady_state(const Matrix& reference,
                                                     const Matrix& candidate) {
  if (reference.rows() != candidate.rows() || reference.cols() != candidate.cols())
    throw std::invalid_argument("validate_steady_state: shape mismatch, reference " +
                                std::to_string(reference.rows()) + "x" +
                                std::to_string(reference.cols()) + " vs candidate " +
                                std::to_string(candidate.rows()) + "x" +
                                std::to_string(candidate.cols()));
  if (reference.rows() < 2)
    throw std::invalid_argument("validate_steady_state: need at least 2 samples");
  std::vector<ChannelValidation> out(static_cast<std::size_t>(reference.cols()));
  for (Eigen::Index c = 0; c < reference.cols(); ++c) {
    auto& v = out[static_cast<std::size_t>(c)];
    const double range = reference.col(c).maxCoeff() - reference.col(c).minCoeff();
    const double rmse = std::sqrt((reference.col(c) - candidate.col(c)).squaredNorm() /
                                  static_cast<double>(reference.rows()));
    const double floor = 1e-12 * std::max(1.0, reference.col(c).cwiseAbs().maxCoeff());
    if (range < floor) {
      v.constant_reference = true;
      v.nrmse = 0.0;
    } else {
      v.nrmse = rmse / range;
    }
  }
  return out;
}

}  // namespace hydro::plant
