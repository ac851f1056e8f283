#include "hydro/dt/jacobian.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::dt {

namespace {

// Jacobian of the denormalized prediction w.r.t. the raw context entries,
// flattened row-major to [d_y, tau * d_x]. One backward pass per output.
Matrix full_jacobian(const ModelParams& p, const Matrix& context) {
  ForwardCache cache;
  forward_normalized(p, context, nullptr, &cache);

  const int d_x = p.d_x();
  Matrix jac(p.d_y, p.tau * d_x);
  for (int i = 0; i < p.d_y; ++i) {
    Vector d_y_norm = Vector::Zero(p.d_y);
    d_y_norm[i] = p.y_std[i];  // chain through output denormalization
    Matrix d_ctx = backward_normalized(p, cache, nullptr, d_y_norm, nullptr, true);
    for (int t = 0; t < p.tau; ++t)
      for (int c = 0; c < d_x; ++c)
        jac(i, t * d_x + c) = d_ctx(t, c) / p.x_std[c];  // and input normalization
  }
  return jac;
}

}  // namespace

Linearization jacobians(const Matrix& context, const Vector& u_prev, const ModelParams& p) {
  if (u_prev.size() != p.d_u) throw std::invalid_argument("jacobians: u_prev size mismatch");

  Matrix ctx = context;
  for (int j = 0; j < p.d_u; ++j) {
    int c = p.d_y + j;
    ctx(p.tau - 1, c) = (u_prev[j] - p.x_mean[c]) / p.x_std[c];
  }

  Matrix jac = full_jacobian(p, ctx);
  const int d_x = p.d_x();
  const int last = (p.tau - 1) * d_x;

  Linearization lin;
  lin.a = jac.block(0, last, p.d_y, p.d_y);
  lin.b = jac.block(0, last + p.d_y, p.d_y, p.d_u);
  return lin;
}

LipschitzEstimate estimate_lipschitz(const ModelParams& p, const std::vector<Matrix>& contexts) {
  if (contexts.empty()) throw std::invalid_argument("estimate_lipschitz: no contexts given");

  LipschitzEstimate est;
  est.sample_norms.reserve(contexts.size());
  for (std::size_t n = 0; n < contexts.size(); ++n) {
    Matrix jac = full_jacobian(p, contexts[n]);
    auto [unused, sigma] = nn::spectral_normalize(jac, 20, derive_seed(0x11f5, n));
    est.sample_norms.push_back(sigma);
    if (sigma > est.l_f) est.l_f = sigma;
  }
  return est;
}

}  // namespace hydro::dt
