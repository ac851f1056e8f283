#include "hydro/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace hydro::nn {

namespace {

Eigen::Map<const Matrix> kernel_slice(const Tensor& kernel, std::size_t k) {
  const std::size_t c_in = kernel.dim(1), c_out = kernel.dim(2);
  return {kernel.data() + k * c_in * c_out, static_cast<Eigen::Index>(c_in),
          static_cast<Eigen::Index>(c_out)};
}

Eigen::Map<Matrix> kernel_slice(Tensor& kernel, std::size_t k) {
  const std::size_t c_in = kernel.dim(1), c_out = kernel.dim(2);
  return {kernel.data() + k * c_in * c_out, static_cast<Eigen::Index>(c_in),
          static_cast<Eigen::Index>(c_out)};
}

void check_conv_args(const Matrix& x, const Tensor& kernel, int dilation) {
  if (kernel.rank() != 3)
    throw std::invalid_argument("dilated_causal_conv: kernel must have shape [K, C_in, C_out], got " +
                                shape_str(kernel.shape()));
  if (dilation < 1)
    throw std::invalid_argument("dilated_causal_conv: dilation must be >= 1, got " +
                                std::to_string(dilation));
  if (static_cast<std::size_t>(x.cols()) != kernel.dim(1))
    throw std::invalid_argument("dilated_causal_conv: input has " + std::to_string(x.cols()) +
                                " channels but kernel expects " + std::to_string(kernel.dim(1)));
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Matrix dilated_causal_conv(const Matrix& x, const Tensor& kernel, const Vector& bias,
                           int dilation) {
  check_conv_args(x, kernel, dilation);
  const Eigen::Index T = x.rows();
  const auto K = static_cast<Eigen::Index>(kernel.dim(0));
  const auto c_out = static_cast<Eigen::Index>(kernel.dim(2));
  if (bias.size() != c_out)
    throw std::invalid_argument("dilated_causal_conv: bias size " + std::to_string(bias.size()) +
                                " != C_out " + std::to_string(c_out));
  Matrix y = bias.transpose().replicate(T, 1);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index offset = (K - 1 - k) * dilation;  // how far back tap k reaches
    if (offset >= T) continue;
    y.bottomRows(T - offset) += x.topRows(T - offset) * kernel_slice(kernel, k);
  }
  return y;
}

ConvGrads dilated_causal_conv_backward(const Matrix& x, const Tensor& kernel, int dilation,
                                       const Matrix& d_out) {
  check_conv_args(x, kernel, dilation);
  const Eigen::Index T = x.rows();
  const auto K = static_cast<Eigen::Index>(kernel.dim(0));
  if (d_out.rows() != T || d_out.cols() != static_cast<Eigen::Index>(kernel.dim(2)))
    throw std::invalid_argument("dilated_causal_conv_backward: d_out shape mismatch");
  ConvGrads g;
  g.d_input = Matrix::Zero(T, x.cols());
  g.d_kernel = Tensor::zeros(kernel.shape());
  g.d_bias = d_out.colwise().sum();
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index offset = (K - 1 - k) * dilation;
    if (offset >= T) continue;
    const Eigen::Index n = T - offset;
    g.d_input.topRows(n) += d_out.bottomRows(n) * kernel_slice(kernel, k).transpose();
    kernel_slice(g.d_kernel, k) += x.topRows(n).transpose() * d_out.bottomRows(n);
  }
  return g;
}

GruParams GruParams::zeros(Eigen::Index d_h, Eigen::Index d_x) {
  GruParams p;
  p.Wz = Matrix::Zero(d_h, d_x);
  p.Wr = Matrix::Zero(d_h, d_x);
  p.Wn = Matrix::Zero(d_h, d_x);
  p.Uz = Matrix::Zero(d_h, d_h);
  p.Ur = Matrix::Zero(d_h, d_h);
  p.Un = Matrix::Zero(d_h, d_h);
  p.bz = Vector::Zero(d_h);
  p.br = Vector::Zero(d_h);
  p.bn = Vector::Zero(d_h);
  p.cn = Vector::Zero(d_h);
  return p;
}

void GruParams::add_scaled(const GruParams& o, double s) {
  Wz += s * o.Wz; Wr += s * o.Wr; Wn += s * o.Wn;
  Uz += s * o.Uz; Ur += s * o.Ur; Un += s * o.Un;
  bz += s * o.bz; br += s * o.br; bn += s * o.bn; cn += s * o.cn;
}

Vector gru_step(const GruParams& p, const Vector& h_prev, const Vector& x, GruCache* cache) {
  if (x.size() != p.Wz.cols())
    throw std::invalid_argument("gru_step: input size " + std::to_string(x.size()) +
                                " != expected " + std::to_string(p.Wz.cols()));
  if (h_prev.size() != p.Uz.cols())
    throw std::invalid_argument("gru_step: hidden size " + std::to_string(h_prev.size()) +
                                " != expected " + std::to_string(p.Uz.cols()));
  const Vector z = (p.Wz * x + p.Uz * h_prev + p.bz).unaryExpr([](double v) { return sigmoid(v); });
  const Vector r = (p.Wr * x + p.Ur * h_prev + p.br).unaryExpr([](double v) { return sigmoid(v); });
  const Vector hn_lin = p.Un * h_prev + p.cn;
  const Vector n = (p.Wn * x + p.bn + r.cwiseProduct(hn_lin)).array().tanh();
  Vector h = (Vector::Ones(z.size()) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (cache) *cache = {x, h_prev, z, r, n, hn_lin};
  return h;
}

GruStepGrads gru_backward(const GruParams& p, const GruCache& c, const Vector& d_h,
                          GruParams& acc) {
  // h = (1-z).*n + z.*h_prev
  const Vector d_z = d_h.cwiseProduct(c.h_prev - c.n);
  const Vector d_n = d_h.cwiseProduct(Vector::Ones(c.z.size()) - c.z);
  Vector d_h_prev = d_h.cwiseProduct(c.z);

  // n = tanh(a), a = Wn x + bn + r .* hn_lin
  const Vector d_a = d_n.cwiseProduct(Vector::Ones(c.n.size()) - c.n.cwiseProduct(c.n));
  const Vector d_r = d_a.cwiseProduct(c.hn_lin);
  const Vector d_hn_lin = d_a.cwiseProduct(c.r);

  // sigmoid pre-activations
  const Vector d_az = d_z.cwiseProduct(c.z.cwiseProduct(Vector::Ones(c.z.size()) - c.z));
  const Vector d_ar = d_r.cwiseProduct(c.r.cwiseProduct(Vector::Ones(c.r.size()) - c.r));

  acc.Wz += d_az * c.x.transpose();
  acc.Wr += d_ar * c.x.transpose();
  acc.Wn += d_a * c.x.transpose();
  acc.Uz += d_az * c.h_prev.transpose();
  acc.Ur += d_ar * c.h_prev.transpose();
  acc.Un += d_hn_lin * c.h_prev.transpose();
  acc.bz += d_az;
  acc.br += d_ar;
  acc.bn += d_a;
  acc.cn += d_hn_lin;

  GruStepGrads g;
  g.d_x = p.Wz.transpose() * d_az + p.Wr.transpose() * d_ar + p.Wn.transpose() * d_a;
  g.d_h_prev = d_h_prev + p.Uz.transpose() * d_az + p.Ur.transpose() * d_ar +
               p.Un.transpose() * d_hn_lin;
  return g;
}

Vector affine(const Matrix& W, const Vector& b, const Vector& x) {
  if (W.cols() != x.size())
    throw std::invalid_argument("affine: W has " + std::to_string(W.cols()) +
                                " columns but x has " + std::to_string(x.size()) + " entries");
  if (W.rows() != b.size())
    throw std::invalid_argument("affine: W has " + std::to_string(W.rows()) +
                                " rows but b has " + std::to_string(b.size()) + " entries");
  return W * x + b;
}

AffineGrads affine_backward(const Matrix& W, const Vector& x, const Vector& d_y) {
  AffineGrads g;
  g.d_W = d_y * x.transpose();
  g.d_b = d_y;
  g.d_x = W.transpose() * d_y;
  return g;
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double keep_prob,
                    std::uint64_t seed) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0)
    throw std::invalid_argument("dropout_mask: keep_prob must be in (0, 1], got " +
                                std::to_string(keep_prob));
  Tensor mask(shape);
  if (keep_prob == 1.0) {
    mask.fill(1.0);
    return mask;
  }
  Rng rng(seed);
  const double inv_keep = 1.0 / keep_prob;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    mask[i] = rng.uniform() < keep_prob ? inv_keep : 0.0;
  return mask;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

SoftmaxXent softmax_xent(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) +
                                " classes");
  const double m = logits.maxCoeff();
  const Vector shifted = logits.array() - m;
  const double log_sum = std::log(shifted.array().exp().sum());
  SoftmaxXent out;
  out.probs = (shifted.array() - log_sum).exp();
  out.loss = log_sum - shifted[label];
  out.d_logits = out.probs;
  out.d_logits[label] -= 1.0;
  return out;
}

SpectralNorm::SpectralNorm(Eigen::Index rows, std::uint64_t seed) : u_(rows) {
  Rng rng(seed);
  for (Eigen::Index i = 0; i < rows; ++i) u_[i] = rng.normal();
  const double norm = u_.norm();
  u_ /= (norm > 0 ? norm : 1.0);
}

double SpectralNorm::estimate(const Matrix& W, int iterations) {
  if (W.rows() != u_.size())
    throw std::invalid_argument("SpectralNorm: matrix rows " + std::to_string(W.rows()) +
                                " != persistent vector size " + std::to_string(u_.size()));
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector v = W.transpose() * u_;
    const double vn = v.norm();
    if (vn < kSigmaFloor) return kSigmaFloor;
    v /= vn;
    Vector wu = W * v;
    sigma = wu.norm();
    if (sigma < kSigmaFloor) return kSigmaFloor;
    u_ = wu / sigma;
  }
  return sigma;
}

std::pair<Matrix, double> spectral_normalize(const Matrix& W, int iterations,
                                             std::uint64_t seed) {
  SpectralNorm sn(W.rows(), seed);
  const double sigma = sn.estimate(W, iterations);
  if (sigma <= kSigmaFloor) return {W, kSigmaFloor};
  return {W / sigma, sigma};
}

void xavier_fill(double* data, std::size_t n, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(-a, a);
}

}  // namespace hydro::nn
