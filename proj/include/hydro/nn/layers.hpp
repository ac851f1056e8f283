#pragma once

#include <cstdint>
#include <utility>

#include "hydro/core/rng.hpp"
#include "hydro/nn/tensor.hpp"

namespace hydro::nn {

// ---------------------------------------------------------------------------
// Dilated causal 1-D convolution over a [T, C_in] sequence.
//
// y[t, o] = bias[o] + sum_{k, i} x[t - (K-1-k)*dilation, i] * kernel[k, i, o]
//
// Kernel tap k = 0 touches the oldest sample; indices before t = 0 read as
// zero (left padding), so y[t] never depends on inputs after t.
// ---------------------------------------------------------------------------

Matrix dilated_causal_conv(const Matrix& x, const Tensor& kernel, const Vector& bias,
                           int dilation);

struct ConvGrads {
  Matrix d_input;
  Tensor d_kernel;
  Vector d_bias;
};

ConvGrads dilated_causal_conv_backward(const Matrix& x, const Tensor& kernel, int dilation,
                                       const Matrix& d_out);

// ---------------------------------------------------------------------------
// GRU cell. Update gate z, reset gate r, candidate n:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + bn + r .* (Un h + cn))
//   h' = (1 - z) .* n + z .* h
// ---------------------------------------------------------------------------

struct GruParams {
  Matrix Wz, Wr, Wn;   // [d_h, d_x]
  Matrix Uz, Ur, Un;   // [d_h, d_h]
  Vector bz, br, bn, cn;

  static GruParams zeros(Eigen::Index d_h, Eigen::Index d_x);
  void add_scaled(const GruParams& other, double scale);
};

struct GruCache {
  Vector x, h_prev, z, r, n, hn_lin;  // hn_lin = Un h + cn
};

Vector gru_step(const GruParams& p, const Vector& h_prev, const Vector& x,
                GruCache* cache = nullptr);

// Accumulates parameter gradients into acc and returns gradients w.r.t. the
// step inputs. d_h is the loss gradient at the cell output.
struct GruStepGrads {
  Vector d_x, d_h_prev;
};

GruStepGrads gru_backward(const GruParams& p, const GruCache& cache, const Vector& d_h,
                          GruParams& acc);

// ---------------------------------------------------------------------------
// Affine map y = W x + b with W of shape [d_out, d_in].
// ---------------------------------------------------------------------------

Vector affine(const Matrix& W, const Vector& b, const Vector& x);

struct AffineGrads {
  Matrix d_W;
  Vector d_b, d_x;
};

AffineGrads affine_backward(const Matrix& W, const Vector& x, const Vector& d_y);

// ---------------------------------------------------------------------------
// Inverted dropout. Mask entries are 0 with probability 1 - keep_prob and
// 1 / keep_prob otherwise, so the masked signal is unbiased in expectation.
// keep_prob must lie in (0, 1]; keep_prob = 1 yields the identity mask.
// ---------------------------------------------------------------------------

Tensor dropout_mask(const std::vector<std::size_t>& shape, double keep_prob,
                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Softmax + cross-entropy, numerically stabilized by max subtraction.
// Gradient w.r.t. logits is probs - one_hot(label).
// ---------------------------------------------------------------------------

struct SoftmaxXent {
  double loss;
  Vector probs;
  Vector d_logits;
};

SoftmaxXent softmax_xent(const Vector& logits, int label);
Vector softmax(const Vector& logits);

// ---------------------------------------------------------------------------
// Spectral normalization via power iteration. The left vector u persists
// across calls so repeated estimates refine rather than restart. A zero
// matrix reports the floor sigma (1e-12) and is returned unchanged.
// ---------------------------------------------------------------------------

inline constexpr double kSigmaFloor = 1e-12;

class SpectralNorm {
public:
  SpectralNorm(Eigen::Index rows, std::uint64_t seed);
  // runs `iterations` power steps against W, returns the sigma estimate
  double estimate(const Matrix& W, int iterations);

private:
  Vector u_;
};

// one-shot convenience: fresh persistent vector seeded from `seed`
std::pair<Matrix, double> spectral_normalize(const Matrix& W, int iterations,
                                             std::uint64_t seed = 0x5EEDu);

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Glorot/Xavier uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out))
void xavier_fill(double* data, std::size_t n, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng);

}  // namespace hydro::nn
