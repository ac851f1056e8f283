#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hydro/nn/layers.hpp"
#include "hydro/nn/optim.hpp"
#include "hydro/nn/tensor.hpp"

namespace hydro::ade {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Anomaly discrimination engine: residual windows -> BiGRU embedding ->
// three-class softmax, statistically gated by an MMD permutation test.
// ---------------------------------------------------------------------------

struct AdeConfig {
  int window = 50;
  int window_extended = 75;  // drop-in option for slow drift attacks
  int hidden = 64;           // per direction
  double beta = 0.1;         // MMD regularization weight
  double gamma = 0.8;        // confidence gate used downstream
  int permutations = 200;
  double alpha = 0.05;
  int min_reference = 200;
  int validation_batch = 8;  // embeddings pooled into one gate test

  // The separation-maximizing objective subtracts beta * MMD^2; set +1 to
  // reproduce the literal additive penalty instead.
  int mmd_sign = -1;

  double learning_rate = 5e-4;
  int batch = 32;
  int epochs = 150;
  int patience = 15;
  double weight_decay = 1e-4;

  void validate() const;  // throws std::invalid_argument
};

// Per-channel residual scale estimated from normal operation; the encoder
// consumes residuals whitened by it.
struct ResidualStats {
  Matrix covariance;  // d_r x d_r, symmetric PSD
  Vector mean;
  Vector stddev;  // sqrt(diag(covariance)), floored at 1e-9
};

ResidualStats compute_residual_stats(const std::vector<Vector>& residuals);

struct AdeParams {
  int window = 50;
  int d_r = 0;  // residual channels
  int d_h = 64;

  nn::GruParams fwd, bwd;
  Matrix w_cls;  // [3, 2 d_h]
  Vector b_cls;

  Vector r_mean, r_std;  // whitening frame for incoming windows

  int d_z() const { return 2 * d_h; }
};

AdeParams init_ade(const AdeConfig& cfg, int d_r, std::uint64_t seed);

// Sliding window over a residual stream: rows t-W+1 .. t, or nothing while
// fewer than W residuals exist (the pipeline then reports N, confidence 0).
std::optional<Matrix> build_window(const std::vector<Vector>& stream, int t, int w);

// Final forward hidden state concatenated with the final hidden state of a
// second GRU run over the reversed window. Whitening is applied internally.
Vector encode(const Matrix& window, const AdeParams& p);

// training-time variant: caches every step for backpropagation through time
struct EncodeCache {
  Matrix whitened;
  std::vector<nn::GruCache> fwd, bwd;
};

Vector encode_cached(const Matrix& window, const AdeParams& p, EncodeCache& cache);

struct AdeGrads {
  nn::GruParams fwd, bwd;
  Matrix d_w_cls;
  Vector d_b_cls;
};

AdeGrads zero_ade_grads(const AdeParams& p);

// backprop d_z through both directions, accumulating encoder gradients
void encode_backward(const AdeParams& p, const EncodeCache& cache, const Vector& d_z,
                     AdeGrads& grads);

std::vector<nn::ParamRef> collect_ade_params(AdeParams& p, AdeGrads& g, bool classifier_only);

void save_ade(const AdeParams& p, const std::string& path);
AdeParams load_ade(const std::string& path);

}  // namespace hydro::ade
