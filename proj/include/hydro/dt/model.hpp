#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydro/nn/layers.hpp"
#include "hydro/nn/optim.hpp"
#include "hydro/nn/tensor.hpp"

namespace hydro::dt {

using nn::Matrix;
using nn::Tensor;
using nn::Vector;

// ---------------------------------------------------------------------------
// Digital twin configuration. Defaults follow the reference operating point:
// context window tau = 10, four dilated blocks {1, 2, 4, 8}, kernel 3,
// hidden width 128, MC-dropout keep probability 0.9 with 50 samples.
// ---------------------------------------------------------------------------

struct DtConfig {
  int tau = 10;
  std::vector<int> dilations = {1, 2, 4, 8};
  int kernel = 3;
  int hidden = 128;
  double keep_prob = 0.9;
  int n_mc = 50;

  double alpha0 = 0.05;    // base physics weight
  double lambda_pipe = 0.02;

  double learning_rate = 1e-3;
  int batch = 64;
  int epochs = 200;
  int patience = 20;
  double weight_decay = 1e-5;

  void validate() const;  // throws std::invalid_argument
};

// One TCN block: dilated causal conv -> tanh -> dropout, plus a skip path
// (identity when widths match, otherwise a 1x1 projection).
struct ConvBlock {
  Tensor kernel;  // [K, C_in, C_out]
  Vector bias;    // C_out
  Matrix skip;    // [C_in, C_out] projection; 0x0 means identity skip
  int dilation = 1;
};

// Self-contained inference bundle: weights, the normalization frame they were
// trained in, and the empirical constants downstream stages consume.
struct ModelParams {
  int tau = 10;
  int d_y = 0;  // sensor channels (first d_y context columns)
  int d_u = 0;  // actuator channels (remaining columns)
  double keep_prob = 0.9;

  std::vector<ConvBlock> blocks;  // may be empty: head then reads the last frame
  Matrix head_w;                  // [d_y, C_last]
  Vector head_b;

  Vector x_mean, x_std;  // per context channel, length d_y + d_u
  Vector y_mean, y_std;  // per output channel, length d_y

  double theta_thresh = 1.0;  // median MC covariance trace after warm-up
  double sigma2_data = 1.0;   // mean residual variance of the warm-up epoch
  double e_bar = 0.0;         // 99.9th pct validation error norm, sensor units
  double e_bar_rel = 0.0;     // 99.9th pct validation relative mismatch
  double l_f = 0.0;           // empirical Lipschitz bound

  int d_x() const { return d_y + d_u; }

  // raw sensor/actuator values <-> the network's normalized frame
  Vector normalize_frame(const Vector& y, const Vector& u) const;
  Vector denormalize_output(const Vector& y_norm) const;
};

ModelParams init_model(const DtConfig& cfg, int d_y, int d_u, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward pass over a normalized context [tau, d_x]. Masks, when given, carry
// one [tau, C_out] inverted-dropout mask per block; empty = dropout off.
// ---------------------------------------------------------------------------

struct BlockCache {
  Matrix input;
  Matrix act;     // tanh output, pre-dropout
  Matrix masked;  // act .* mask (equals act when dropout is off)
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Matrix final_out;  // output of the last stage, [tau, C_last]
};

Vector forward_normalized(const ModelParams& p, const Matrix& context,
                          const std::vector<Matrix>* masks = nullptr,
                          ForwardCache* cache = nullptr);

// Parameter gradients mirroring ModelParams' weight layout.
struct ModelGrads {
  std::vector<nn::ConvGrads> blocks;  // d_input unused per block
  std::vector<Matrix> d_skip;
  Matrix d_head_w;
  Vector d_head_b;
};

ModelGrads zero_grads(const ModelParams& p);

// Backpropagates d_y_norm through the cached forward pass. Accumulates into
// `grads`; returns the gradient w.r.t. the normalized context when asked.
Matrix backward_normalized(const ModelParams& p, const ForwardCache& cache,
                           const std::vector<Matrix>* masks, const Vector& d_y_norm,
                           ModelGrads* grads, bool want_input_grad = false);

// Adam adapters: matching views over weights and gradients.
std::vector<nn::ParamRef> collect_params(ModelParams& p, ModelGrads& g);

// per-block inverted dropout masks, seeds derived per block from `seed`
std::vector<Matrix> make_dropout_masks(const ModelParams& p, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// Deterministic prediction (dropout off); context is normalized, the output
// is denormalized back to sensor units.
Vector predict(const Matrix& context, const ModelParams& p);

struct DtPrediction {
  Vector mean;                  // sensor units
  Matrix covariance;            // d_y x d_y, unbiased over the MC samples
  std::vector<Vector> samples;  // denormalized per-pass predictions
};

// n_mc stochastic passes with independent mask seeds derived from `seed`.
DtPrediction predict_uncertain(const Matrix& context, const ModelParams& p, int n_mc,
                               std::uint64_t seed);

// model file = named tensors + metadata block (normalization, tau, constants)
void save_model(const ModelParams& p, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace hydro::dt
