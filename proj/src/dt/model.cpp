#include "hydro/dt/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hydro/core/rng.hpp"
#include "hydro/nn/serialize.hpp"

namespace hydro::dt {

void DtConfig::validate() const {
  if (tau < 2) throw std::invalid_argument("DtConfig: tau must be >= 2");
  if (kernel < 1) throw std::invalid_argument("DtConfig: kernel must be >= 1");
  if (hidden < 1) throw std::invalid_argument("DtConfig: hidden must be >= 1");
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw std::invalid_argument("DtConfig: keep_prob must lie in (0, 1]");
  if (n_mc < 2) throw std::invalid_argument("DtConfig: n_mc must be >= 2");
  if (alpha0 < 0.0 || lambda_pipe < 0.0)
    throw std::invalid_argument("DtConfig: physics weights must be >= 0");
  for (int d : dilations)
    if (d < 1) throw std::invalid_argument("DtConfig: dilations must be >= 1");
}

Vector ModelParams::normalize_frame(const Vector& y, const Vector& u) const {
  if (y.size() != d_y || u.size() != d_u)
    throw std::invalid_argument("normalize_frame: channel count mismatch");
  Vector frame(d_x());
  frame.head(d_y) = y;
  frame.tail(d_u) = u;
  return (frame - x_mean).cwiseQuotient(x_std);
}

Vector ModelParams::denormalize_output(const Vector& y_norm) const {
  return y_norm.cwiseProduct(y_std) + y_mean;
}

ModelParams init_model(const DtConfig& cfg, int d_y, int d_u, std::uint64_t seed) {
  cfg.validate();
  if (d_y < 1 || d_u < 0) throw std::invalid_argument("init_model: bad channel counts");

  Rng rng(derive_seed(seed, 0xd7c0de));
  ModelParams p;
  p.tau = cfg.tau;
  p.d_y = d_y;
  p.d_u = d_u;
  p.keep_prob = cfg.keep_prob;

  int c_in = d_y + d_u;
  for (std::size_t b = 0; b < cfg.dilations.size(); ++b) {
    ConvBlock blk;
    blk.dilation = cfg.dilations[b];
    int c_out = cfg.hidden;
    blk.kernel = Tensor({static_cast<std::size_t>(cfg.kernel), static_cast<std::size_t>(c_in),
                         static_cast<std::size_t>(c_out)});
    nn::xavier_fill(blk.kernel.data(), blk.kernel.numel(),
                    static_cast<std::size_t>(cfg.kernel) * c_in, c_out, rng);
    blk.bias = Vector::Zero(c_out);
    if (c_in != c_out) {
      blk.skip = Matrix(c_in, c_out);
      nn::xavier_fill(blk.skip.data(), static_cast<std::size_t>(blk.skip.size()), c_in, c_out,
                      rng);
    }
    p.blocks.push_back(std::move(blk));
    c_in = c_out;
  }

  p.head_w = Matrix(d_y, c_in);
  nn::xavier_fill(p.head_w.data(), static_cast<std::size_t>(p.head_w.size()), c_in, d_y, rng);
  p.head_b = Vector::Zero(d_y);

  p.x_mean = Vector::Zero(d_y + d_u);
  p.x_std = Vector::Ones(d_y + d_u);
  p.y_mean = Vector::Zero(d_y);
  p.y_std = Vector::Ones(d_y);
  return p;
}

Vector forward_normalized(const ModelParams& p, const Matrix& context,
                          const std::vector<Matrix>* masks, ForwardCache* cache) {
  if (context.rows() != p.tau || context.cols() != p.d_x())
    throw std::invalid_argument("forward: context must be [tau, d_y + d_u]");
  if (masks && masks->size() != p.blocks.size())
    throw std::invalid_argument("forward: one dropout mask per block expected");

  if (cache) {
    cache->blocks.clear();
    cache->blocks.reserve(p.blocks.size());
  }

  Matrix x = context;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const ConvBlock& blk = p.blocks[b];
    Matrix act = nn::dilated_causal_conv(x, blk.kernel, blk.bias, blk.dilation);
    act = act.array().tanh();
    Matrix masked = masks ? Matrix(act.cwiseProduct((*masks)[b])) : act;
    Matrix out = blk.skip.size() > 0 ? Matrix(masked + x * blk.skip) : Matrix(masked + x);
    if (cache) cache->blocks.push_back({x, act, masked});
    x = std::move(out);
  }
  if (cache) cache->final_out = x;

  return nn::affine(p.head_w, p.head_b, x.row(p.tau - 1).transpose());
}

ModelGrads zero_grads(const ModelParams& p) {
  ModelGrads g;
  for (const ConvBlock& blk : p.blocks) {
    nn::ConvGrads cg;
    cg.d_kernel = Tensor(blk.kernel.shape());
    cg.d_bias = Vector::Zero(blk.bias.size());
    g.blocks.push_back(std::move(cg));
    g.d_skip.push_back(blk.skip.size() > 0 ? Matrix(Matrix::Zero(blk.skip.rows(), blk.skip.cols()))
                                           : Matrix());
  }
  g.d_head_w = Matrix::Zero(p.head_w.rows(), p.head_w.cols());
  g.d_head_b = Vector::Zero(p.head_b.size());
  return g;
}

Matrix backward_normalized(const ModelParams& p, const ForwardCache& cache,
                           const std::vector<Matrix>* masks, const Vector& d_y_norm,
                           ModelGrads* grads, bool want_input_grad) {
  if (cache.blocks.size() != p.blocks.size())
    throw std::invalid_argument("backward: cache does not match model");

  const Vector h_last = cache.final_out.row(p.tau - 1).transpose();
  nn::AffineGrads head = nn::affine_backward(p.head_w, h_last, d_y_norm);
  if (grads) {
    grads->d_head_w += head.d_W;
    grads->d_head_b += head.d_b;
  }

  Matrix d_out = Matrix::Zero(p.tau, cache.final_out.cols());
  d_out.row(p.tau - 1) = head.d_x.transpose();

  for (int b = static_cast<int>(p.blocks.size()) - 1; b >= 0; --b) {
    const ConvBlock& blk = p.blocks[b];
    const BlockCache& bc = cache.blocks[b];

    // skip path
    Matrix d_in = blk.skip.size() > 0 ? Matrix(d_out * blk.skip.transpose()) : d_out;
    if (grads && blk.skip.size() > 0) grads->d_skip[b] += bc.input.transpose() * d_out;

    // conv -> tanh -> dropout path
    Matrix d_act = masks ? Matrix(d_out.cwiseProduct((*masks)[b])) : d_out;
    Matrix d_pre = d_act.cwiseProduct(
        (Matrix::Ones(bc.act.rows(), bc.act.cols()) - bc.act.cwiseProduct(bc.act)));
    nn::ConvGrads cg = nn::dilated_causal_conv_backward(bc.input, blk.kernel, blk.dilation, d_pre);
    if (grads) {
      for (std::size_t i = 0; i < cg.d_kernel.numel(); ++i)
        grads->blocks[b].d_kernel[i] += cg.d_kernel[i];
      grads->blocks[b].d_bias += cg.d_bias;
    }
    d_out = d_in + cg.d_input;
  }
  return want_input_grad ? d_out : Matrix();
}

std::vector<nn::ParamRef> collect_params(ModelParams& p, ModelGrads& g) {
  std::vector<nn::ParamRef> refs;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    refs.push_back({p.blocks[b].kernel.data(), g.blocks[b].d_kernel.data(),
                    p.blocks[b].kernel.numel()});
    refs.push_back({p.blocks[b].bias.data(), g.blocks[b].d_bias.data(),
                    static_cast<std::size_t>(p.blocks[b].bias.size())});
    if (p.blocks[b].skip.size() > 0)
      refs.push_back({p.blocks[b].skip.data(), g.d_skip[b].data(),
                      static_cast<std::size_t>(p.blocks[b].skip.size())});
  }
  refs.push_back({p.head_w.data(), g.d_head_w.data(), static_cast<std::size_t>(p.head_w.size())});
  refs.push_back({p.head_b.data(), g.d_head_b.data(), static_cast<std::size_t>(p.head_b.size())});
  return refs;
}

std::vector<Matrix> make_dropout_masks(const ModelParams& p, std::uint64_t seed) {
  std::vector<Matrix> masks;
  masks.reserve(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    std::size_t cols = static_cast<std::size_t>(p.blocks[b].bias.size());
    Tensor m = nn::dropout_mask({static_cast<std::size_t>(p.tau), cols}, p.keep_prob,
                                derive_seed(seed, b));
    masks.push_back(m.as_matrix());
  }
  return masks;
}

Vector predict(const Matrix& context, const ModelParams& p) {
  return p.denormalize_output(forward_normalized(p, context));
}

DtPrediction predict_uncertain(const Matrix& context, const ModelParams& p, int n_mc,
                               std::uint64_t seed) {
  if (n_mc < 2) throw std::invalid_argument("predict_uncertain: n_mc must be >= 2");

  DtPrediction out;
  out.samples.reserve(n_mc);
  Vector sum = Vector::Zero(p.d_y);
  for (int n = 0; n < n_mc; ++n) {
    std::vector<Matrix> masks = make_dropout_masks(p, derive_seed(seed, n));
    Vector y = p.denormalize_output(forward_normalized(p, context, &masks));
    sum += y;
    out.samples.push_back(std::move(y));
  }
  out.mean = sum / n_mc;

  out.covariance = Matrix::Zero(p.d_y, p.d_y);
  for (const Vector& y : out.samples) {
    Vector d = y - out.mean;
    out.covariance += d * d.transpose();
  }
  out.covariance /= (n_mc - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization. Weights go out as named tensors; scalars ride in a single
// metadata vector so one file round-trips the whole bundle.
// ---------------------------------------------------------------------------

namespace {

Matrix to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw std::runtime_error("model file: expected rank-2 tensor");
  return t.as_matrix();
}

}  // namespace

void save_model(const ModelParams& p, const std::string& path) {
  std::vector<nn::NamedTensor> out;

  Vector meta(9);
  meta << p.tau, p.d_y, p.d_u, p.keep_prob, p.theta_thresh, p.sigma2_data, p.e_bar, p.e_bar_rel,
      p.l_f;
  out.push_back({"meta", Tensor::from_vector(meta)});

  Vector dil(static_cast<Eigen::Index>(p.blocks.size()));
  for (std::size_t b = 0; b < p.blocks.size(); ++b)
    dil[static_cast<Eigen::Index>(b)] = p.blocks[b].dilation;
  out.push_back({"dilations", Tensor::from_vector(dil)});

  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    std::string base = "block" + std::to_string(b);
    out.push_back({base + ".kernel", p.blocks[b].kernel});
    out.push_back({base + ".bias", Tensor::from_vector(p.blocks[b].bias)});
    if (p.blocks[b].skip.size() > 0)
      out.push_back({base + ".skip", Tensor::from_matrix(p.blocks[b].skip)});
  }
  out.push_back({"head.w", Tensor::from_matrix(p.head_w)});
  out.push_back({"head.b", Tensor::from_vector(p.head_b)});
  out.push_back({"norm.x_mean", Tensor::from_vector(p.x_mean)});
  out.push_back({"norm.x_std", Tensor::from_vector(p.x_std)});
  out.push_back({"norm.y_mean", Tensor::from_vector(p.y_mean)});
  out.push_back({"norm.y_std", Tensor::from_vector(p.y_std)});

  nn::save_tensors(path, out);
}

ModelParams load_model(const std::string& path) {
  std::vector<nn::NamedTensor> in = nn::load_tensors(path);

  ModelParams p;
  Vector meta = nn::find_tensor(in, "meta").as_vector();
  if (meta.size() != 9) throw std::runtime_error("model file: bad metadata block");
  p.tau = static_cast<int>(meta[0]);
  p.d_y = static_cast<int>(meta[1]);
  p.d_u = static_cast<int>(meta[2]);
  p.keep_prob = meta[3];
  p.theta_thresh = meta[4];
  p.sigma2_data = meta[5];
  p.e_bar = meta[6];
  p.e_bar_rel = meta[7];
  p.l_f = meta[8];

  Vector dil = nn::find_tensor(in, "dilations").as_vector();
  for (Eigen::Index b = 0; b < dil.size(); ++b) {
    std::string base = "block" + std::to_string(b);
    ConvBlock blk;
    blk.dilation = static_cast<int>(dil[b]);
    blk.kernel = nn::find_tensor(in, base + ".kernel");
    blk.bias = nn::find_tensor(in, base + ".bias").as_vector();
    if (nn::has_tensor(in, base + ".skip"))
      blk.skip = to_matrix(nn::find_tensor(in, base + ".skip"));
    p.blocks.push_back(std::move(blk));
  }
  p.head_w = to_matrix(nn::find_tensor(in, "head.w"));
  p.head_b = nn::find_tensor(in, "head.b").as_vector();
  p.x_mean = nn::find_tensor(in, "norm.x_mean").as_vector();
  p.x_std = nn::find_tensor(in, "norm.x_std").as_vector();
  p.y_mean = nn::find_tensor(in, "norm.y_mean").as_vector();
  p.y_std = nn::find_tensor(in, "norm.y_std").as_vector();
  return p;
}

}  // namespace hydro::dt
