#include "hydro/ade/encoder.hpp"

#include <stdexcept>

#include "hydro/core/rng.hpp"
#include "hydro/nn/serialize.hpp"

namespace hydro::ade {

void AdeConfig::validate() const {
  if (window < 2) throw std::invalid_argument("AdeConfig: window must be >= 2");
  if (hidden < 1) throw std::invalid_argument("AdeConfig: hidden must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("AdeConfig: gamma must lie in (0, 1)");
  if (beta < 0.0) throw std::invalid_argument("AdeConfig: beta must be >= 0");
  if (permutations < 1) throw std::invalid_argument("AdeConfig: permutations must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("AdeConfig: alpha must lie in (0, 1]");
  if (validation_batch < 2)
    throw std::invalid_argument("AdeConfig: validation_batch must be >= 2");
  if (mmd_sign != 1 && mmd_sign != -1)
    throw std::invalid_argument("AdeConfig: mmd_sign must be +1 or -1");
}

ResidualStats compute_residual_stats(const std::vector<Vector>& residuals) {
  if (residuals.empty())
    throw std::invalid_argument("compute_residual_stats: empty residual set");

  const Eigen::Index d = residuals.front().size();
  ResidualStats st;
  st.mean = Vector::Zero(d);
  for (const Vector& r : residuals) st.mean += r;
  st.mean /= static_cast<double>(residuals.size());

  st.covariance = Matrix::Zero(d, d);
  for (const Vector& r : residuals) {
    Vector c = r - st.mean;
    st.covariance += c * c.transpose();
  }
  st.covariance /= std::max<double>(1.0, static_cast<double>(residuals.size()) - 1.0);

  st.stddev = st.covariance.diagonal().cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-9);
  return st;
}

AdeParams init_ade(const AdeConfig& cfg, int d_r, std::uint64_t seed) {
  cfg.validate();
  if (d_r < 1) throw std::invalid_argument("init_ade: residual channel count must be >= 1");

  Rng rng(derive_seed(seed, 0xade));
  AdeParams p;
  p.window = cfg.window;
  p.d_r = d_r;
  p.d_h = cfg.hidden;

  auto fill_gru = [&](nn::GruParams& g) {
    g = nn::GruParams::zeros(p.d_h, d_r);
    for (Matrix* w : {&g.Wz, &g.Wr, &g.Wn})
      nn::xavier_fill(w->data(), static_cast<std::size_t>(w->size()), d_r, p.d_h, rng);
    for (Matrix* u : {&g.Uz, &g.Ur, &g.Un})
      nn::xavier_fill(u->data(), static_cast<std::size_t>(u->size()), p.d_h, p.d_h, rng);
  };
  fill_gru(p.fwd);
  fill_gru(p.bwd);

  p.w_cls = Matrix(3, p.d_z());
  nn::xavier_fill(p.w_cls.data(), static_cast<std::size_t>(p.w_cls.size()), p.d_z(), 3, rng);
  p.b_cls = Vector::Zero(3);

  p.r_mean = Vector::Zero(d_r);
  p.r_std = Vector::Ones(d_r);
  return p;
}

std::optional<Matrix> build_window(const std::vector<Vector>& stream, int t, int w) {
  if (w < 1) throw std::invalid_argument("build_window: window length must be >= 1");
  if (t < 0 || t >= static_cast<int>(stream.size()))
    throw std::invalid_argument("build_window: t outside the stream");
  if (t + 1 < w) return std::nullopt;

  Matrix win(w, stream.front().size());
  for (int k = 0; k < w; ++k) win.row(k) = stream[t - w + 1 + k].transpose();
  return win;
}

namespace {

Matrix whiten(const Matrix& window, const AdeParams& p) {
  if (window.rows() != p.window || window.cols() != p.d_r)
    throw std::invalid_argument("encode: window must be [W, d_r]");
  Matrix out = window;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r) = (out.row(r).transpose() - p.r_mean).cwiseQuotient(p.r_std).transpose();
  return out;
}

}  // namespace

Vector encode(const Matrix& window, const AdeParams& p) {
  Matrix x = whiten(window, p);
  Vector hf = Vector::Zero(p.d_h), hb = Vector::Zero(p.d_h);
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    hf = nn::gru_step(p.fwd, hf, x.row(t).transpose());
  for (Eigen::Index t = x.rows() - 1; t >= 0; --t)
    hb = nn::gru_step(p.bwd, hb, x.row(t).transpose());

  Vector z(p.d_z());
  z.head(p.d_h) = hf;
  z.tail(p.d_h) = hb;
  return z;
}

Vector encode_cached(const Matrix& window, const AdeParams& p, EncodeCache& cache) {
  cache.whitened = whiten(window, p);
  const Eigen::Index w = cache.whitened.rows();
  cache.fwd.assign(static_cast<std::size_t>(w), {});
  cache.bwd.assign(static_cast<std::size_t>(w), {});

  Vector hf = Vector::Zero(p.d_h), hb = Vector::Zero(p.d_h);
  for (Eigen::Index t = 0; t < w; ++t)
    hf = nn::gru_step(p.fwd, hf, cache.whitened.row(t).transpose(),
                      &cache.fwd[static_cast<std::size_t>(t)]);
  for (Eigen::Index t = w - 1; t >= 0; --t)
    hb = nn::gru_step(p.bwd, hb, cache.whitened.row(t).transpose(),
                      &cache.bwd[static_cast<std::size_t>(w - 1 - t)]);

  Vector z(p.d_z());
  z.head(p.d_h) = hf;
  z.tail(p.d_h) = hb;
  return z;
}

AdeGrads zero_ade_grads(const AdeParams& p) {
  AdeGrads g;
  g.fwd = nn::GruParams::zeros(p.d_h, p.d_r);
  g.bwd = nn::GruParams::zeros(p.d_h, p.d_r);
  g.d_w_cls = Matrix::Zero(3, p.d_z());
  g.d_b_cls = Vector::Zero(3);
  return g;
}

void encode_backward(const AdeParams& p, const EncodeCache& cache, const Vector& d_z,
                     AdeGrads& grads) {
  const auto w = static_cast<Eigen::Index>(cache.fwd.size());
  Vector d_h = d_z.head(p.d_h);
  for (Eigen::Index t = w - 1; t >= 0; --t)
    d_h = nn::gru_backward(p.fwd, cache.fwd[static_cast<std::size_t>(t)], d_h, grads.fwd)
              .d_h_prev;

  d_h = d_z.tail(p.d_h);
  for (Eigen::Index t = w - 1; t >= 0; --t)
    d_h = nn::gru_backward(p.bwd, cache.bwd[static_cast<std::size_t>(t)], d_h, grads.bwd)
              .d_h_prev;
}

std::vector<nn::ParamRef> collect_ade_params(AdeParams& p, AdeGrads& g, bool classifier_only) {
  std::vector<nn::ParamRef> refs;
  auto add_mat = [&](Matrix& w, Matrix& grad) {
    refs.push_back({w.data(), grad.data(), static_cast<std::size_t>(w.size())});
  };
  auto add_vec = [&](Vector& v, Vector& grad) {
    refs.push_back({v.data(), grad.data(), static_cast<std::size_t>(v.size())});
  };

  if (!classifier_only) {
    auto add_gru = [&](nn::GruParams& gp, nn::GruParams& gg) {
      add_mat(gp.Wz, gg.Wz);
      add_mat(gp.Wr, gg.Wr);
      add_mat(gp.Wn, gg.Wn);
      add_mat(gp.Uz, gg.Uz);
      add_mat(gp.Ur, gg.Ur);
      add_mat(gp.Un, gg.Un);
      add_vec(gp.bz, gg.bz);
      add_vec(gp.br, gg.br);
      add_vec(gp.bn, gg.bn);
      add_vec(gp.cn, gg.cn);
    };
    add_gru(p.fwd, g.fwd);
    add_gru(p.bwd, g.bwd);
  }
  add_mat(p.w_cls, g.d_w_cls);
  add_vec(p.b_cls, g.d_b_cls);
  return refs;
}

namespace {

void push_gru(std::vector<nn::NamedTensor>& out, const std::string& base,
              const nn::GruParams& g) {
  out.push_back({base + ".Wz", nn::Tensor::from_matrix(g.Wz)});
  out.push_back({base + ".Wr", nn::Tensor::from_matrix(g.Wr)});
  out.push_back({base + ".Wn", nn::Tensor::from_matrix(g.Wn)});
  out.push_back({base + ".Uz", nn::Tensor::from_matrix(g.Uz)});
  out.push_back({base + ".Ur", nn::Tensor::from_matrix(g.Ur)});
  out.push_back({base + ".Un", nn::Tensor::from_matrix(g.Un)});
  out.push_back({base + ".bz", nn::Tensor::from_vector(g.bz)});
  out.push_back({base + ".br", nn::Tensor::from_vector(g.br)});
  out.push_back({base + ".bn", nn::Tensor::from_vector(g.bn)});
  out.push_back({base + ".cn", nn::Tensor::from_vector(g.cn)});
}

nn::GruParams pull_gru(const std::vector<nn::NamedTensor>& in, const std::string& base) {
  nn::GruParams g;
  g.Wz = nn::find_tensor(in, base + ".Wz").as_matrix();
  g.Wr = nn::find_tensor(in, base + ".Wr").as_matrix();
  g.Wn = nn::find_tensor(in, base + ".Wn").as_matrix();
  g.Uz = nn::find_tensor(in, base + ".Uz").as_matrix();
  g.Ur = nn::find_tensor(in, base + ".Ur").as_matrix();
  g.Un = nn::find_tensor(in, base + ".Un").as_matrix();
  g.bz = nn::find_tensor(in, base + ".bz").as_vector();
  g.br = nn::find_tensor(in, base + ".br").as_vector();
  g.bn = nn::find_tensor(in, base + ".bn").as_vector();
  g.cn = nn::find_tensor(in, base + ".cn").as_vector();
  return g;
}

}  // namespace

void save_ade(const AdeParams& p, const std::string& path) {
  std::vector<nn::NamedTensor> out;
  Vector meta(3);
  meta << p.window, p.d_r, p.d_h;
  out.push_back({"meta", nn::Tensor::from_vector(meta)});
  push_gru(out, "fwd", p.fwd);
  push_gru(out, "bwd", p.bwd);
  out.push_back({"cls.w", nn::Tensor::from_matrix(p.w_cls)});
  out.push_back({"cls.b", nn::Tensor::from_vector(p.b_cls)});
  out.push_back({"norm.mean", nn::Tensor::from_vector(p.r_mean)});
  out.push_back({"norm.std", nn::Tensor::from_vector(p.r_std)});
  nn::save_tensors(path, out);
}

AdeParams load_ade(const std::string& path) {
  std::vector<nn::NamedTensor> in = nn::load_tensors(path);
  AdeParams p;
  Vector meta = nn::find_tensor(in, "meta").as_vector();
  if (meta.size() != 3) throw std::runtime_error("ade file: bad metadata block");
  p.window = static_cast<int>(meta[0]);
  p.d_r = static_cast<int>(meta[1]);
  p.d_h = static_cast<int>(meta[2]);
  p.fwd = pull_gru(in, "fwd");
  p.bwd = pull_gru(in, "bwd");
  p.w_cls = nn::find_tensor(in, "cls.w").as_matrix();
  p.b_cls = nn::find_tensor(in, "cls.b").as_vector();
  p.r_mean = nn::find_tensor(in, "norm.mean").as_vector();
  p.r_std = nn::find_tensor(in, "norm.std").as_vector();
  return p;
}

}  // namespace hydro::ade
