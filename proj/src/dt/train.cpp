#include "hydro/dt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "hydro/core/rng.hpp"
#include "hydro/dt/jacobian.hpp"
#include "hydro/dt/physics.hpp"
#include "hydro/nn/optim.hpp"

namespace hydro::dt {

std::vector<DtSample> build_dataset(const std::vector<TraceRow>& trace, int tau) {
  std::vector<DtSample> out;
  if (static_cast<int>(trace.size()) <= tau) return out;

  const int d_y = static_cast<int>(trace.front().y.size());
  const int d_u = static_cast<int>(trace.front().u.size());
  for (std::size_t t = static_cast<std::size_t>(tau); t < trace.size(); ++t) {
    DtSample s;
    s.context = Matrix(tau, d_y + d_u);
    for (int k = 0; k < tau; ++k) {
      const TraceRow& row = trace[t - tau + k];
      s.context.row(k).head(d_y) = row.y.transpose();
      s.context.row(k).tail(d_u) = row.u.transpose();
    }
    s.target = trace[t].y;
    out.push_back(std::move(s));
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  double rank = std::ceil(q / 100.0 * static_cast<double>(values.size()));
  auto idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  return values[std::min(idx, values.size() - 1)];
}

namespace {

struct NormalizedSet {
  std::vector<Matrix> contexts;  // normalized
  std::vector<Vector> targets;   // normalized
};

void fit_normalization(const std::vector<DtSample>& train, ModelParams& p) {
  const int d_x = p.d_x();
  Vector sum = Vector::Zero(d_x), sumsq = Vector::Zero(d_x);
  double n = 0.0;
  for (const DtSample& s : train) {
    for (Eigen::Index r = 0; r < s.context.rows(); ++r) {
      Vector f = s.context.row(r).transpose();
      sum += f;
      sumsq += f.cwiseProduct(f);
      n += 1.0;
    }
  }
  p.x_mean = sum / n;
  Vector var = (sumsq / n - p.x_mean.cwiseProduct(p.x_mean)).cwiseMax(0.0);
  // floor keeps constant channels (idle pumps) from blowing up the scale
  p.x_std = var.cwiseSqrt().cwiseMax(1e-6);
  p.y_mean = p.x_mean.head(p.d_y);
  p.y_std = p.x_std.head(p.d_y);
}

NormalizedSet normalize_set(const std::vector<DtSample>& set, const ModelParams& p) {
  NormalizedSet out;
  out.contexts.reserve(set.size());
  out.targets.reserve(set.size());
  for (const DtSample& s : set) {
    Matrix ctx = s.context;
    for (Eigen::Index r = 0; r < ctx.rows(); ++r)
      ctx.row(r) = (ctx.row(r).transpose() - p.x_mean).cwiseQuotient(p.x_std).transpose();
    out.contexts.push_back(std::move(ctx));
    out.targets.push_back((s.target - p.y_mean).cwiseQuotient(p.y_std));
  }
  return out;
}

// Deterministic composite loss used for validation and early stopping; the
// physics weight sits at its zero-uncertainty value alpha0.
double validation_loss(const ModelParams& p, const NormalizedSet& val,
                       const plant::PlantTopology& topo, const DtConfig& cfg, double dt) {
  double total = 0.0;
  Matrix seq(2, p.d_y);
  for (std::size_t i = 0; i < val.contexts.size(); ++i) {
    Vector y_norm = forward_normalized(p, val.contexts[i]);
    Vector r = y_norm - val.targets[i];
    double loss = r.squaredNorm() / p.sigma2_data;
    if (cfg.alpha0 > 0.0) {
      seq.row(0) =
          p.denormalize_output(val.contexts[i].row(p.tau - 1).head(p.d_y).transpose()).transpose();
      seq.row(1) = p.denormalize_output(y_norm).transpose();
      loss += cfg.alpha0 * physics_residuals(seq, topo, dt).total(cfg.lambda_pipe);
    }
    total += loss;
  }
  return total / static_cast<double>(val.contexts.size());
}

// MC covariance trace at a handful of dataset points; used for theta_thresh
// and the per-batch adaptive weight. Subsampled to stay affordable.
double median_mc_trace(const ModelParams& p, const NormalizedSet& set, int n_mc,
                       std::uint64_t seed) {
  std::size_t count = std::min<std::size_t>(set.contexts.size(), 128);
  std::size_t stride = std::max<std::size_t>(1, set.contexts.size() / count);
  std::vector<double> traces;
  for (std::size_t i = 0; i < set.contexts.size(); i += stride) {
    DtPrediction pred = predict_uncertain(set.contexts[i], p, n_mc, derive_seed(seed, i));
    traces.push_back(pred.covariance.trace());
  }
  return percentile(std::move(traces), 50.0);
}

}  // namespace

ModelParams train_dt(const std::vector<DtSample>& train, const std::vector<DtSample>& val,
                     const plant::PlantTopology& topo, const DtConfig& cfg, std::uint64_t seed,
                     const DtTrainOptions& opts) {
  cfg.validate();
  if (train.empty() || val.empty())
    throw std::invalid_argument("train_dt: train and validation sets must be non-empty");

  const int d_y = topo.n_sensors();
  const int d_u = topo.n_actuators();
  if (train.front().context.cols() != d_y + d_u || train.front().target.size() != d_y)
    throw std::invalid_argument("train_dt: sample shape does not match the plant topology");

  ModelParams p = init_model(cfg, d_y, d_u, seed);
  fit_normalization(train, p);
  NormalizedSet tr = normalize_set(train, p);
  NormalizedSet va = normalize_set(val, p);
  const ModelParams pristine = p;  // untrained reference for the report

  ModelGrads grads = zero_grads(p);
  std::vector<nn::ParamRef> refs = collect_params(p, grads);
  nn::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::ReduceLROnPlateau plateau(0.5, std::max(1, cfg.patience / 2));

  // persistent power-iteration state, one per conv kernel
  std::vector<nn::SpectralNorm> sn;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& shape = p.blocks[b].kernel.shape();
    sn.emplace_back(static_cast<Eigen::Index>(shape[0] * shape[1]), derive_seed(seed, 0x25, b));
  }

  Rng shuffle_rng(derive_seed(seed, 0x5481));
  std::vector<std::size_t> order(tr.contexts.size());
  std::iota(order.begin(), order.end(), 0);

  const double dt = opts.sample_dt;
  const int n_mc_est = std::min(cfg.n_mc, 16);
  Matrix seq(2, d_y);

  ModelParams best = p;
  double best_val = 1e300;
  int bad_epochs = 0;

  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    // epoch 0 is the unregularized warm-up that calibrates the loss scales
    const bool warmup = epoch == 0;

    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<std::uint64_t>(i))]);

    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++step) {
      std::size_t stop = std::min(order.size(), start + cfg.batch);
      double inv_batch = 1.0 / static_cast<double>(stop - start);

      double lambda_phys = 0.0;
      if (!warmup && cfg.alpha0 > 0.0) {
        DtPrediction probe = predict_uncertain(tr.contexts[order[start]], p, 8,
                                               derive_seed(seed, epoch, 0xb0 + step));
        lambda_phys =
            adaptive_physics_weight(probe.covariance.trace(), cfg.alpha0, p.theta_thresh);
      }

      for (auto& bg : grads.blocks) {
        bg.d_kernel.fill(0.0);
        bg.d_bias.setZero();
      }
      for (Matrix& s : grads.d_skip)
        if (s.size() > 0) s.setZero();
      grads.d_head_w.setZero();
      grads.d_head_b.setZero();

      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        std::size_t idx = order[bi];
        std::vector<Matrix> masks = make_dropout_masks(
            p, derive_seed(seed, static_cast<std::uint64_t>(epoch) * 131071u + step, bi));
        ForwardCache cache;
        Vector y_norm = forward_normalized(p, tr.contexts[idx], &masks, &cache);

        Vector r = y_norm - tr.targets[idx];
        double sample_loss = r.squaredNorm() / p.sigma2_data;
        Vector d_y_norm = 2.0 * r / p.sigma2_data;

        if (lambda_phys > 0.0) {
          seq.row(0) = p.denormalize_output(
                           tr.contexts[idx].row(p.tau - 1).head(d_y).transpose())
                           .transpose();
          seq.row(1) = p.denormalize_output(y_norm).transpose();
          sample_loss += lambda_phys * physics_residuals(seq, topo, dt).total(cfg.lambda_pipe);
          Matrix g_seq = physics_residuals_backward(seq, topo, dt, cfg.lambda_pipe);
          d_y_norm += lambda_phys * g_seq.row(1).transpose().cwiseProduct(p.y_std);
        }

        batch_loss += sample_loss;
        backward_normalized(p, cache, &masks, d_y_norm * inv_batch, &grads);
      }

      if (!std::isfinite(batch_loss)) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "train_dt: non-finite loss at epoch %d step %zu", epoch,
                      step);
        throw std::runtime_error(msg);
      }

      adam.step(refs);

      // project conv kernels back to unit spectral norm
      for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        Tensor& k = p.blocks[b].kernel;
        const auto& shape = k.shape();
        Eigen::Map<Matrix> w(k.data(), static_cast<Eigen::Index>(shape[0] * shape[1]),
                             static_cast<Eigen::Index>(shape[2]));
        double sigma = sn[b].estimate(w, 2);
        if (sigma > 1.0) w /= sigma;
      }
    }

    if (warmup) {
      // freeze the loss scales off the warm-up model
      Vector mean = Vector::Zero(d_y), var = Vector::Zero(d_y);
      for (std::size_t i = 0; i < tr.contexts.size(); ++i) {
        Vector r = forward_normalized(p, tr.contexts[i]) - tr.targets[i];
        mean += r;
        var += r.cwiseProduct(r);
      }
      double n = static_cast<double>(tr.contexts.size());
      mean /= n;
      var = var / n - mean.cwiseProduct(mean);
      p.sigma2_data = std::max(var.mean(), 1e-10);
      p.theta_thresh =
          std::max(median_mc_trace(p, tr, n_mc_est, derive_seed(seed, 0x7e7a)), 1e-12);
      if (opts.report) {
        ModelParams ref = pristine;
        ref.sigma2_data = p.sigma2_data;
        ref.theta_thresh = p.theta_thresh;
        opts.report->initial_val = validation_loss(ref, va, topo, cfg, dt);
      }
      continue;
    }

    double vloss = validation_loss(p, va, topo, cfg, dt);
    if (!std::isfinite(vloss)) throw std::runtime_error("train_dt: non-finite validation loss");
    if (opts.report) opts.report->val_losses.push_back(vloss);
    if (opts.verbose)
      std::printf("epoch %3d  val %.6g  lr %.3g\n", epoch, vloss, adam.lr());

    if (vloss < best_val - 1e-12) {
      best_val = vloss;
      best = p;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
    adam.set_lr(plateau.observe(vloss, adam.lr()));
  }

  // ship the best snapshot, annotated with the validation-set constants
  best.sigma2_data = p.sigma2_data;
  best.theta_thresh = p.theta_thresh;
  if (opts.report) opts.report->best_val = best_val;

  std::vector<double> err_norms, rel_errs;
  err_norms.reserve(va.contexts.size());
  for (std::size_t i = 0; i < va.contexts.size(); ++i) {
    Vector pred = predict(va.contexts[i], best);
    Vector err = val[i].target - pred;
    err_norms.push_back(err.norm());
    rel_errs.push_back(err.norm() / std::max(val[i].target.norm(), 1e-12));
  }
  best.e_bar = percentile(err_norms, 99.9);
  best.e_bar_rel = percentile(rel_errs, 99.9);

  std::size_t n_lip = std::min<std::size_t>(va.contexts.size(),
                                            static_cast<std::size_t>(opts.lipschitz_contexts));
  std::vector<Matrix> lip_ctx(va.contexts.begin(), va.contexts.begin() + n_lip);
  best.l_f = estimate_lipschitz(best, lip_ctx).l_f;
  return best;
}

}  // namespace hydro::dt
