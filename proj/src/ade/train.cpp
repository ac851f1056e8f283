#include "hydro/ade/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "hydro/ade/mmd.hpp"
#include "hydro/core/rng.hpp"
#include "hydro/nn/optim.hpp"

namespace hydro::ade {

namespace {

void zero_in_place(AdeGrads& g) {
  auto zero_gru = [](nn::GruParams& q) {
    q.Wz.setZero();
    q.Wr.setZero();
    q.Wn.setZero();
    q.Uz.setZero();
    q.Ur.setZero();
    q.Un.setZero();
    q.bz.setZero();
    q.br.setZero();
    q.bn.setZero();
    q.cn.setZero();
  };
  zero_gru(g.fwd);
  zero_gru(g.bwd);
  g.d_w_cls.setZero();
  g.d_b_cls.setZero();
}

void check_windows(const std::vector<LabeledWindow>& data, int w, int d_r, const char* split) {
  for (const LabeledWindow& s : data)
    if (s.window.rows() != w || s.window.cols() != d_r)
      throw std::invalid_argument(std::string("train_ade: ") + split +
                                  " window shape does not match the configuration");
}

void fit_whitening(AdeParams& p, const std::vector<LabeledWindow>& train) {
  std::vector<Vector> rows;
  rows.reserve(train.size() * static_cast<std::size_t>(p.window));
  for (const LabeledWindow& s : train)
    for (Eigen::Index r = 0; r < s.window.rows(); ++r) rows.push_back(s.window.row(r));
  ResidualStats stats = compute_residual_stats(rows);
  p.r_mean = stats.mean;
  p.r_std = stats.stddev;
}

struct SplitLoss {
  double total = 0.0;
  double mmd = 0.0;
};

SplitLoss split_loss(const std::vector<LabeledWindow>& data, const AdeParams& p,
                     const AdeConfig& cfg) {
  SplitLoss out;
  double ce = 0.0;
  std::vector<Vector> z_as, z_am;
  for (const LabeledWindow& s : data) {
    Vector z = encode(s.window, p);
    ce += nn::softmax_xent(Vector(p.w_cls * z + p.b_cls), class_index(s.label)).loss;
    if (s.label == attack::AttackClass::Single) z_as.push_back(z);
    if (s.label == attack::AttackClass::Multi) z_am.push_back(std::move(z));
  }
  ce /= static_cast<double>(data.size());
  out.total = ce;
  if (!z_as.empty() && !z_am.empty()) {
    std::vector<Vector> pooled = z_as;
    pooled.insert(pooled.end(), z_am.begin(), z_am.end());
    out.mmd = mmd2(z_as, z_am, median_bandwidth(pooled), MmdEstimator::Biased);
    out.total += cfg.mmd_sign * cfg.beta * out.mmd;
  }
  return out;
}

}  // namespace

int class_index(attack::AttackClass c) {
  switch (c) {
    case attack::AttackClass::None: return 0;
    case attack::AttackClass::Single: return 1;
    case attack::AttackClass::Multi: return 2;
  }
  throw std::invalid_argument("class_index: unknown class");
}

AdeParams train_ade(const std::vector<LabeledWindow>& train, const std::vector<LabeledWindow>& val,
                    const AdeConfig& cfg, std::uint64_t seed, FreezeMode freeze,
                    const AdeParams* init, const AdeTrainOptions& opts) {
  cfg.validate();
  if (train.empty() || val.empty())
    throw std::invalid_argument("train_ade: empty training or validation split");

  const int d_r = static_cast<int>(train.front().window.cols());
  check_windows(train, cfg.window, d_r, "training");
  check_windows(val, cfg.window, d_r, "validation");

  AdeParams p = init ? *init : init_ade(cfg, d_r, derive_seed(seed, 0x111));
  if (p.window != cfg.window || p.d_r != d_r)
    throw std::invalid_argument("train_ade: init parameters do not match the data");
  if (!init) fit_whitening(p, train);

  std::size_t n_as = 0, n_am = 0;
  for (const LabeledWindow& s : train) {
    if (s.label == attack::AttackClass::Single) ++n_as;
    if (s.label == attack::AttackClass::Multi) ++n_am;
  }
  bool mmd_possible = n_as > 0 && n_am > 0;
  if (!mmd_possible && opts.verbose)
    std::cerr << "train_ade: one attack class absent, training without the MMD term\n";

  const bool classifier_only = freeze == FreezeMode::FreezeEncoder;
  AdeGrads grads = zero_ade_grads(p);
  std::vector<nn::ParamRef> refs = collect_ade_params(p, grads, classifier_only);
  nn::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::ReduceLROnPlateau plateau(0.5, std::max(1, cfg.patience / 2), 1e-6);

  AdeTrainReport report;
  report.mmd_active = mmd_possible;
  report.initial_val = split_loss(val, p, cfg).total;

  AdeParams best = p;
  double best_val = report.initial_val;
  report.val_losses.push_back(report.initial_val);
  int bad_epochs = 0;

  Rng rng(derive_seed(seed, 0xade));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(static_cast<std::uint64_t>(i))]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      auto bsz = static_cast<double>(stop - start);
      zero_in_place(grads);

      std::vector<EncodeCache> caches(stop - start);
      std::vector<Vector> zs(stop - start), d_zs(stop - start);
      std::vector<std::size_t> as_members, am_members;
      double batch_loss = 0.0;

      for (std::size_t i = start; i < stop; ++i) {
        const LabeledWindow& s = train[order[i]];
        std::size_t bi = i - start;
        zs[bi] = encode_cached(s.window, p, caches[bi]);
        auto sx = nn::softmax_xent(Vector(p.w_cls * zs[bi] + p.b_cls), class_index(s.label));
        batch_loss += sx.loss / bsz;
        grads.d_w_cls += (sx.d_logits / bsz) * zs[bi].transpose();
        grads.d_b_cls += sx.d_logits / bsz;
        d_zs[bi] = p.w_cls.transpose() * (sx.d_logits / bsz);
        if (s.label == attack::AttackClass::Single) as_members.push_back(bi);
        if (s.label == attack::AttackClass::Multi) am_members.push_back(bi);
      }

      // discrimination term: only defined when both attack classes appear
      if (!as_members.empty() && !am_members.empty()) {
        std::vector<Vector> z_as, z_am, pooled;
        for (std::size_t bi : as_members) z_as.push_back(zs[bi]);
        for (std::size_t bi : am_members) z_am.push_back(zs[bi]);
        pooled = z_as;
        pooled.insert(pooled.end(), z_am.begin(), z_am.end());
        double bw = median_bandwidth(pooled);  // treated as a constant
        batch_loss += cfg.mmd_sign * cfg.beta * mmd2(z_as, z_am, bw, MmdEstimator::Biased);
        if (!classifier_only) {
          MmdGrads mg = mmd2_biased_backward(z_as, z_am, bw);
          for (std::size_t k = 0; k < as_members.size(); ++k)
            d_zs[as_members[k]] += cfg.mmd_sign * cfg.beta * mg.d_a[k];
          for (std::size_t k = 0; k < am_members.size(); ++k)
            d_zs[am_members[k]] += cfg.mmd_sign * cfg.beta * mg.d_b[k];
        }
      }

      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_ade: non-finite loss at epoch " + std::to_string(epoch));

      if (!classifier_only)
        for (std::size_t bi = 0; bi < caches.size(); ++bi)
          encode_backward(p, caches[bi], d_zs[bi], grads);

      adam.step(refs);
    }

    SplitLoss vl = split_loss(val, p, cfg);
    report.val_losses.push_back(vl.total);
    adam.set_lr(plateau.observe(vl.total, adam.lr()));
    if (opts.verbose)
      std::cerr << "train_ade epoch " << epoch << " val " << vl.total << " (mmd " << vl.mmd
                << ")\n";

    if (vl.total < best_val - 1e-12) {
      best_val = vl.total;
      best = p;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  report.best_val = best_val;
  if (opts.report) *opts.report = report;
  return best;
}

double latent_attack_mmd(const std::vector<LabeledWindow>& data, const AdeParams& p) {
  std::vector<Vector> z_as, z_am;
  for (const LabeledWindow& s : data) {
    if (s.label == attack::AttackClass::Single) z_as.push_back(encode(s.window, p));
    if (s.label == attack::AttackClass::Multi) z_am.push_back(encode(s.window, p));
  }
  if (z_as.size() < 2 || z_am.size() < 2)
    throw std::invalid_argument("latent_attack_mmd: need at least 2 windows per attack class");
  std::vector<Vector> pooled = z_as;
  pooled.insert(pooled.end(), z_am.begin(), z_am.end());
  return mmd2(z_as, z_am, median_bandwidth(pooled), MmdEstimator::Unbiased);
}

}  // namespace hydro::ade
