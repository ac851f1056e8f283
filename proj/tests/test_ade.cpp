#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hydro/ade/classify.hpp"
#include "hydro/ade/encoder.hpp"
#include "hydro/ade/mmd.hpp"
#include "hydro/ade/train.hpp"
#include "oracles/gradcheck.hpp"

using namespace hydro;
using namespace hydro::ade;
using attack::AttackClass;

namespace {

// desk-sized configuration so the suite trains in seconds; the published
// operating point (window 50, hidden 64) is asserted separately
AdeConfig small_config() {
  AdeConfig cfg;
  cfg.window = 10;
  cfg.hidden = 8;
  cfg.permutations = 99;
  cfg.min_reference = 24;
  cfg.validation_batch = 4;
  cfg.batch = 16;
  cfg.epochs = 40;
  cfg.patience = 10;
  cfg.learning_rate = 3e-3;
  return cfg;
}

std::vector<Vector> random_embeddings(int n, int d, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vector v(d);
    for (Eigen::Index j = 0; j < d; ++j) v[j] = rng.normal(0.0, 1.0) + shift;
    out.push_back(std::move(v));
  }
  return out;
}

Matrix random_window(int w, int d_r, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(w, d_r);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, 1.0);
  return m;
}

double rbf_oracle(const Vector& a, const Vector& b, double sigma) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

// independent Gram-matrix recomputation of the unbiased estimator
double mmd_unbiased_oracle(const std::vector<Vector>& a, const std::vector<Vector>& b,
                           double sigma) {
  auto m = static_cast<Eigen::Index>(a.size()), n = static_cast<Eigen::Index>(b.size());
  Matrix kaa(m, m), kbb(n, n), kab(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      kaa(i, j) = rbf_oracle(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)], sigma);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kbb(i, j) = rbf_oracle(b[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)], sigma);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kab(i, j) = rbf_oracle(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)], sigma);
  auto md = static_cast<double>(m), nd = static_cast<double>(n);
  return (kaa.sum() - kaa.trace()) / (md * (md - 1.0)) +
         (kbb.sum() - kbb.trace()) / (nd * (nd - 1.0)) - 2.0 * kab.sum() / (md * nd);
}

// synthetic labeled residual windows: biases switch on partway through the
// window, on one channel for single-point attacks and on two for multi-stage
std::vector<LabeledWindow> synthetic_windows(int per_class, int w, std::uint64_t seed,
                                             bool include_multi = true) {
  Rng rng(derive_seed(seed, 0x5717));
  std::vector<LabeledWindow> out;
  auto emit = [&](AttackClass cls) {
    LabeledWindow s;
    s.label = cls;
    s.window = Matrix(w, 3);
    auto onset = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w / 2 + 1)));
    for (int r = 0; r < w; ++r) {
      for (int c = 0; c < 3; ++c) s.window(r, c) = rng.normal(0.0, 1.0);
      if (r >= onset && cls == AttackClass::Single) s.window(r, 1) += 2.5;
      if (r >= onset && cls == AttackClass::Multi) {
        s.window(r, 0) -= 2.0;
        s.window(r, 2) += 2.0;
      }
    }
    out.push_back(std::move(s));
  };
  for (int i = 0; i < per_class; ++i) {
    emit(AttackClass::None);
    emit(AttackClass::Single);
    if (include_multi) emit(AttackClass::Multi);
  }
  return out;
}

double val_accuracy(const std::vector<LabeledWindow>& data, const AdeParams& p) {
  int hits = 0;
  for (const LabeledWindow& s : data) {
    ClassProbabilities probs = classify(encode(s.window, p), p);
    if (probs.argmax() == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_gru(const nn::GruParams& a, const nn::GruParams& b) {
  return same_matrix(a.Wz, b.Wz) && same_matrix(a.Wr, b.Wr) && same_matrix(a.Wn, b.Wn) &&
         same_matrix(a.Uz, b.Uz) && same_matrix(a.Ur, b.Ur) && same_matrix(a.Un, b.Un) &&
         (a.bz.array() == b.bz.array()).all() && (a.br.array() == b.br.array()).all() &&
         (a.bn.array() == b.bn.array()).all() && (a.cn.array() == b.cn.array()).all();
}

}  // namespace

TEST_CASE("ade config defaults match the published operating point") {
  AdeConfig cfg;
  CHECK(cfg.window == 50);
  CHECK(cfg.window_extended == 75);
  CHECK(cfg.hidden == 64);
  CHECK(cfg.beta == 0.1);
  CHECK(cfg.gamma == 0.8);
  CHECK(cfg.permutations == 200);
  CHECK(cfg.alpha == 0.05);
  CHECK(cfg.min_reference == 200);
  CHECK(cfg.validation_batch == 8);
  CHECK(cfg.mmd_sign == -1);
  CHECK(cfg.learning_rate == 5e-4);
  CHECK(cfg.batch == 32);
  CHECK(cfg.epochs == 150);
  CHECK(cfg.patience == 15);
  CHECK(cfg.weight_decay == 1e-4);
  CHECK_NOTHROW(cfg.validate());

  AdeConfig bad = cfg;
  bad.window = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.mmd_sign = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.validation_batch = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("residual stats recover mean and covariance of a known set") {
  Vector r1(2), r2(2);
  r1 << 1.0, 0.0;
  r2 << 3.0, 4.0;
  ResidualStats st = compute_residual_stats({r1, r2});
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.mean[1] == doctest::Approx(2.0));
  CHECK(st.covariance(0, 0) == doctest::Approx(2.0));
  CHECK(st.covariance(0, 1) == doctest::Approx(4.0));
  CHECK(st.covariance(1, 0) == doctest::Approx(4.0));
  CHECK(st.covariance(1, 1) == doctest::Approx(8.0));
  CHECK(st.stddev[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(st.stddev[1] == doctest::Approx(std::sqrt(8.0)));

  // a constant channel is floored, not zero, so whitening never divides by 0
  ResidualStats flat = compute_residual_stats({r1, r1, r1});
  CHECK(flat.stddev[0] == 1e-9);
  CHECK_THROWS_AS(compute_residual_stats({}), std::invalid_argument);
}

TEST_CASE("build_window reports not-ready before W samples and slides by one") {
  const int w = 5;
  std::vector<Vector> stream;
  for (int i = 0; i < 12; ++i) {
    Vector v(3);
    v << i, 10 + i, 20 + i;
    stream.push_back(v);
  }
  for (int t = 0; t + 1 < w; ++t) CHECK_FALSE(build_window(stream, t, w).has_value());

  auto first = build_window(stream, w - 1, w);
  REQUIRE(first.has_value());
  for (int k = 0; k < w; ++k)
    for (int c = 0; c < 3; ++c) CHECK((*first)(k, c) == stream[static_cast<std::size_t>(k)][c]);

  // consecutive windows share all but one row
  auto win5 = build_window(stream, 5, w);
  REQUIRE(win5.has_value());
  for (int k = 0; k < w - 1; ++k)
    for (int c = 0; c < 3; ++c) CHECK((*win5)(k, c) == (*first)(k + 1, c));
  CHECK((*win5)(w - 1, 0) == stream[5][0]);

  CHECK_THROWS_AS(build_window(stream, -1, w), std::invalid_argument);
  CHECK_THROWS_AS(build_window(stream, 12, w), std::invalid_argument);
  CHECK_THROWS_AS(build_window(stream, 3, 0), std::invalid_argument);
}

TEST_CASE("zero-weight encoder maps every window to the origin") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 11);
  p.fwd = nn::GruParams::zeros(p.d_h, p.d_r);
  p.bwd = nn::GruParams::zeros(p.d_h, p.d_r);
  Vector z = encode(random_window(cfg.window, 3, 4), p);
  CHECK(z.size() == p.d_z());
  CHECK(z.norm() == 0.0);
}

TEST_CASE("tying both directions makes reversal swap the embedding halves") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 21);
  p.bwd = p.fwd;
  Matrix win = random_window(cfg.window, 3, 9);
  Matrix rev = win.colwise().reverse();
  Vector z = encode(win, p), zr = encode(rev, p);
  for (int i = 0; i < p.d_h; ++i) {
    CHECK(zr[i + p.d_h] == z[i]);
    CHECK(zr[i] == z[i + p.d_h]);
  }
}

TEST_CASE("encoding is deterministic and honours the whitening frame") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 33);
  Matrix win = random_window(cfg.window, 3, 14);
  Vector z1 = encode(win, p), z2 = encode(win, p);
  for (Eigen::Index i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);

  // feeding scaled-and-shifted data through a matching whitening frame
  // reproduces the identity-frame embedding
  AdeParams pw = p;
  pw.r_mean = Vector::Constant(3, 0.7);
  pw.r_std = Vector::Constant(3, 2.5);
  Matrix shifted = (win.array() * 2.5 + 0.7).matrix();
  Vector zw = encode(shifted, pw);
  for (Eigen::Index i = 0; i < z1.size(); ++i) CHECK(zw[i] == doctest::Approx(z1[i]).epsilon(1e-12));

  Matrix bad = Matrix::Zero(cfg.window + 1, 3);
  CHECK_THROWS_AS(encode(bad, p), std::invalid_argument);
}

TEST_CASE("bidirectional backprop matches finite differences") {
  AdeConfig cfg = small_config();
  cfg.window = 6;
  cfg.hidden = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AdeParams p = init_ade(cfg, 2, derive_seed(1000, seed));
    Matrix win = random_window(cfg.window, 2, derive_seed(2000, seed));
    const int label = static_cast<int>(seed % 3);

    auto loss = [&]() {
      Vector z = encode(win, p);
      return nn::softmax_xent(Vector(p.w_cls * z + p.b_cls), label).loss;
    };

    AdeGrads grads = zero_ade_grads(p);
    EncodeCache cache;
    Vector z = encode_cached(win, p, cache);
    auto sx = nn::softmax_xent(Vector(p.w_cls * z + p.b_cls), label);
    grads.d_w_cls += sx.d_logits * z.transpose();
    grads.d_b_cls += sx.d_logits;
    encode_backward(p, cache, Vector(p.w_cls.transpose() * sx.d_logits), grads);

    AdeGrads probe = zero_ade_grads(p);
    auto refs = collect_ade_params(p, grads, false);
    auto mutable_refs = collect_ade_params(p, probe, false);
    for (std::size_t b = 0; b < refs.size(); ++b)
      for (std::size_t i = 0; i < refs[b].n; ++i) {
        double fd = oracle::central_diff(loss, mutable_refs[b].param[i]);
        CHECK(oracle::rel_err(fd, refs[b].grad[i]) < oracle::kGradTol);
      }
  }
}

TEST_CASE("biased mmd of a set against itself is exactly zero") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = random_embeddings(7, 3, derive_seed(50, seed));
    CHECK(mmd2(x, x, 0.8 + 0.1 * static_cast<double>(seed), MmdEstimator::Biased) == 0.0);
  }
}

TEST_CASE("two singleton sets reproduce the closed-form biased mmd") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Vector a(4), b(4);
    for (int i = 0; i < 4; ++i) {
      a[i] = rng.normal(0.0, 2.0);
      b[i] = rng.normal(0.0, 2.0);
    }
    double sigma = rng.uniform(0.5, 3.0);
    double expected = 2.0 - 2.0 * std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
    double got = mmd2({a}, {b}, sigma, MmdEstimator::Biased);
    CHECK(std::abs(got - expected) < 1e-15);
  }
}

TEST_CASE("unbiased mmd matches the explicit double sum") {
  // fixed corner sizes plus a random sweep over 2..50 per set
  auto check_pair = [](int m, int n, std::uint64_t seed) {
    auto a = random_embeddings(m, 3, derive_seed(123, seed), 0.0);
    auto b = random_embeddings(n, 3, derive_seed(456, seed), 0.5);
    double sigma = 0.7 + 0.03 * static_cast<double>(seed % 17);
    double got = mmd2(a, b, sigma, MmdEstimator::Unbiased);
    double want = mmd_unbiased_oracle(a, b, sigma);
    CHECK(std::abs(got - want) < 1e-12);
  };
  check_pair(2, 2, 0);
  check_pair(2, 50, 1);
  check_pair(50, 2, 2);
  check_pair(50, 50, 3);
  Rng rng(777);
  for (std::uint64_t t = 4; t < 40; ++t)
    check_pair(2 + static_cast<int>(rng.uniform_int(49)), 2 + static_cast<int>(rng.uniform_int(49)),
               t);
}

TEST_CASE("mmd estimators validate their inputs") {
  auto x = random_embeddings(3, 2, 1);
  auto y = random_embeddings(3, 2, 2);
  CHECK_THROWS_AS(mmd2({}, y, 1.0, MmdEstimator::Biased), std::invalid_argument);
  CHECK_THROWS_AS(mmd2(x, y, 0.0, MmdEstimator::Biased), std::invalid_argument);
  CHECK_THROWS_AS(mmd2(x, y, -1.0, MmdEstimator::Unbiased), std::invalid_argument);
  CHECK_THROWS_AS(mmd2(random_embeddings(1, 2, 3), y, 1.0, MmdEstimator::Unbiased),
                  std::invalid_argument);
  CHECK_NOTHROW(mmd2(random_embeddings(1, 2, 3), y, 1.0, MmdEstimator::Biased));
  CHECK_THROWS_AS(mmd2(random_embeddings(3, 4, 4), y, 1.0, MmdEstimator::Biased),
                  std::invalid_argument);
}

TEST_CASE("biased mmd gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto a = random_embeddings(3, 3, derive_seed(31, seed));
    auto b = random_embeddings(4, 3, derive_seed(32, seed), 0.4);
    double sigma = 0.5 + 0.015 * static_cast<double>(seed);
    MmdGrads g = mmd2_biased_backward(a, b, sigma);

    auto loss = [&]() { return mmd2(a, b, sigma, MmdEstimator::Biased); };
    for (std::size_t i = 0; i < a.size(); ++i)
      for (Eigen::Index c = 0; c < 3; ++c) {
        double fd = oracle::central_diff(loss, a[i][c]);
        CHECK(oracle::rel_err(fd, g.d_a[i][c]) < oracle::kGradTol);
      }
    for (std::size_t j = 0; j < b.size(); ++j)
      for (Eigen::Index c = 0; c < 3; ++c) {
        double fd = oracle::central_diff(loss, b[j][c]);
        CHECK(oracle::rel_err(fd, g.d_b[j][c]) < oracle::kGradTol);
      }
  }
}

TEST_CASE("median bandwidth is the median pairwise distance") {
  Vector p0(1), p1(1), p3(1);
  p0 << 0.0;
  p1 << 1.0;
  p3 << 3.0;
  // pairwise distances {1, 3, 2}; the size/2 order statistic picks 2
  CHECK(median_bandwidth({p0, p1, p3}) == 2.0);
  CHECK(median_bandwidth({p0, p0, p0}) == 1e-9);
  CHECK_THROWS_AS(median_bandwidth({p0}), std::invalid_argument);

  // cross-check a larger set against an explicit sort
  auto pts = random_embeddings(9, 3, 5);
  std::vector<double> d;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) d.push_back((pts[i] - pts[j]).norm());
  std::sort(d.begin(), d.end());
  CHECK(median_bandwidth(pts) == d[d.size() / 2]);
}

TEST_CASE("permutation threshold matches a direct re-computation") {
  const int n = 20, b_perms = 60, batch = 4;
  const double bw = 1.3, alpha = 0.1;
  const std::uint64_t seed = 4242;
  auto ref = random_embeddings(n, 3, 616);

  std::vector<double> null;
  double tau = permutation_threshold(ref, b_perms, alpha, seed, batch, bw, &null);
  REQUIRE(null.size() == static_cast<std::size_t>(b_perms));
  CHECK(std::is_sorted(null.begin(), null.end()));

  // replay the exact same index shuffles and score each split directly
  Rng rng(derive_seed(seed, 0x9e24));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> direct;
  for (int p = 0; p < b_perms; ++p) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(batch); ++i)
      std::swap(idx[i], idx[i + rng.uniform_int(static_cast<std::uint64_t>(n) - i)]);
    std::vector<Vector> head, tail;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < static_cast<std::size_t>(batch) ? head : tail).push_back(ref[idx[i]]);
    direct.push_back(mmd2(head, tail, bw, MmdEstimator::Unbiased));
  }
  std::sort(direct.begin(), direct.end());
  for (std::size_t i = 0; i < null.size(); ++i) CHECK(std::abs(null[i] - direct[i]) < 1e-9);

  // quantile index: ceil((1 - alpha)(B + 1)) - 1
  auto want = static_cast<std::size_t>(std::ceil((1.0 - alpha) * (b_perms + 1))) - 1;
  CHECK(tau == null[want]);

  std::vector<double> null_all;
  double tau_min = permutation_threshold(ref, b_perms, 1.0, seed, batch, bw, &null_all);
  CHECK(tau_min == null_all.front());
}

TEST_CASE("permutation threshold validates its inputs") {
  auto ref = random_embeddings(10, 2, 7);
  CHECK_THROWS_AS(permutation_threshold(ref, 50, 0.05, 1, 6), std::invalid_argument);
  CHECK_THROWS_AS(permutation_threshold(ref, 50, 0.0, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(permutation_threshold(ref, 50, 1.5, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(permutation_threshold(ref, 0, 0.05, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(permutation_threshold(ref, 50, 0.05, 1, 1), std::invalid_argument);
}

TEST_CASE("null rejection rate stays near the nominal level") {
  // fresh normal-operation batches should trip the 5% gate about 5% of the
  // time; wide bounds keep the check meaningful but not flaky
  const int trials = 500;
  int rejections = 0;
  for (int t = 0; t < trials; ++t) {
    auto ref = random_embeddings(48, 4, derive_seed(0xca11b, static_cast<std::uint64_t>(t)));
    double tau = permutation_threshold(ref, 99, 0.05,
                                       derive_seed(0x7e57, static_cast<std::uint64_t>(t)), 6);
    auto test = random_embeddings(6, 4, derive_seed(0xfe5b, static_cast<std::uint64_t>(t)));
    double stat = mmd2(test, ref, median_bandwidth(ref), MmdEstimator::Unbiased);
    if (stat > tau) ++rejections;
  }
  double rate = static_cast<double>(rejections) / trials;
  INFO("null rejection rate ", rate);
  CHECK(rate > 0.02);
  CHECK(rate < 0.09);
}

TEST_CASE("more permutations do not change clear-cut gate decisions") {
  auto ref = random_embeddings(40, 4, 2024);
  double bw = median_bandwidth(ref);
  double tau_b = permutation_threshold(ref, 200, 0.05, 5, 5, bw);
  double tau_2b = permutation_threshold(ref, 400, 0.05, 5, 5, bw);

  auto near = random_embeddings(5, 4, 31415);
  auto far = random_embeddings(5, 4, 27182, 6.0);
  double stat_near = mmd2(near, ref, bw, MmdEstimator::Unbiased);
  double stat_far = mmd2(far, ref, bw, MmdEstimator::Unbiased);
  CHECK(stat_near < tau_b);
  CHECK(stat_near < tau_2b);
  CHECK(stat_far > tau_b);
  CHECK(stat_far > tau_2b);
}

TEST_CASE("calibrated gate sizes rejection thresholds per pooled batch") {
  AdeConfig cfg = small_config();
  auto ref = random_embeddings(30, 6, 1001);
  AdeGate gate = calibrate_gate(ref, cfg, 91);

  CHECK(gate.max_batch == cfg.validation_batch);
  CHECK(gate.alpha == cfg.alpha);
  CHECK(gate.bandwidth == median_bandwidth(ref));
  REQUIRE(gate.tau_by_size.size() == 3);  // sizes 2, 3, 4
  REQUIRE(gate.null_by_size.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(gate.null_by_size[i].size() == static_cast<std::size_t>(cfg.permutations));
    CHECK(std::is_sorted(gate.null_by_size[i].begin(), gate.null_by_size[i].end()));
    CHECK(gate.threshold(static_cast<int>(i) + 2) == gate.tau_by_size[i]);
  }
  // out-of-range sizes clamp to the nearest calibrated one
  CHECK(gate.threshold(1) == gate.tau_by_size.front());
  CHECK(gate.threshold(99) == gate.tau_by_size.back());

  // permutation p-values: nothing above a huge statistic, everything above
  // a tiny one, monotone in between
  const double b1 = static_cast<double>(cfg.permutations) + 1.0;
  CHECK(gate.p_value(3, 1e9) == doctest::Approx(1.0 / b1));
  CHECK(gate.p_value(3, -1e9) == doctest::Approx(1.0));
  double mid = gate.tau_by_size[1];
  CHECK(gate.p_value(3, mid) >= gate.p_value(3, mid + 1e-6));
  CHECK(gate.p_value(3, mid) <= 1.0);

  CHECK_THROWS_AS(calibrate_gate(random_embeddings(10, 6, 3), cfg, 1), std::invalid_argument);
  AdeGate blank;
  CHECK_THROWS_AS(blank.threshold(3), std::logic_error);
  CHECK_THROWS_AS(blank.p_value(3, 0.1), std::logic_error);
}

TEST_CASE("gate statistic equals the unbiased mmd against the reference") {
  AdeConfig cfg = small_config();
  auto ref = random_embeddings(26, 5, 808);
  AdeGate gate = calibrate_gate(ref, cfg, 17);
  for (int s = 2; s <= 4; ++s) {
    auto test = random_embeddings(s, 5, derive_seed(9, static_cast<std::uint64_t>(s)), 0.3);
    double direct = mmd2(test, ref, gate.bandwidth, MmdEstimator::Unbiased);
    CHECK(std::abs(gate_statistic(test, gate) - direct) < 1e-12);
  }
  CHECK_THROWS_AS(gate_statistic(random_embeddings(1, 5, 2), gate), std::invalid_argument);
}

TEST_CASE("gate round-trips through its binary file") {
  AdeConfig cfg = small_config();
  auto ref = random_embeddings(25, 4, 515);
  AdeGate gate = calibrate_gate(ref, cfg, 66);

  const std::string path = "ade_gate_roundtrip.bin";
  save_gate(gate, path);
  AdeGate back = load_gate(path);
  std::remove(path.c_str());

  CHECK(back.max_batch == gate.max_batch);
  CHECK(back.alpha == gate.alpha);
  CHECK(back.bandwidth == gate.bandwidth);
  CHECK(back.ref_self_term == gate.ref_self_term);
  REQUIRE(back.reference.size() == gate.reference.size());
  for (std::size_t i = 0; i < gate.reference.size(); ++i)
    CHECK((back.reference[i].array() == gate.reference[i].array()).all());
  REQUIRE(back.tau_by_size == gate.tau_by_size);
  REQUIRE(back.null_by_size == gate.null_by_size);

  AdeGate blank;
  CHECK_THROWS_AS(save_gate(blank, path), std::logic_error);
}

TEST_CASE("classifier probabilities form a proper distribution with safe ties") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 77);
  p.w_cls.setZero();
  p.b_cls.setZero();

  Vector z = Vector::Ones(p.d_z());
  ClassProbabilities u = classify(z, p);
  CHECK(u.p_n == doctest::Approx(1.0 / 3.0));
  CHECK(u.p_as == doctest::Approx(1.0 / 3.0));
  CHECK(u.p_am == doctest::Approx(1.0 / 3.0));
  // full three-way tie resolves to normal, two-way attack tie to single
  CHECK(u.argmax() == AttackClass::None);
  p.b_cls << 0.0, 2.0, 2.0;
  CHECK(classify(z, p).argmax() == AttackClass::Single);

  p.b_cls << 0.0, std::log(18.0), 0.0;
  ClassProbabilities nine = classify(z, p);
  CHECK(nine.p_as == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(nine.argmax() == AttackClass::Single);
  CHECK(nine.confidence() == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(nine.at(AttackClass::Single) == nine.p_as);

  p.b_cls << 0.0, 0.0, 10.0;
  CHECK(classify(z, p).p_am > 0.9999);

  AdeParams pr = init_ade(cfg, 3, 78);
  Rng rng(5150);
  for (int t = 0; t < 10000; ++t) {
    Vector zr(pr.d_z());
    for (Eigen::Index i = 0; i < zr.size(); ++i) zr[i] = rng.normal(0.0, 2.0);
    ClassProbabilities c = classify(zr, pr);
    CHECK(std::abs(c.p_n + c.p_as + c.p_am - 1.0) < 1e-12);
    CHECK(c.p_n >= 0.0);
    CHECK(c.p_as >= 0.0);
    CHECK(c.p_am >= 0.0);
  }

  CHECK_THROWS_AS(classify(Vector::Zero(pr.d_z() + 1), pr), std::invalid_argument);
}

TEST_CASE("stealth risk rises with attack probability mass") {
  CHECK(stealth_risk({0.25, 0.5, 0.25}) == doctest::Approx(4.0).epsilon(1e-4));
  CHECK(stealth_risk({1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(3.0).epsilon(1e-4));
  // multi-stage mass counts double
  CHECK(stealth_risk({0.25, 0.25, 0.5}) > stealth_risk({0.25, 0.5, 0.25}));
  CHECK(stealth_risk({0.2, 0.4, 0.4}) > stealth_risk({0.4, 0.3, 0.3}));
  // vanishing normal mass stays finite thanks to the regularizer
  double blown = stealth_risk({0.0, 0.5, 0.5});
  CHECK(std::isfinite(blown));
  CHECK(blown == doctest::Approx(1.5e6).epsilon(1e-3));
}

TEST_CASE("validation gate confirms, suppresses, and passes through") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 404);
  p.w_cls.setZero();

  // reference drawn from the same distribution the encoder will see
  std::vector<Vector> ref;
  for (int i = 0; i < 30; ++i)
    ref.push_back(encode(random_window(cfg.window, 3, derive_seed(0xabc, i)), p));
  AdeGate gate = calibrate_gate(ref, cfg, 55);

  Matrix win = random_window(cfg.window, 3, 0xfeed);
  std::vector<Vector> recent;
  for (int i = 0; i < 10; ++i)
    recent.push_back(encode(random_window(cfg.window, 3, derive_seed(0xdef, i)), p));

  // a normal call never consults the statistical gate
  p.b_cls << 5.0, 0.0, 0.0;
  ValidatedDecision normal = classify_validated(win, p, gate, recent);
  CHECK(normal.label == AttackClass::None);
  CHECK(normal.confidence == doctest::Approx(normal.probs.p_n));
  CHECK_FALSE(normal.validated);
  CHECK(normal.mmd_stat == 0.0);
  CHECK(normal.p_value == 1.0);

  // an attack call with no pooled evidence yet is suppressed at half weight
  p.b_cls << 0.0, std::log(18.0), 0.0;
  ValidatedDecision lonely = classify_validated(win, p, gate, {});
  CHECK(lonely.label == AttackClass::None);
  CHECK(lonely.confidence == doctest::Approx(0.45).epsilon(1e-9));
  CHECK_FALSE(lonely.validated);
  CHECK(lonely.mmd_stat == 0.0);
  CHECK(lonely.p_value == 1.0);

  // force-accepting thresholds confirm the attack at full confidence
  AdeGate open_gate = gate;
  std::fill(open_gate.tau_by_size.begin(), open_gate.tau_by_size.end(), -1e9);
  ValidatedDecision confirmed = classify_validated(win, p, open_gate, recent);
  CHECK(confirmed.label == AttackClass::Single);
  CHECK(confirmed.confidence == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(confirmed.validated);
  CHECK(confirmed.p_value > 0.0);
  CHECK(confirmed.p_value <= 1.0);

  // force-rejecting thresholds suppress to normal at half confidence
  AdeGate shut_gate = gate;
  std::fill(shut_gate.tau_by_size.begin(), shut_gate.tau_by_size.end(), 1e9);
  ValidatedDecision suppressed = classify_validated(win, p, shut_gate, recent);
  CHECK(suppressed.label == AttackClass::None);
  CHECK(suppressed.confidence == doctest::Approx(0.45).epsilon(1e-9));
  CHECK_FALSE(suppressed.validated);
  CHECK(suppressed.mmd_stat == confirmed.mmd_stat);

  // the pooled test set is the newest max_batch - 1 embeddings plus z
  std::vector<Vector> pool(recent.end() - (gate.max_batch - 1), recent.end());
  pool.push_back(encode(win, p));
  CHECK(confirmed.mmd_stat == gate_statistic(pool, gate));
}

TEST_CASE("statistical gating reduces false alarms on normal data") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 3, 42);
  p.b_cls << 0.0, 0.8, 0.8;  // deliberately trigger-happy classifier

  std::vector<Vector> ref;
  for (int i = 0; i < 60; ++i)
    ref.push_back(encode(random_window(cfg.window, 3, derive_seed(0x5a5a, i)), p));
  AdeGate gate = calibrate_gate(ref, cfg, 7);

  int raw_alarms = 0, gated_alarms = 0;
  std::vector<Vector> recent;
  for (int t = 0; t < 300; ++t) {
    Matrix win = random_window(cfg.window, 3, derive_seed(0x600d, t));
    ValidatedDecision d = classify_validated(win, p, gate, recent);
    if (d.probs.argmax() != AttackClass::None) ++raw_alarms;
    if (d.label != AttackClass::None) ++gated_alarms;
    recent.push_back(d.z);
    if (static_cast<int>(recent.size()) > gate.max_batch - 1) recent.erase(recent.begin());
  }
  INFO("raw ", raw_alarms, " gated ", gated_alarms);
  CHECK(raw_alarms > 100);              // the ungated classifier cries wolf
  CHECK(gated_alarms * 2 < raw_alarms); // the gate silences most of it
}

TEST_CASE("training separates the three classes on synthetic residuals") {
  AdeConfig cfg = small_config();
  auto train = synthetic_windows(50, cfg.window, 1);
  auto val = synthetic_windows(20, cfg.window, 2);

  AdeTrainReport report;
  AdeTrainOptions opts;
  opts.report = &report;
  AdeParams p = train_ade(train, val, cfg, 99, FreezeMode::None, nullptr, opts);

  CHECK(report.mmd_active);
  CHECK(report.best_val < report.initial_val);
  CHECK(report.val_losses.size() >= 2);
  double acc = val_accuracy(val, p);
  INFO("validation accuracy ", acc);
  CHECK(acc >= 0.9);

  // whitening was fitted from the training windows, not left at identity
  CHECK(p.r_std.size() == 3);
  CHECK(p.r_mean.norm() > 0.0);
}

TEST_CASE("the discrimination term widens the gap between attack embeddings") {
  AdeConfig cfg = small_config();
  auto train = synthetic_windows(50, cfg.window, 11);
  auto val = synthetic_windows(20, cfg.window, 12);

  AdeConfig plain = cfg;
  plain.beta = 0.0;
  AdeParams with_mmd = train_ade(train, val, cfg, 314);
  AdeParams without = train_ade(train, val, plain, 314);

  double gap_with = latent_attack_mmd(val, with_mmd);
  double gap_without = latent_attack_mmd(val, without);
  INFO("latent mmd with ", gap_with, " without ", gap_without);
  CHECK(gap_with > gap_without);
}

TEST_CASE("training proceeds when one attack class is absent") {
  AdeConfig cfg = small_config();
  auto train = synthetic_windows(50, cfg.window, 21, false);
  auto val = synthetic_windows(20, cfg.window, 22, false);

  AdeTrainReport report;
  AdeTrainOptions opts;
  opts.report = &report;
  AdeParams p = train_ade(train, val, cfg, 5, FreezeMode::None, nullptr, opts);
  CHECK_FALSE(report.mmd_active);
  CHECK(val_accuracy(val, p) >= 0.9);
  CHECK_THROWS_AS(latent_attack_mmd(val, p), std::invalid_argument);
}

TEST_CASE("freezing the encoder only moves the classifier head") {
  AdeConfig cfg = small_config();
  cfg.epochs = 5;
  cfg.patience = 5;
  auto train = synthetic_windows(20, cfg.window, 31);
  auto val = synthetic_windows(8, cfg.window, 32);

  AdeParams base = init_ade(cfg, 3, 1234);
  base.r_mean = Vector::Constant(3, 0.25);
  base.r_std = Vector::Constant(3, 1.5);

  AdeParams frozen = train_ade(train, val, cfg, 6, FreezeMode::FreezeEncoder, &base);
  CHECK(same_gru(frozen.fwd, base.fwd));
  CHECK(same_gru(frozen.bwd, base.bwd));
  CHECK_FALSE(same_matrix(frozen.w_cls, base.w_cls));
  // resuming from init keeps its whitening frame untouched
  CHECK((frozen.r_mean.array() == base.r_mean.array()).all());
  CHECK((frozen.r_std.array() == base.r_std.array()).all());

  AdeParams thawed = train_ade(train, val, cfg, 6, FreezeMode::None, &base);
  CHECK_FALSE(same_gru(thawed.fwd, base.fwd));
}

TEST_CASE("ade parameters round-trip through their binary file") {
  AdeConfig cfg = small_config();
  AdeParams p = init_ade(cfg, 4, 999);
  p.r_mean = Vector::Constant(4, 0.1);
  p.r_std = Vector::Constant(4, 2.0);

  const std::string path = "ade_roundtrip.bin";
  save_ade(p, path);
  AdeParams back = load_ade(path);
  std::remove(path.c_str());

  CHECK(back.window == p.window);
  CHECK(back.d_r == p.d_r);
  CHECK(back.d_h == p.d_h);
  Matrix win = random_window(cfg.window, 4, 31337);
  Vector z1 = encode(win, p), z2 = encode(win, back);
  for (Eigen::Index i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);
  ClassProbabilities c1 = classify(z1, p), c2 = classify(z2, back);
  CHECK(c1.p_n == c2.p_n);
  CHECK(c1.p_as == c2.p_as);
  CHECK(c1.p_am == c2.p_am);
}

TEST_CASE("training validates its inputs") {
  AdeConfig cfg = small_config();
  auto train = synthetic_windows(10, cfg.window, 41);
  auto val = synthetic_windows(4, cfg.window, 42);

  CHECK_THROWS_AS(train_ade({}, val, cfg, 1), std::invalid_argument);
  CHECK_THROWS_AS(train_ade(train, {}, cfg, 1), std::invalid_argument);

  auto bad = train;
  bad.front().window = Matrix::Zero(cfg.window + 2, 3);
  CHECK_THROWS_AS(train_ade(bad, val, cfg, 1), std::invalid_argument);

  AdeParams mismatched = init_ade(cfg, 5, 3);
  CHECK_THROWS_AS(train_ade(train, val, cfg, 1, FreezeMode::None, &mismatched),
                  std::invalid_argument);
}

TEST_CASE("the mmd sign flag flips the optimization direction") {
  AdeConfig cfg = small_config();
  cfg.epochs = 25;
  auto train = synthetic_windows(40, cfg.window, 51);
  auto val = synthetic_windows(15, cfg.window, 52);

  AdeConfig literal = cfg;
  literal.mmd_sign = 1;
  AdeParams maximize = train_ade(train, val, cfg, 2718);
  AdeParams minimize = train_ade(train, val, literal, 2718);
  CHECK(latent_attack_mmd(val, maximize) > latent_attack_mmd(val, minimize));
}
