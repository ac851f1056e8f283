#include "hydro/ade/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hydro/core/rng.hpp"

namespace hydro::ade {

namespace {

double rbf(const Vector& a, const Vector& b, double two_sigma_sq) {
  return std::exp(-(a - b).squaredNorm() / two_sigma_sq);
}

void check_sets(const std::vector<Vector>& a, const std::vector<Vector>& b, double bandwidth) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mmd2: empty sample set");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("mmd2: bandwidth must be positive");
  if (a.front().size() != b.front().size())
    throw std::invalid_argument("mmd2: sample dimension mismatch");
}

}  // namespace

double mmd2(const std::vector<Vector>& a, const std::vector<Vector>& b, double bandwidth,
            MmdEstimator estimator) {
  check_sets(a, b, bandwidth);
  const double two_sigma_sq = 2.0 * bandwidth * bandwidth;
  const auto m = static_cast<double>(a.size());
  const auto n = static_cast<double>(b.size());

  double cross = 0.0;
  for (const Vector& ai : a)
    for (const Vector& bj : b) cross += rbf(ai, bj, two_sigma_sq);

  if (estimator == MmdEstimator::Biased) {
    double aa = 0.0, bb = 0.0;
    for (const Vector& ai : a)
      for (const Vector& aj : a) aa += rbf(ai, aj, two_sigma_sq);
    for (const Vector& bi : b)
      for (const Vector& bj : b) bb += rbf(bi, bj, two_sigma_sq);
    return aa / (m * m) + bb / (n * n) - 2.0 * cross / (m * n);
  }

  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("mmd2: the unbiased estimator needs at least 2 samples per set");
  double aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) aa += rbf(a[i], a[j], two_sigma_sq);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) bb += rbf(b[i], b[j], two_sigma_sq);
  return aa / (m * (m - 1.0)) + bb / (n * (n - 1.0)) - 2.0 * cross / (m * n);
}

MmdGrads mmd2_biased_backward(const std::vector<Vector>& a, const std::vector<Vector>& b,
                              double bandwidth) {
  check_sets(a, b, bandwidth);
  const double two_sigma_sq = 2.0 * bandwidth * bandwidth;
  const double sigma_sq = bandwidth * bandwidth;
  const auto m = static_cast<double>(a.size());
  const auto n = static_cast<double>(b.size());

  MmdGrads g;
  g.d_a.assign(a.size(), Vector::Zero(a.front().size()));
  g.d_b.assign(b.size(), Vector::Zero(b.front().size()));

  // d k(x, y) / d x = k(x, y) (y - x) / sigma^2
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) {
      double k = rbf(a[i], a[j], two_sigma_sq);
      g.d_a[i] += (2.0 / (m * m)) * k * (a[j] - a[i]) / sigma_sq;
    }
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double k = rbf(b[i], b[j], two_sigma_sq);
      g.d_b[i] += (2.0 / (n * n)) * k * (b[j] - b[i]) / sigma_sq;
    }
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double k = rbf(a[i], b[j], two_sigma_sq);
      // the cross term pulls a_i toward b_j and b_j toward a_i equally
      Vector pull = k * (b[j] - a[i]) / sigma_sq;
      g.d_a[i] -= (2.0 / (m * n)) * pull;
      g.d_b[j] += (2.0 / (m * n)) * pull;
    }
  return g;
}

double median_bandwidth(const std::vector<Vector>& pooled) {
  if (pooled.size() < 2)
    throw std::invalid_argument("median_bandwidth: need at least two samples");
  std::vector<double> dists;
  dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      dists.push_back((pooled[i] - pooled[j]).norm());
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return std::max(dists[dists.size() / 2], 1e-9);
}

double permutation_threshold(const std::vector<Vector>& reference, int b_perms, double alpha,
                             std::uint64_t seed, int test_batch, double bandwidth,
                             std::vector<double>* null_stats) {
  if (test_batch < 2) throw std::invalid_argument("permutation_threshold: test_batch must be >= 2");
  if (static_cast<int>(reference.size()) < 2 * test_batch)
    throw std::invalid_argument(
        "permutation_threshold: reference must hold at least twice the test batch");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("permutation_threshold: alpha must lie in (0, 1]");
  if (b_perms < 1) throw std::invalid_argument("permutation_threshold: b_perms must be >= 1");

  if (bandwidth == 0.0) bandwidth = median_bandwidth(reference);
  const double two_sigma_sq = 2.0 * bandwidth * bandwidth;

  // The kernel Gram matrix never changes across permutations, so precompute
  // it once; each permutation then only regroups partial sums.
  const auto n = reference.size();
  Matrix gram(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double k = rbf(reference[i], reference[j], two_sigma_sq);
      gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k;
      gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = k;
    }
  }
  Vector row_total(n);  // off-diagonal row sums
  for (std::size_t i = 0; i < n; ++i)
    row_total[static_cast<Eigen::Index>(i)] = gram.row(static_cast<Eigen::Index>(i)).sum() - 1.0;
  const double total_ord = row_total.sum();

  Rng rng(derive_seed(seed, 0x9e24));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  const auto s = static_cast<std::size_t>(test_batch);
  const auto sd = static_cast<double>(s);
  const auto td = static_cast<double>(n - s);

  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(b_perms));
  for (int p = 0; p < b_perms; ++p) {
    // partial Fisher-Yates: only the head positions need resampling
    for (std::size_t i = 0; i < s; ++i)
      std::swap(idx[i], idx[i + rng.uniform_int(static_cast<std::uint64_t>(n - i))]);

    double head_ord = 0.0, head_rows = 0.0;
    for (std::size_t a = 0; a < s; ++a) {
      head_rows += row_total[static_cast<Eigen::Index>(idx[a])];
      for (std::size_t b = 0; b < s; ++b)
        if (a != b)
          head_ord += gram(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
    }
    double cross = head_rows - head_ord;
    double tail_ord = total_ord - head_ord - 2.0 * cross;
    stats.push_back(head_ord / (sd * (sd - 1.0)) + tail_ord / (td * (td - 1.0)) -
                    2.0 * cross / (sd * td));
  }
  std::sort(stats.begin(), stats.end());

  // conservative plug-in quantile: ceil((1 - alpha) (B + 1)) - 1, clamped
  double rank = std::ceil((1.0 - alpha) * (static_cast<double>(b_perms) + 1.0));
  auto q = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  q = std::min(q, stats.size() - 1);
  double tau = stats[q];
  if (null_stats) *null_stats = std::move(stats);
  return tau;
}

}  // namespace hydro::ade
