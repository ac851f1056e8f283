#include "hydro/ade/classify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hydro/ade/mmd.hpp"
#include "hydro/core/rng.hpp"
#include "hydro/nn/serialize.hpp"

namespace hydro::ade {

attack::AttackClass ClassProbabilities::argmax() const {
  // strict comparisons keep the lowest index on ties: N before A_S before A_M
  if (p_as > p_n || p_am > p_n)
    return p_am > p_as ? attack::AttackClass::Multi : attack::AttackClass::Single;
  return attack::AttackClass::None;
}

double ClassProbabilities::confidence() const { return at(argmax()); }

double ClassProbabilities::at(attack::AttackClass c) const {
  switch (c) {
    case attack::AttackClass::None: return p_n;
    case attack::AttackClass::Single: return p_as;
    case attack::AttackClass::Multi: return p_am;
  }
  throw std::invalid_argument("ClassProbabilities: unknown class");
}

ClassProbabilities classify(const Vector& z, const AdeParams& p) {
  if (z.size() != p.d_z()) throw std::invalid_argument("classify: embedding dimension mismatch");
  Vector probs = nn::softmax(Vector(p.w_cls * z + p.b_cls));
  return ClassProbabilities{probs[0], probs[1], probs[2]};
}

double stealth_risk(const ClassProbabilities& probs, double omega, double eps) {
  return (probs.p_as + omega * probs.p_am) / (probs.p_n + eps);
}

double AdeGate::threshold(int test_size) const {
  if (tau_by_size.empty()) throw std::logic_error("AdeGate: gate has not been calibrated");
  int idx = std::clamp(test_size, 2, 1 + static_cast<int>(tau_by_size.size())) - 2;
  return tau_by_size[static_cast<std::size_t>(idx)];
}

double AdeGate::p_value(int test_size, double stat) const {
  if (null_by_size.empty()) throw std::logic_error("AdeGate: gate has not been calibrated");
  int idx = std::clamp(test_size, 2, 1 + static_cast<int>(null_by_size.size())) - 2;
  const std::vector<double>& null = null_by_size[static_cast<std::size_t>(idx)];
  auto ge = std::lower_bound(null.begin(), null.end(), stat);
  auto count = static_cast<double>(null.end() - ge);
  return (1.0 + count) / (static_cast<double>(null.size()) + 1.0);
}

AdeGate calibrate_gate(const std::vector<Vector>& reference, const AdeConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  if (static_cast<int>(reference.size()) < cfg.min_reference)
    throw std::invalid_argument("calibrate_gate: fewer reference embeddings than min_reference");
  if (static_cast<int>(reference.size()) < 2 * cfg.validation_batch)
    throw std::invalid_argument("calibrate_gate: reference must hold twice the validation batch");

  AdeGate gate;
  gate.reference = reference;
  gate.max_batch = cfg.validation_batch;
  gate.alpha = cfg.alpha;
  gate.bandwidth = median_bandwidth(reference);

  const double two_sigma_sq = 2.0 * gate.bandwidth * gate.bandwidth;
  const auto n = static_cast<double>(reference.size());
  double self = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i)
    for (std::size_t j = 0; j < reference.size(); ++j)
      if (i != j) self += std::exp(-(reference[i] - reference[j]).squaredNorm() / two_sigma_sq);
  gate.ref_self_term = self / (n * (n - 1.0));

  for (int s = 2; s <= cfg.validation_batch; ++s) {
    std::vector<double> null;
    double tau = permutation_threshold(reference, cfg.permutations, cfg.alpha,
                                       derive_seed(seed, static_cast<std::uint64_t>(s)), s,
                                       gate.bandwidth, &null);
    gate.tau_by_size.push_back(tau);
    gate.null_by_size.push_back(std::move(null));
  }
  return gate;
}

double gate_statistic(const std::vector<Vector>& test, const AdeGate& gate) {
  if (test.size() < 2) throw std::invalid_argument("gate_statistic: need at least 2 embeddings");
  if (gate.reference.size() < 2) throw std::logic_error("gate_statistic: reference too small");
  const double two_sigma_sq = 2.0 * gate.bandwidth * gate.bandwidth;
  const auto m = static_cast<double>(test.size());
  const auto n = static_cast<double>(gate.reference.size());

  double tt = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i)
    for (std::size_t j = 0; j < test.size(); ++j)
      if (i != j) tt += std::exp(-(test[i] - test[j]).squaredNorm() / two_sigma_sq);
  for (const Vector& t : test)
    for (const Vector& r : gate.reference)
      cross += std::exp(-(t - r).squaredNorm() / two_sigma_sq);

  return tt / (m * (m - 1.0)) + gate.ref_self_term - 2.0 * cross / (m * n);
}

ValidatedDecision classify_validated(const Matrix& window, const AdeParams& params,
                                     const AdeGate& gate, const std::vector<Vector>& recent) {
  ValidatedDecision d;
  d.z = encode(window, params);
  d.probs = classify(d.z, params);

  attack::AttackClass raw = d.probs.argmax();
  if (raw == attack::AttackClass::None) {
    d.label = raw;
    d.confidence = d.probs.p_n;
    return d;
  }

  std::vector<Vector> test;
  auto take = std::min(recent.size(), static_cast<std::size_t>(gate.max_batch) - 1);
  test.reserve(take + 1);
  test.insert(test.end(), recent.end() - static_cast<std::ptrdiff_t>(take), recent.end());
  test.push_back(d.z);

  if (test.size() < 2) {
    // first window of a run: no pooled evidence yet, so the attack call
    // cannot be statistically confirmed and is suppressed
    d.label = attack::AttackClass::None;
    d.confidence = 0.5 * d.probs.confidence();
    return d;
  }

  d.mmd_stat = gate_statistic(test, gate);
  int s = static_cast<int>(test.size());
  d.p_value = gate.p_value(s, d.mmd_stat);
  if (d.mmd_stat > gate.threshold(s)) {
    d.label = raw;
    d.confidence = d.probs.confidence();
    d.validated = true;
  } else {
    d.label = attack::AttackClass::None;
    d.confidence = 0.5 * d.probs.confidence();
  }
  return d;
}

void save_gate(const AdeGate& gate, const std::string& path) {
  if (gate.tau_by_size.empty() || gate.null_by_size.empty())
    throw std::logic_error("save_gate: gate has not been calibrated");

  auto n_ref = static_cast<Eigen::Index>(gate.reference.size());
  auto d_z = gate.reference.empty() ? 0 : gate.reference.front().size();
  Matrix ref(n_ref, d_z);
  for (Eigen::Index i = 0; i < n_ref; ++i) ref.row(i) = gate.reference[static_cast<std::size_t>(i)];

  auto n_sizes = static_cast<Eigen::Index>(gate.null_by_size.size());
  auto n_perms = static_cast<Eigen::Index>(gate.null_by_size.front().size());
  Matrix null(n_sizes, n_perms);
  for (Eigen::Index i = 0; i < n_sizes; ++i) {
    const std::vector<double>& row = gate.null_by_size[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != n_perms)
      throw std::logic_error("save_gate: ragged null distributions");
    for (Eigen::Index j = 0; j < n_perms; ++j) null(i, j) = row[static_cast<std::size_t>(j)];
  }

  Vector meta(4);
  meta << static_cast<double>(gate.max_batch), gate.alpha, gate.bandwidth, gate.ref_self_term;
  Vector tau = Eigen::Map<const Vector>(gate.tau_by_size.data(), n_sizes);

  nn::save_tensors(path, {{"meta", nn::Tensor::from_vector(meta)},
                          {"reference", nn::Tensor::from_matrix(ref)},
                          {"tau", nn::Tensor::from_vector(tau)},
                          {"null", nn::Tensor::from_matrix(null)}});
}

AdeGate load_gate(const std::string& path) {
  auto tensors = nn::load_tensors(path);
  Vector meta = nn::find_tensor(tensors, "meta").as_vector();
  if (meta.size() != 4) throw std::runtime_error("load_gate: bad metadata block");

  AdeGate gate;
  gate.max_batch = static_cast<int>(meta[0]);
  gate.alpha = meta[1];
  gate.bandwidth = meta[2];
  gate.ref_self_term = meta[3];

  Matrix ref = nn::find_tensor(tensors, "reference").as_matrix();
  gate.reference.reserve(static_cast<std::size_t>(ref.rows()));
  for (Eigen::Index i = 0; i < ref.rows(); ++i) gate.reference.push_back(ref.row(i));

  Vector tau = nn::find_tensor(tensors, "tau").as_vector();
  gate.tau_by_size.assign(tau.data(), tau.data() + tau.size());

  Matrix null = nn::find_tensor(tensors, "null").as_matrix();
  for (Eigen::Index i = 0; i < null.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(null.cols()));
    for (Eigen::Index j = 0; j < null.cols(); ++j) row[static_cast<std::size_t>(j)] = null(i, j);
    gate.null_by_size.push_back(std::move(row));
  }
  return gate;
}

}  // namespace hydro::ade
