#include "hydro/harness/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

#include "hydro/core/rng.hpp"
#include "hydro/dt/train.hpp"

namespace hydro::harness {

namespace {

constexpr double kCriticalDepth = 0.10;  // excursion fraction of the safe band
constexpr double kMinorDepth = 0.05;
constexpr double kMinorDuration = 5.0;  // seconds

int cls_idx(attack::AttackClass c) {
  switch (c) {
    case attack::AttackClass::None: return 0;
    case attack::AttackClass::Single: return 1;
    default: return 2;
  }
}

using Confusion = std::array<std::array<long, 3>, 3>;  // [truth][predicted]

ClassMetrics one_vs_rest(const Confusion& m, int c) {
  long tp = m[c][c], fp = 0, fn = 0, support = 0;
  for (int i = 0; i < 3; ++i) {
    if (i != c) {
      fp += m[i][c];
      fn += m[c][i];
    }
    support += m[c][i];
  }
  ClassMetrics out;
  out.support = support;
  out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double macro_f1_of(const Confusion& m) {
  return 0.5 * (one_vs_rest(m, 1).f1 + one_vs_rest(m, 2).f1);
}

// percentile interval with the point estimate kept in the pool, so the
// reported CI always contains it
Interval percentile_ci(std::vector<double> samples, double point) {
  samples.push_back(point);
  Interval ci;
  ci.lo = dt::percentile(samples, 2.5);
  ci.hi = dt::percentile(std::move(samples), 97.5);
  return ci;
}

void check_rate(double r, const char* name) {
  if (!(r >= 0.0 && r <= 1.0))
    throw std::logic_error(std::string("MetricsReport: ") + name + " outside [0, 1]");
}

}  // namespace

void DisruptionCostParams::validate() const {
  if (crit_sensors.size() != weights.size())
    throw std::invalid_argument("DisruptionCostParams: one weight per critical sensor");
  if (crit_sensors.empty())
    throw std::invalid_argument("DisruptionCostParams: critical sensor set is empty");
  for (double w : weights)
    if (!(w > 0.0)) throw std::invalid_argument("DisruptionCostParams: weights must be positive");
  if (c_prod < 0.0 || c_restart < 0.0)
    throw std::invalid_argument("DisruptionCostParams: costs must be nonnegative");
}

void MetricsReport::validate() const {
  for (const auto* cm : {&normal, &single, &multi}) {
    check_rate(cm->precision, "precision");
    check_rate(cm->recall, "recall");
    check_rate(cm->f1, "f1");
  }
  check_rate(macro_attack_f1, "macro attack F1");
  check_rate(far, "FAR");
  check_rate(far_worst_hour, "worst-hour FAR");
  check_rate(miss_rate, "miss rate");
  check_rate(critical_violation_rate, "critical violation rate");
  check_rate(minor_violation_rate, "minor violation rate");
  check_rate(clopper_pearson_upper, "Clopper-Pearson bound");
  if (far_worst_hour + 1e-12 < far)
    throw std::logic_error("MetricsReport: worst-hour FAR below overall FAR");
  if (attacks_total > 0 && !macro_f1_ci.contains(macro_attack_f1))
    throw std::logic_error("MetricsReport: macro F1 CI does not contain the point estimate");
  if (!far_ci.contains(far))
    throw std::logic_error("MetricsReport: FAR CI does not contain the point estimate");
  if (d_normalized && d_rel_mean >= 0.0 && !d_rel_ci.contains(d_rel_mean))
    throw std::logic_error("MetricsReport: D_rel CI does not contain the point estimate");
}

MetricsReport compute_detection_metrics(const std::vector<EpisodeResult>& results) {
  MetricsReport report;

  Confusion total{};
  std::vector<Confusion> per_episode;
  std::vector<std::array<long, 2>> per_episode_far;  // {false alarms, normal samples}
  per_episode.reserve(results.size());

  std::map<long, std::array<long, 2>> hour_buckets;
  double clock_offset = 0.0;

  std::vector<double> mttds;
  for (const auto& ep : results) {
    Confusion m{};
    std::array<long, 2> fa{0, 0};
    double step = ep.records.size() > 1 ? ep.records[1].time - ep.records[0].time : 1.0;
    for (const auto& rec : ep.records) {
      m[cls_idx(rec.truth)][cls_idx(rec.predicted)] += 1;
      if (rec.truth == attack::AttackClass::None) {
        fa[1] += 1;
        const bool alarm = rec.predicted != attack::AttackClass::None;
        if (alarm) fa[0] += 1;
        auto& bucket = hour_buckets[static_cast<long>((clock_offset + rec.time) / 3600.0)];
        bucket[1] += 1;
        if (alarm) bucket[0] += 1;
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) total[i][j] += m[i][j];
    per_episode.push_back(m);
    per_episode_far.push_back(fa);
    clock_offset += ep.records.empty() ? 0.0 : ep.records.back().time + step;

    if (ep.scenario && ep.scenario->cls != attack::AttackClass::None) {
      report.attacks_total += 1;
      bool found = false;
      for (const auto& rec : ep.records) {
        if (rec.truth != attack::AttackClass::None &&
            rec.predicted != attack::AttackClass::None) {
          mttds.push_back(rec.time - ep.scenario->start);
          found = true;
          break;
        }
      }
      if (found) report.attacks_detected += 1;
    }
  }

  report.normal = one_vs_rest(total, 0);
  report.single = one_vs_rest(total, 1);
  report.multi = one_vs_rest(total, 2);
  report.macro_attack_f1 = macro_f1_of(total);
  report.eps_disc = std::abs(report.single.f1 - report.multi.f1);

  long fa_total = 0, normal_total = 0;
  for (const auto& fa : per_episode_far) {
    fa_total += fa[0];
    normal_total += fa[1];
  }
  report.far = normal_total > 0 ? static_cast<double>(fa_total) / normal_total : 0.0;
  report.far_worst_hour = report.far;
  for (const auto& [hour, bucket] : hour_buckets)
    if (bucket[1] > 0)
      report.far_worst_hour =
          std::max(report.far_worst_hour, static_cast<double>(bucket[0]) / bucket[1]);

  if (!mttds.empty()) {
    report.mttd_mean = 0.0;
    for (double v : mttds) {
      report.mttd_mean += v;
      report.mttd_worst = std::max(report.mttd_worst, v);
    }
    report.mttd_mean /= static_cast<double>(mttds.size());
  }
  if (report.attacks_total > 0)
    report.miss_rate =
        static_cast<double>(report.attacks_total - report.attacks_detected) / report.attacks_total;

  // episode-level bootstrap of the pooled statistics
  if (!per_episode.empty()) {
    const int n = static_cast<int>(per_episode.size());
    Rng rng(derive_seed(0xca11, static_cast<std::uint64_t>(n)));
    std::vector<double> f1_samples, far_samples;
    f1_samples.reserve(2000);
    far_samples.reserve(2000);
    for (int b = 0; b < 2000; ++b) {
      Confusion m{};
      long fa = 0, ns = 0;
      for (int i = 0; i < n; ++i) {
        int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) m[r][c] += per_episode[pick][r][c];
        fa += per_episode_far[pick][0];
        ns += per_episode_far[pick][1];
      }
      f1_samples.push_back(macro_f1_of(m));
      far_samples.push_back(ns > 0 ? static_cast<double>(fa) / ns : 0.0);
    }
    report.macro_f1_ci = percentile_ci(std::move(f1_samples), report.macro_attack_f1);
    report.far_ci = percentile_ci(std::move(far_samples), report.far);
  }
  return report;
}

double disruption_cost(const EpisodeResult& episode, const DisruptionCostParams& cost) {
  cost.validate();
  if (!episode.detected() || episode.records.empty()) return 0.0;
  const double t_d = episode.t_detect;
  const double t_r =
      episode.t_recover >= 0.0 ? episode.t_recover : episode.records.back().time;

  auto weighted = [&](const StepRecord& rec) {
    if (rec.crit_dev.size() != static_cast<Eigen::Index>(cost.weights.size()))
      throw std::invalid_argument("disruption_cost: cost params do not match the episode");
    double s = 0.0;
    for (size_t i = 0; i < cost.weights.size(); ++i)
      s += cost.weights[i] * rec.crit_dev[static_cast<Eigen::Index>(i)];
    return s;
  };

  double integral = 0.0;
  for (size_t i = 0; i + 1 < episode.records.size(); ++i) {
    const auto& a = episode.records[i];
    const auto& b = episode.records[i + 1];
    if (b.time <= t_d || a.time >= t_r) continue;
    integral += 0.5 * (weighted(a) + weighted(b)) * (b.time - a.time);
  }
  double total = integral + cost.c_prod * (t_r - t_d);
  if (episode.policy == MitigationPolicy::Shutdown || episode.failsafe_tripped)
    total += cost.c_restart;
  return total;
}

void compute_resilience_metrics(const std::vector<EpisodeResult>& resilient,
                                const std::vector<EpisodeResult>& shutdown,
                                const DisruptionCostParams& cost, MetricsReport& report) {
  cost.validate();
  std::map<std::uint64_t, const EpisodeResult*> pair_by_seed;
  for (const auto& ep : shutdown)
    if (ep.scenario) pair_by_seed[ep.scenario->seed] = &ep;

  std::vector<double> d_rel, d_raw, recoveries;
  long critical_attacks = 0, attack_eps = 0;
  long minor_steps = 0, total_steps = 0;
  bool any_unpaired = false;

  for (const auto& ep : resilient) {
    if (!ep.scenario || ep.scenario->cls == attack::AttackClass::None) continue;
    attack_eps += 1;
    total_steps += static_cast<long>(ep.records.size());

    // excursion events over the true-state safety band
    bool critical = false;
    size_t i = 0;
    while (i < ep.records.size()) {
      if (ep.records[i].excursion_depth <= 0.0) {
        ++i;
        continue;
      }
      size_t j = i;
      double depth = 0.0;
      while (j < ep.records.size() && ep.records[j].excursion_depth > 0.0) {
        depth = std::max(depth, ep.records[j].excursion_depth);
        ++j;
      }
      const double duration = ep.records[j - 1].excursion_duration;
      if (depth > kCriticalDepth)
        critical = true;
      else if (depth < kMinorDepth && duration < kMinorDuration)
        minor_steps += static_cast<long>(j - i);
      i = j;
    }
    if (critical) critical_attacks += 1;

    if (ep.detected() && ep.t_recover >= 0.0) recoveries.push_back(ep.t_recover - ep.t_detect);
    report.recovery_truncated += ep.recovery_truncated ? 1 : 0;

    if (!ep.detected()) continue;  // misses carry no mitigation window
    const double d_res = disruption_cost(ep, cost);
    auto it = pair_by_seed.find(ep.scenario->seed);
    if (it == pair_by_seed.end() || !it->second->detected()) {
      any_unpaired = true;
      d_raw.push_back(d_res);
      continue;
    }
    const double d_shut = disruption_cost(*it->second, cost);
    if (d_shut > 0.0)
      d_rel.push_back(d_res / d_shut);
    else
      d_raw.push_back(d_res);
  }

  std::vector<double> shutdown_recoveries;
  for (const auto& ep : shutdown)
    if (ep.detected() && ep.t_recover >= 0.0)
      shutdown_recoveries.push_back(ep.t_recover - ep.t_detect);

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? -1.0 : s / static_cast<double>(v.size());
  };

  report.d_normalized = !any_unpaired && !d_rel.empty();
  report.d_rel_mean = mean_of(d_rel);
  report.d_raw_mean = mean_of(d_raw);
  report.recovery_mean = mean_of(recoveries);
  report.recovery_shutdown_mean = mean_of(shutdown_recoveries);
  if (attack_eps > 0) {
    report.critical_violation_rate = static_cast<double>(critical_attacks) / attack_eps;
    report.clopper_pearson_upper =
        clopper_pearson_upper(static_cast<int>(critical_attacks), static_cast<int>(attack_eps));
  }
  if (total_steps > 0)
    report.minor_violation_rate = static_cast<double>(minor_steps) / total_steps;

  if (!d_rel.empty()) {
    Rng rng(derive_seed(0xd6e1, static_cast<std::uint64_t>(d_rel.size())));
    std::vector<double> means;
    means.reserve(2000);
    const int n = static_cast<int>(d_rel.size());
    for (int b = 0; b < 2000; ++b) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += d_rel[rng.uniform_int(static_cast<std::uint64_t>(n))];
      means.push_back(s / n);
    }
    report.d_rel_ci = percentile_ci(std::move(means), report.d_rel_mean);
  }
}

BootstrapResult bootstrap_ci(const std::vector<double>& a, const std::vector<double>& b,
                             int resamples, std::uint64_t seed) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("bootstrap_ci: paired samples must align and be non-empty");
  if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be positive");

  const int n = static_cast<int>(a.size());
  std::vector<double> diff(a.size());
  double point = 0.0;
  for (int i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    point += diff[i];
  }
  point /= n;

  Rng rng(derive_seed(seed, 0xb007));
  std::vector<double> means;
  means.reserve(static_cast<size_t>(resamples) + 1);
  means.push_back(point);
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += diff[rng.uniform_int(static_cast<std::uint64_t>(n))];
    means.push_back(s / n);
  }

  BootstrapResult out;
  out.delta = point;
  out.ci.lo = dt::percentile(means, 2.5);
  out.ci.hi = dt::percentile(std::move(means), 97.5);
  out.significant = out.ci.lo > 0.0 || out.ci.hi < 0.0;
  return out;
}

double clopper_pearson_upper(int k, int n, double alpha) {
  if (n <= 0) throw std::invalid_argument("clopper_pearson_upper: n must be positive");
  if (k < 0 || k > n) throw std::invalid_argument("clopper_pearson_upper: k outside 0..n");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("clopper_pearson_upper: alpha outside (0, 1)");
  if (k >= n) return 1.0;
  if (k == 0) return 1.0 - std::pow(alpha, 1.0 / n);

  // smallest p with P(X <= k; n, p) <= alpha; the CDF is decreasing in p
  auto binom_cdf = [&](double p) {
    double cdf = 0.0;
    for (int i = 0; i <= k; ++i) {
      double log_pmf = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                       i * std::log(p) + (n - i) * std::log1p(-p);
      cdf += std::exp(log_pmf);
    }
    return cdf;
  };
  double lo = static_cast<double>(k) / n, hi = 1.0 - 1e-15;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (binom_cdf(mid) > alpha ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace hydro::harness
