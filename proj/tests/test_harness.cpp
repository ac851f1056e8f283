#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hydro/core/rng.hpp"
#include "hydro/harness/campaign.hpp"
#include "hydro/harness/data.hpp"
#include "hydro/harness/episode.hpp"
#include "hydro/harness/metrics.hpp"
#include "hydro/harness/preprocess.hpp"
#include "hydro/harness/report.hpp"

using namespace hydro;
using namespace hydro::harness;

namespace {

// twin that predicts "same as the newest frame": empty conv stack, identity
// head over the sensor channels, identity normalization
dt::ModelParams persistence_twin(const plant::PlantTopology& topo, int tau = 4) {
  dt::ModelParams p;
  p.tau = tau;
  p.d_y = topo.n_sensors();
  p.d_u = topo.n_actuators();
  p.keep_prob = 1.0;
  p.head_w = Matrix::Zero(p.d_y, p.d_x());
  p.head_w.leftCols(p.d_y) = Matrix::Identity(p.d_y, p.d_y);
  p.head_b = Vector::Zero(p.d_y);
  p.x_mean = Vector::Zero(p.d_x());
  p.x_std = Vector::Ones(p.d_x());
  p.y_mean = Vector::Zero(p.d_y);
  p.y_std = Vector::Ones(p.d_y);
  p.e_bar = 0.05;
  p.e_bar_rel = 0.05;
  p.l_f = 1.0;
  return p;
}

struct PipelineFixture {
  plant::PlantTopology topo = plant::PlantTopology::default_three_tank();
  dt::ModelParams dtp = persistence_twin(topo);
  ade::AdeConfig ade_cfg;
  ade::AdeParams adep;
  ade::AdeGate gate;
  SafetySpec safety;
  mpc::ControllerConfig ctrl;
  mpc::TerminalIngredients term;
  SteadyState steady;

  PipelineFixture() {
    ade_cfg.window = 10;
    ade_cfg.hidden = 8;
    ade_cfg.min_reference = 40;
    ade_cfg.validation_batch = 4;
    ade_cfg.permutations = 60;
    adep = ade::init_ade(ade_cfg, topo.n_sensors(), 31);

    plant::NominalConfig nominal;
    steady = steady_state(topo, nominal, 300, 60);
    const auto stream = residual_stream(topo, dtp, nominal, nullptr, 140, 77);
    std::vector<Vector> reference;
    for (int t = ade_cfg.window - 1; t < static_cast<int>(stream.residuals.size()); ++t) {
      auto w = ade::build_window(stream.residuals, t, ade_cfg.window);
      if (w) reference.push_back(ade::encode(*w, adep));
    }
    gate = ade::calibrate_gate(reference, ade_cfg, 5);

    safety = SafetySpec::from_topology(topo, steady.y_safe);
    CampaignConfig ccfg;
    ccfg.horizon = 4;
    ctrl = make_controller_config(topo, dtp, safety, ccfg);
    term = make_terminal_ingredients(dtp, steady, safety, ctrl, 9);
    ctrl.p = term.p;
    ctrl.validate();
  }
};

// fake episode whose records carry the given truth/predicted label streams
EpisodeResult label_episode(const std::vector<attack::AttackClass>& truth,
                            const std::vector<attack::AttackClass>& predicted,
                            std::optional<attack::AttackScenario> scenario = std::nullopt) {
  REQUIRE(truth.size() == predicted.size());
  EpisodeResult ep;
  ep.scenario = std::move(scenario);
  for (size_t i = 0; i < truth.size(); ++i) {
    StepRecord rec;
    rec.time = static_cast<double>(i);
    rec.truth = truth[i];
    rec.predicted = predicted[i];
    ep.records.push_back(std::move(rec));
  }
  return ep;
}

attack::AttackScenario fake_scenario(attack::AttackClass cls, double start, double duration,
                                     std::uint64_t seed) {
  attack::AttackScenario sc;
  sc.cls = cls;
  sc.start = start;
  sc.duration = duration;
  sc.seed = seed;
  return sc;
}

// detected episode with one critical sensor and a hand-set deviation profile
EpisodeResult cost_episode(const std::vector<double>& dev, double t_detect, double t_recover,
                           MitigationPolicy policy, std::uint64_t scenario_seed) {
  EpisodeResult ep;
  ep.policy = policy;
  ep.scenario = fake_scenario(attack::AttackClass::Single, t_detect, 10.0, scenario_seed);
  ep.t_detect = t_detect;
  ep.t_recover = t_recover;
  for (size_t i = 0; i < dev.size(); ++i) {
    StepRecord rec;
    rec.time = static_cast<double>(i);
    rec.truth = attack::AttackClass::Single;
    rec.crit_dev = Vector::Constant(1, dev[i]);
    ep.records.push_back(std::move(rec));
  }
  return ep;
}

DisruptionCostParams unit_cost(double weight = 1.0) {
  DisruptionCostParams cost;
  cost.crit_sensors = {0};
  cost.weights = {weight};
  cost.c_prod = 1.0;
  cost.c_restart = 500.0;
  cost.y_safe = Vector::Ones(1);
  return cost;
}

}  // namespace

TEST_CASE("one-sided binomial upper bound: closed forms and inversion") {
  // zero observed failures: 1 - alpha^(1/n)
  CHECK(clopper_pearson_upper(0, 51) == doctest::Approx(0.0571).epsilon(2e-3));
  CHECK(clopper_pearson_upper(0, 42) == doctest::Approx(0.069).epsilon(2e-3));
  CHECK(clopper_pearson_upper(0, 1) == doctest::Approx(0.95));
  CHECK(clopper_pearson_upper(5, 5) == 1.0);

  // general case: the bound must put exactly alpha of CDF mass at or below k;
  // checked against a direct polynomial evaluation of P(X <= 2; 20, p)
  const double p = clopper_pearson_upper(2, 20);
  const double q = 1.0 - p;
  const double cdf = std::pow(q, 20) + 20.0 * p * std::pow(q, 19) +
                     190.0 * p * p * std::pow(q, 18);
  CHECK(cdf == doctest::Approx(0.05).epsilon(1e-6));

  // monotone in k, and k = 0 stays consistent with the bisection regime
  double prev = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double b = clopper_pearson_upper(k, 10);
    CHECK(b >= prev);
    prev = b;
  }

  CHECK_THROWS_AS(clopper_pearson_upper(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(clopper_pearson_upper(-1, 5), std::invalid_argument);
  CHECK_THROWS_AS(clopper_pearson_upper(6, 5), std::invalid_argument);
  CHECK_THROWS_AS(clopper_pearson_upper(0, 5, 1.5), std::invalid_argument);
}

TEST_CASE("paired bootstrap: degenerate samples pin the interval") {
  std::vector<double> a = {1.0, 2.0, 3.0, 4.0};

  auto same = bootstrap_ci(a, a, 500, 1);
  CHECK(same.delta == 0.0);
  CHECK(same.ci.lo == 0.0);
  CHECK(same.ci.hi == 0.0);
  CHECK_FALSE(same.significant);

  std::vector<double> b = a;
  for (double& x : b) x -= 1.0;
  auto shifted = bootstrap_ci(a, b, 500, 1);
  CHECK(shifted.delta == 1.0);
  CHECK(shifted.ci.lo == 1.0);
  CHECK(shifted.ci.hi == 1.0);
  CHECK(shifted.significant);

  CHECK_THROWS_AS(bootstrap_ci(a, std::vector<double>{1.0}, 100, 0), std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_ci({}, {}, 100, 0), std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_ci(a, a, 0, 0), std::invalid_argument);
}

TEST_CASE("paired bootstrap: interval covers the true effect at its nominal rate") {
  const double effect = 0.3;
  const int trials = 500, n = 40;
  int covered = 0;
  Rng rng(2024);
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      const double base = rng.normal(0.0, 2.0);
      b[i] = base;
      a[i] = base + effect + rng.normal();
    }
    const auto r = bootstrap_ci(a, b, 1500, derive_seed(99, trial));
    if (r.ci.contains(effect)) ++covered;
  }
  const double coverage = static_cast<double>(covered) / trials;
  CHECK(coverage > 0.92);
  CHECK(coverage < 0.98);
}

TEST_CASE("detection metrics match a direct confusion-matrix oracle") {
  const int n = 10000;
  Rng rng(404);
  std::vector<attack::AttackClass> truth(n), predicted(n);
  auto draw = [&](double p_n) {
    const double u = rng.uniform();
    if (u < p_n) return attack::AttackClass::None;
    return u < p_n + (1.0 - p_n) / 2.0 ? attack::AttackClass::Single : attack::AttackClass::Multi;
  };
  for (int i = 0; i < n; ++i) {
    truth[i] = draw(0.7);
    predicted[i] = draw(0.6);
  }

  std::vector<EpisodeResult> eps;
  eps.push_back(label_episode(truth, predicted));
  const auto report = compute_detection_metrics(eps);

  long m[3][3] = {};
  auto idx = [](attack::AttackClass c) {
    return c == attack::AttackClass::None ? 0 : (c == attack::AttackClass::Single ? 1 : 2);
  };
  for (int i = 0; i < n; ++i) m[idx(truth[i])][idx(predicted[i])] += 1;
  auto prf = [&](int c) {
    long tp = m[c][c], fp = 0, fn = 0;
    for (int o = 0; o < 3; ++o)
      if (o != c) {
        fp += m[o][c];
        fn += m[c][o];
      }
    const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    return std::array<double, 3>{prec, rec, f1};
  };
  const auto pn = prf(0), ps = prf(1), pm = prf(2);
  CHECK(report.normal.precision == doctest::Approx(pn[0]).epsilon(1e-12));
  CHECK(report.normal.recall == doctest::Approx(pn[1]).epsilon(1e-12));
  CHECK(report.single.f1 == doctest::Approx(ps[2]).epsilon(1e-12));
  CHECK(report.multi.f1 == doctest::Approx(pm[2]).epsilon(1e-12));
  CHECK(report.macro_attack_f1 == doctest::Approx(0.5 * (ps[2] + pm[2])).epsilon(1e-12));
  CHECK(report.eps_disc == doctest::Approx(std::abs(ps[2] - pm[2])).epsilon(1e-12));

  long fa = 0, ns = 0;
  for (int i = 0; i < n; ++i)
    if (truth[i] == attack::AttackClass::None) {
      ++ns;
      if (predicted[i] != attack::AttackClass::None) ++fa;
    }
  CHECK(report.far == doctest::Approx(double(fa) / ns).epsilon(1e-12));
  CHECK(report.far_worst_hour >= report.far);
  report.validate();
}

TEST_CASE("perfect predictions and the always-normal baseline") {
  auto truth_for = [](double start, double dur, int len, attack::AttackClass cls) {
    std::vector<attack::AttackClass> t(len, attack::AttackClass::None);
    for (int i = 0; i < len; ++i)
      if (i >= start && i < start + dur) t[i] = cls;
    return t;
  };
  const auto t_single = truth_for(20, 60, 120, attack::AttackClass::Single);
  const auto t_multi = truth_for(30, 50, 120, attack::AttackClass::Multi);

  std::vector<EpisodeResult> perfect;
  perfect.push_back(label_episode(t_single, t_single,
                                  fake_scenario(attack::AttackClass::Single, 20, 60, 1)));
  perfect.push_back(label_episode(t_multi, t_multi,
                                  fake_scenario(attack::AttackClass::Multi, 30, 50, 2)));
  const auto ideal = compute_detection_metrics(perfect);
  CHECK(ideal.macro_attack_f1 == 1.0);
  CHECK(ideal.single.f1 == 1.0);
  CHECK(ideal.multi.f1 == 1.0);
  CHECK(ideal.eps_disc == 0.0);
  CHECK(ideal.far == 0.0);
  CHECK(ideal.far_worst_hour == 0.0);
  CHECK(ideal.mttd_mean == 0.0);
  CHECK(ideal.mttd_worst == 0.0);
  CHECK(ideal.miss_rate == 0.0);
  CHECK(ideal.attacks_total == 2);
  CHECK(ideal.attacks_detected == 2);
  ideal.validate();

  std::vector<EpisodeResult> mute;
  const std::vector<attack::AttackClass> all_n(120, attack::AttackClass::None);
  mute.push_back(label_episode(t_single, all_n,
                               fake_scenario(attack::AttackClass::Single, 20, 60, 1)));
  mute.push_back(label_episode(t_multi, all_n,
                               fake_scenario(attack::AttackClass::Multi, 30, 50, 2)));
  const auto silent = compute_detection_metrics(mute);
  CHECK(silent.single.recall == 0.0);
  CHECK(silent.multi.recall == 0.0);
  CHECK(silent.macro_attack_f1 == 0.0);
  CHECK(silent.far == 0.0);
  CHECK(silent.mttd_mean == -1.0);  // undetected attacks never enter the mean
  CHECK(silent.miss_rate == 1.0);
  CHECK(silent.attacks_detected == 0);
  silent.validate();
}

TEST_CASE("time to detection and the worst-hour false-alarm rate") {
  auto late_detector = [](double start, double dur, int len, attack::AttackClass cls,
                          double delay) {
    std::vector<attack::AttackClass> truth(len, attack::AttackClass::None);
    std::vector<attack::AttackClass> pred(len, attack::AttackClass::None);
    for (int i = 0; i < len; ++i) {
      if (i >= start && i < start + dur) truth[i] = cls;
      if (i >= start + delay && i < start + dur) pred[i] = cls;
    }
    return label_episode(truth, pred, fake_scenario(cls, start, dur, std::uint64_t(start)));
  };

  std::vector<EpisodeResult> eps;
  eps.push_back(late_detector(100, 100, 300, attack::AttackClass::Single, 30));
  eps.push_back(late_detector(50, 100, 300, attack::AttackClass::Multi, 45));
  // a third attack the detector never calls
  const auto t3 = [] {
    std::vector<attack::AttackClass> t(300, attack::AttackClass::None);
    for (int i = 60; i < 160; ++i) t[i] = attack::AttackClass::Single;
    return t;
  }();
  eps.push_back(label_episode(t3, std::vector<attack::AttackClass>(300, attack::AttackClass::None),
                              fake_scenario(attack::AttackClass::Single, 60, 100, 9)));

  const auto report = compute_detection_metrics(eps);
  CHECK(report.mttd_mean == doctest::Approx(37.5));
  CHECK(report.mttd_worst == doctest::Approx(45.0));
  CHECK(report.attacks_total == 3);
  CHECK(report.attacks_detected == 2);
  CHECK(report.miss_rate == doctest::Approx(1.0 / 3.0));

  // 36 alarms packed into the first hour of a 2 h quiet run
  std::vector<attack::AttackClass> truth(7200, attack::AttackClass::None);
  std::vector<attack::AttackClass> pred(7200, attack::AttackClass::None);
  for (int i = 0; i < 36; ++i) pred[i] = attack::AttackClass::Single;
  const auto clustered = compute_detection_metrics({label_episode(truth, pred)});
  CHECK(clustered.far == doctest::Approx(36.0 / 7200.0));
  CHECK(clustered.far_worst_hour == doctest::Approx(36.0 / 3600.0));
  clustered.validate();
}

TEST_CASE("disruption cost: trapezoidal integral plus production and restart terms") {
  const auto ep = cost_episode({0.0, 1.0, 2.0, 2.0, 1.0, 0.0}, 1.0, 4.0,
                               MitigationPolicy::Resilient, 7);
  // integral of 2*dev over [1, 4]: 1.5 + 2 + 1.5 = 5, weighted by 2 -> 10;
  // plus 1 $/s for 3 s of interrupted production
  CHECK(disruption_cost(ep, unit_cost(2.0)) == doctest::Approx(13.0));

  auto shutdown = ep;
  shutdown.policy = MitigationPolicy::Shutdown;
  CHECK(disruption_cost(shutdown, unit_cost(2.0)) == doctest::Approx(513.0));

  auto tripped = ep;
  tripped.failsafe_tripped = true;
  CHECK(disruption_cost(tripped, unit_cost(2.0)) == doctest::Approx(513.0));

  auto undetected = ep;
  undetected.t_detect = -1.0;
  CHECK(disruption_cost(undetected, unit_cost(2.0)) == 0.0);

  // unrecovered episodes integrate to the end of the record
  auto open = ep;
  open.t_recover = -1.0;
  CHECK(disruption_cost(open, unit_cost(2.0)) ==
        doctest::Approx(2.0 * (1.5 + 2.0 + 1.5 + 0.5) + 4.0));

  auto bad = unit_cost(2.0);
  bad.weights = {2.0, 1.0};
  CHECK_THROWS_AS(disruption_cost(ep, bad), std::invalid_argument);
  bad = unit_cost(-1.0);
  CHECK_THROWS_AS(disruption_cost(ep, bad), std::invalid_argument);
}

TEST_CASE("the shutdown baseline measured against itself is exactly one") {
  const auto ep = cost_episode({0.0, 0.5, 1.0, 0.5, 0.0}, 1.0, 3.0,
                               MitigationPolicy::Shutdown, 42);
  MetricsReport report;
  compute_resilience_metrics({ep}, {ep}, unit_cost(), report);
  CHECK(report.d_rel_mean == 1.0);  // identical numerator and denominator
  CHECK(report.d_normalized);
  CHECK(report.d_rel_ci.lo == 1.0);
  CHECK(report.d_rel_ci.hi == 1.0);
  CHECK(report.recovery_mean == doctest::Approx(2.0));
  CHECK(report.recovery_shutdown_mean == doctest::Approx(2.0));

  // a resilient run without its shutdown pair cannot be normalized
  MetricsReport unpaired;
  compute_resilience_metrics({ep}, {}, unit_cost(), unpaired);
  CHECK_FALSE(unpaired.d_normalized);
  CHECK(unpaired.d_rel_mean == -1.0);
  CHECK(unpaired.d_raw_mean > 0.0);
}

TEST_CASE("safety excursions split into critical events and brief minor ones") {
  auto with_excursion = [](const std::vector<double>& depths, std::uint64_t seed) {
    EpisodeResult ep;
    ep.policy = MitigationPolicy::Resilient;
    ep.scenario = fake_scenario(attack::AttackClass::Single, 0.0, 10.0, seed);
    ep.t_detect = 0.0;
    ep.t_recover = static_cast<double>(depths.size() - 1);
    double age = 0.0;
    for (size_t i = 0; i < depths.size(); ++i) {
      StepRecord rec;
      rec.time = static_cast<double>(i);
      rec.truth = attack::AttackClass::Single;
      rec.excursion_depth = depths[i];
      age = depths[i] > 0.0 ? age + 1.0 : 0.0;
      rec.excursion_duration = age;
      rec.crit_dev = Vector::Zero(1);
      ep.records.push_back(std::move(rec));
    }
    return ep;
  };

  std::vector<EpisodeResult> eps;
  eps.push_back(with_excursion({0, 0, 0.06, 0.12, 0.04, 0, 0, 0, 0, 0}, 1));       // critical
  eps.push_back(with_excursion({0, 0.03, 0.03, 0.03, 0, 0, 0, 0, 0, 0}, 2));       // minor, 3 s
  eps.push_back(with_excursion({0, 0.03, 0.03, 0.03, 0.03, 0.03, 0.03, 0, 0, 0}, 3));  // 6 s

  MetricsReport report;
  compute_resilience_metrics(eps, eps, unit_cost(), report);
  CHECK(report.critical_violation_rate == doctest::Approx(1.0 / 3.0));
  CHECK(report.minor_violation_rate == doctest::Approx(3.0 / 30.0));
  CHECK(report.clopper_pearson_upper == doctest::Approx(clopper_pearson_upper(1, 3)));
}

TEST_CASE("report serialization round-trips byte for byte") {
  const auto t = [] {
    std::vector<attack::AttackClass> v(200, attack::AttackClass::None);
    for (int i = 50; i < 120; ++i) v[i] = attack::AttackClass::Single;
    return v;
  }();
  std::vector<EpisodeResult> eps;
  eps.push_back(label_episode(t, t, fake_scenario(attack::AttackClass::Single, 50, 70, 3)));
  auto report = compute_detection_metrics(eps);
  compute_resilience_metrics({cost_episode({0, 1, 0}, 0.0, 2.0, MitigationPolicy::Resilient, 3)},
                             {cost_episode({0, 2, 0}, 0.0, 2.0, MitigationPolicy::Shutdown, 3)},
                             unit_cost(), report);

  const std::string text = report_to_json(report);
  const auto parsed = report_from_json(text);
  CHECK(report_to_json(parsed) == text);

  const std::string path = "harness_report_roundtrip.json";
  save_report(report, path);
  const auto loaded = load_report(path);
  CHECK(report_to_json(loaded) == text);
  std::remove(path.c_str());

  CHECK(parsed.d_rel_mean == doctest::Approx(report.d_rel_mean));
  CHECK(parsed.macro_attack_f1 == report.macro_attack_f1);
  parsed.validate();
}

TEST_CASE("ingest: clean telemetry z-scores to zero mean and unit deviation") {
  std::ostringstream csv;
  csv << "time,a,b\n";
  for (int i = 0; i < 400; ++i)
    csv << i << ',' << std::sin(0.1 * i) << ',' << 3.0 + 0.5 * std::cos(0.05 * i) << "\n";
  std::istringstream in(csv.str());

  CsvSchema schema;
  schema.sensors = {"a", "b"};
  const auto out = preprocess_ingest(in, schema);
  REQUIRE(out.values.rows() == 400);
  REQUIRE(out.times.front() == 0.0);
  REQUIRE(out.times.back() == 399.0);
  CHECK(out.stats.provenance == "train");
  CHECK(out.labels.empty());

  for (int c = 0; c < 2; ++c) {
    const double mean = out.values.col(c).mean();
    const double var = out.values.col(c).squaredNorm() / 400.0 - mean * mean;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
}

TEST_CASE("ingest: short gaps carry forward, long gaps interpolate") {
  std::istringstream in(
      "time,a\n"
      "0,1\n"
      "2,3\n"
      "12,13\n");
  NormStats identity;
  identity.columns = {"a"};
  identity.mean = Vector::Zero(1);
  identity.std_dev = Vector::Ones(1);
  const auto out = preprocess_ingest(in, CsvSchema{"time", {"a"}, ""}, identity);

  REQUIRE(out.values.rows() == 13);
  CHECK(out.values(0, 0) == 1.0);
  CHECK(out.values(1, 0) == 1.0);  // 2 s gap: forward-fill
  CHECK(out.values(2, 0) == 3.0);
  for (int i = 3; i < 12; ++i)  // 10 s gap: linear interpolation
    CHECK(out.values(i, 0) == doctest::Approx(i + 1.0).epsilon(1e-12));
  CHECK(out.values(12, 0) == 13.0);
}

TEST_CASE("ingest: sub-second samples average into their bin") {
  std::istringstream in(
      "time,a\n"
      "0.0,1\n"
      "0.25,2\n"
      "0.5,3\n"
      "1.2,10\n");
  NormStats identity;
  identity.columns = {"a"};
  identity.mean = Vector::Zero(1);
  identity.std_dev = Vector::Ones(1);
  const auto out = preprocess_ingest(in, CsvSchema{"time", {"a"}, ""}, identity);
  REQUIRE(out.values.rows() == 2);
  CHECK(out.values(0, 0) == doctest::Approx(2.0));
  CHECK(out.values(1, 0) == doctest::Approx(10.0));
}

TEST_CASE("ingest: spikes beyond five rolling deviations are clipped") {
  std::ostringstream csv;
  csv << "time,a\n";
  for (int i = 0; i < 400; ++i) {
    const double v = i == 350 ? 50.0 : 5.0 + ((i % 2) ? 0.01 : -0.01);
    csv << i << ',' << v << "\n";
  }
  std::istringstream in(csv.str());
  NormStats identity;
  identity.columns = {"a"};
  identity.mean = Vector::Zero(1);
  identity.std_dev = Vector::Ones(1);
  const auto out = preprocess_ingest(in, CsvSchema{"time", {"a"}, ""}, identity);

  CHECK(out.values(350, 0) < 5.1);  // pinned to mean + 5 sigma of the prior window
  CHECK(out.values(350, 0) > 5.0);
  CHECK(out.values(349, 0) == doctest::Approx(5.01));  // neighbors untouched
  CHECK(out.values(351, 0) == doctest::Approx(5.01));
}

TEST_CASE("ingest: labels parse by name or index and carry across gaps") {
  std::istringstream in(
      "time,a,label\n"
      "0,1,none\n"
      "1,1,\n"
      "2,1,single\n"
      "5,1,2\n"
      "6,1,none\n");
  std::istringstream in2(
      "time,a,label\n"
      "0,1,nonsense\n");
  CsvSchema schema{"time", {"a"}, "label"};
  const auto out = preprocess_ingest(in, schema);
  REQUIRE(out.labels.size() == 7);
  CHECK(out.labels[0] == attack::AttackClass::None);
  CHECK(out.labels[1] == attack::AttackClass::None);  // empty cell inherits
  CHECK(out.labels[2] == attack::AttackClass::Single);
  CHECK(out.labels[3] == attack::AttackClass::Single);  // gap bins inherit
  CHECK(out.labels[4] == attack::AttackClass::Single);
  CHECK(out.labels[5] == attack::AttackClass::Multi);
  CHECK(out.labels[6] == attack::AttackClass::None);
  CHECK_THROWS_AS(preprocess_ingest(in2, schema), std::invalid_argument);
}

TEST_CASE("ingest: malformed input is rejected") {
  CsvSchema schema{"time", {"a"}, ""};

  std::istringstream backwards("time,a\n5,1\n3,2\n");
  CHECK_THROWS_WITH_AS(preprocess_ingest(backwards, schema),
                       doctest::Contains("backwards"), std::invalid_argument);

  std::istringstream unknown("time,a,bogus\n0,1,2\n");
  CHECK_THROWS_WITH_AS(preprocess_ingest(unknown, schema), doctest::Contains("unknown column"),
                       std::invalid_argument);

  std::istringstream missing("time\n0\n");
  CHECK_THROWS_AS(preprocess_ingest(missing, schema), std::invalid_argument);

  std::istringstream empty("");
  CHECK_THROWS_AS(preprocess_ingest(empty, schema), std::invalid_argument);

  std::istringstream ok("time,a\n0,1\n1,2\n");
  NormStats wrong;
  wrong.columns = {"b"};
  wrong.mean = Vector::Zero(1);
  wrong.std_dev = Vector::Ones(1);
  CHECK_THROWS_AS(preprocess_ingest(ok, schema, wrong), std::invalid_argument);
}

TEST_CASE("ingest: evaluation splits reuse training statistics unchanged") {
  std::ostringstream train_csv;
  train_csv << "time,a\n";
  Rng rng(8);
  for (int i = 0; i < 300; ++i) train_csv << i << ',' << rng.normal(10.0, 2.0) << "\n";
  std::istringstream train_in(train_csv.str());
  CsvSchema schema{"time", {"a"}, ""};
  const auto train = preprocess_ingest(train_in, schema);

  std::istringstream test_in("time,a\n0,10\n1,14\n");
  const auto test = preprocess_ingest(test_in, schema, train.stats);
  CHECK(test.stats.mean[0] == train.stats.mean[0]);
  CHECK(test.stats.std_dev[0] == train.stats.std_dev[0]);
  // z-scores computed from the training frame, not refitted on two samples
  CHECK(test.values(0, 0) ==
        doctest::Approx((10.0 - train.stats.mean[0]) / train.stats.std_dev[0]));
  CHECK(test.values(1, 0) ==
        doctest::Approx((14.0 - train.stats.mean[0]) / train.stats.std_dev[0]));
}

TEST_CASE("episode: online pipeline runs end to end and logs every step") {
  PipelineFixture fx;
  EpisodeOptions opts;
  opts.steps = 120;
  const auto ep = run_episode(fx.topo, std::nullopt, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                              fx.safety, opts, 2001);

  REQUIRE(static_cast<int>(ep.records.size()) == opts.steps);
  for (const auto& rec : ep.records) {
    CHECK(rec.truth == attack::AttackClass::None);
    CHECK(rec.u.size() == fx.topo.n_actuators());
    CHECK(rec.crit_dev.size() == 3);
  }
  // warm-up: no full residual window exists before tau + W - 1
  const int warmup = fx.dtp.tau + fx.adep.window - 1;
  for (int t = 0; t < warmup; ++t) {
    CHECK(ep.records[t].predicted == attack::AttackClass::None);
    CHECK(ep.records[t].confidence == 0.0);
  }
  CHECK_FALSE(ep.detected());
  CHECK_FALSE(ep.recovery_truncated);

  const std::string path = "harness_episode_trace.csv";
  write_plan_trace_csv(ep, path);
  std::ifstream in(path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.rfind("time,mode,status", 0) == 0);
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("episode: identical seeds replay bit-identical trajectories") {
  PipelineFixture fx;
  const auto scenario = attack::generate_scenario(attack::AttackClass::Single, fx.topo, 55, 40.0);
  EpisodeOptions opts;
  opts.steps = 160;
  opts.gamma = 0.5;

  const auto a = run_episode(fx.topo, scenario, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                             fx.safety, opts, 31337);
  const auto b = run_episode(fx.topo, scenario, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                             fx.safety, opts, 31337);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(a.t_detect == b.t_detect);
  CHECK(a.t_recover == b.t_recover);
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].u == b.records[i].u);
    CHECK(a.records[i].crit_dev == b.records[i].crit_dev);
    CHECK(a.records[i].delta_mp == b.records[i].delta_mp);
    CHECK(a.records[i].confidence == b.records[i].confidence);
    CHECK(a.records[i].mode == b.records[i].mode);
  }

  const auto c = run_episode(fx.topo, scenario, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                             fx.safety, opts, 31338);
  bool any_diff = false;
  for (size_t i = 0; i < c.records.size(); ++i)
    if (c.records[i].delta_mp != a.records[i].delta_mp) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("episode: shape mismatches are rejected up front") {
  PipelineFixture fx;
  EpisodeOptions opts;
  opts.steps = 10;

  auto wrong_twin = fx.dtp;
  wrong_twin.d_y = fx.dtp.d_y - 1;
  CHECK_THROWS_AS(run_episode(fx.topo, std::nullopt, wrong_twin, fx.adep, fx.gate, fx.ctrl,
                              fx.term, fx.safety, opts, 1),
                  std::invalid_argument);

  auto wrong_ade = fx.adep;
  wrong_ade.d_r = 2;
  CHECK_THROWS_AS(run_episode(fx.topo, std::nullopt, fx.dtp, wrong_ade, fx.gate, fx.ctrl, fx.term,
                              fx.safety, opts, 1),
                  std::invalid_argument);

  auto wrong_safety = fx.safety;
  wrong_safety.y_safe = Vector::Zero(2);
  CHECK_THROWS_AS(run_episode(fx.topo, std::nullopt, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                              wrong_safety, opts, 1),
                  std::invalid_argument);

  auto bad_opts = opts;
  bad_opts.steps = 0;
  CHECK_THROWS_AS(run_episode(fx.topo, std::nullopt, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                              fx.safety, bad_opts, 1),
                  std::invalid_argument);
}

TEST_CASE("episode: measurement attacks cannot move the plant while control ignores them") {
  PipelineFixture fx;

  // pressure channels feed no controller here; with the mitigation gate shut
  // (gamma above any confidence) the applied inputs must match the quiet run
  attack::AttackScenario sc;
  sc.cls = attack::AttackClass::Single;
  sc.start = 30.0;
  sc.duration = 80.0;
  sc.seed = 99;
  attack::AttackTarget tgt;
  tgt.sensor = "press_in";
  tgt.profile = attack::ProfileKind::Bias;
  tgt.magnitude = 0.05;
  tgt.start = sc.start;
  tgt.duration = sc.duration;
  sc.targets = {tgt};
  sc.validate(fx.topo);

  EpisodeOptions opts;
  opts.steps = 140;
  opts.gamma = 2.0;  // confidence can never exceed 1, so mitigation stays out

  const auto attacked = run_episode(fx.topo, sc, fx.dtp, fx.adep, fx.gate, fx.ctrl, fx.term,
                                    fx.safety, opts, 777);
  const auto quiet = run_episode(fx.topo, std::nullopt, fx.dtp, fx.adep, fx.gate, fx.ctrl,
                                 fx.term, fx.safety, opts, 777);

  CHECK_FALSE(attacked.detected());
  bool truth_seen = false;
  for (size_t i = 0; i < attacked.records.size(); ++i) {
    CHECK(attacked.records[i].u == quiet.records[i].u);
    CHECK(attacked.records[i].crit_dev == quiet.records[i].crit_dev);
    if (attacked.records[i].truth != attack::AttackClass::None) truth_seen = true;
  }
  CHECK(truth_seen);
}

TEST_CASE("campaign: micro run is deterministic and satisfies report invariants") {
  PipelineFixture fx;
  TrainedModels models;
  models.dtp = fx.dtp;
  models.adep = fx.adep;
  models.gate = fx.gate;
  models.steady = fx.steady;

  CampaignConfig cfg;
  cfg.n_single = 2;
  cfg.n_multi = 1;
  cfg.n_normal = 1;
  cfg.normal_steps = 120;
  cfg.attack_start_min = 30.0;
  cfg.attack_start_max = 40.0;
  cfg.resilient_tail = 60.0;
  cfg.shutdown_tail = 60.0;
  cfg.horizon = 4;
  cfg.episode.drain_timeout = 90.0;
  cfg.episode.restart_delay = 60.0;
  cfg.episode.n_mc = 5;

  const auto first = run_campaign(fx.topo, models, cfg, 9001);
  const auto second = run_campaign(fx.topo, models, cfg, 9001);
  CHECK(report_to_json(first.report) == report_to_json(second.report));

  REQUIRE(first.resilient.size() == 3);
  REQUIRE(first.shutdown.size() == 3);
  REQUIRE(first.normal.size() == 1);
  for (size_t i = 0; i < first.resilient.size(); ++i) {
    CHECK(first.resilient[i].scenario->seed == first.shutdown[i].scenario->seed);
    CHECK(first.resilient[i].policy == MitigationPolicy::Resilient);
    CHECK(first.shutdown[i].policy == MitigationPolicy::Shutdown);
  }
  first.report.validate();

  const auto third = run_campaign(fx.topo, models, cfg, 9002);
  CHECK(report_to_json(third.report) != report_to_json(first.report));
}

TEST_CASE("campaign: configuration sanity checks") {
  CampaignConfig cfg;
  cfg.n_single = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CampaignConfig{};
  cfg.n_single = cfg.n_multi = cfg.n_normal = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CampaignConfig{};
  cfg.attack_start_max = cfg.attack_start_min - 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CampaignConfig{};
  cfg.du_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CampaignConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("training data: traces, steady state, and labeled windows line up") {
  const auto topo = plant::PlantTopology::default_three_tank();
  plant::NominalConfig nominal;

  const auto trace = collect_nominal_trace(topo, nominal, 50, 11);
  REQUIRE(trace.size() == 50);
  CHECK(trace[0].y.size() == topo.n_sensors());
  CHECK(trace[0].u.size() == topo.n_actuators());
  const auto trace2 = collect_nominal_trace(topo, nominal, 50, 11);
  for (size_t i = 0; i < trace.size(); ++i) CHECK(trace[i].y == trace2[i].y);

  const auto steady = steady_state(topo, nominal, 300, 60);
  // settled levels sit within the regulator's hysteresis band of the setpoint
  for (int s = 0; s < topo.n_sensors(); ++s)
    if (topo.sensors[s].kind == plant::SensorKind::Level)
      CHECK(std::abs(steady.y_safe[s] - nominal.setpoint) < nominal.band + 0.02);
  for (Eigen::Index j = 0; j < steady.u_ss.size(); ++j) {
    CHECK(steady.u_ss[j] >= 0.0);
    CHECK(steady.u_ss[j] <= 1.0);
  }

  const auto dtp = persistence_twin(topo);
  const auto scenario = attack::generate_scenario(attack::AttackClass::Single, topo, 3, 50.0);
  const auto stream = residual_stream(topo, dtp, nominal, &scenario, 200, 17);
  REQUIRE(stream.residuals.size() == 200 - dtp.tau);
  REQUIRE(stream.truth.size() == stream.residuals.size());
  bool saw_attack = false;
  for (const auto& label : stream.truth)
    if (label == attack::AttackClass::Single) saw_attack = true;
  CHECK(saw_attack);

  const auto windows = make_labeled_windows(stream, 10, 5);
  REQUIRE_FALSE(windows.empty());
  int attacked = 0;
  for (const auto& w : windows) {
    CHECK(w.window.rows() == 10);
    CHECK(w.window.cols() == topo.n_sensors());
    if (w.label != attack::AttackClass::None) ++attacked;
  }
  CHECK(attacked > 0);
  CHECK(attacked < static_cast<int>(windows.size()));
}
