#include "hydro/harness/episode.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hydro/ade/encoder.hpp"
#include "hydro/core/rng.hpp"
#include "hydro/dt/jacobian.hpp"

namespace hydro::harness {

namespace {

constexpr std::uint64_t kSimTag = 0x51b1;
constexpr std::uint64_t kMcTag = 0x6d63;

// scripted full shutdown: used by the Shutdown baseline policy and by the
// failsafe interlock (both hand control to the same deterministic rules)
struct ShutdownScript {
  enum class Phase { Inactive, Drain, Hold, Done };
  Phase phase = Phase::Inactive;
  double phase_start = 0.0;

  void begin(double now) {
    phase = Phase::Drain;
    phase_start = now;
  }

  bool running() const { return phase == Phase::Drain || phase == Phase::Hold; }

  // inflow pumps closed; everything else opened until measured levels reach
  // the drain target (or the timeout expires), then all actuators closed for
  // the restart delay
  Vector control(const plant::PlantTopology& topo, const Vector& y_meas,
                 const std::vector<int>& level_sensors, const EpisodeOptions& opts, double now) {
    if (phase == Phase::Drain) {
      bool drained = true;
      for (int s : level_sensors)
        if (y_meas[s] > opts.drain_level) drained = false;
      if (drained || now - phase_start >= opts.drain_timeout) {
        phase = Phase::Hold;
        phase_start = now;
      }
    }
    if (phase == Phase::Hold && now - phase_start >= opts.restart_delay) phase = Phase::Done;

    Vector u = Vector::Zero(topo.n_actuators());
    if (phase == Phase::Drain) {
      for (int i = 0; i < topo.n_actuators(); ++i) {
        const auto& pipe = topo.pipes[topo.pipe_index(topo.actuators[i].pipe)];
        u[i] = (pipe.from == "source") ? 0.0 : 1.0;
      }
    }
    return u;
  }
};

}  // namespace

SafetySpec SafetySpec::from_topology(const plant::PlantTopology& topo, const Vector& y_safe,
                                     double band_lo, double band_hi) {
  SafetySpec spec;
  spec.y_safe = y_safe;
  const int n = topo.n_sensors();
  const double inf = std::numeric_limits<double>::infinity();
  spec.y_min = Vector::Constant(n, -inf);
  spec.y_max = Vector::Constant(n, inf);
  for (int s = 0; s < n; ++s) {
    if (topo.sensors[s].kind != plant::SensorKind::Level) continue;
    const auto& tank = topo.tanks[topo.tank_index(topo.sensors[s].target)];
    spec.y_min[s] = tank.level_min + band_lo * (tank.level_max - tank.level_min);
    spec.y_max[s] = tank.level_min + band_hi * (tank.level_max - tank.level_min);
    spec.crit_sensors.push_back(s);
    spec.weights.push_back(1.0);
  }
  return spec;
}

void SafetySpec::validate(int n_sensors) const {
  if (y_safe.size() != n_sensors || y_min.size() != n_sensors || y_max.size() != n_sensors)
    throw std::invalid_argument("SafetySpec: bound vectors must match the sensor count");
  if (crit_sensors.size() != weights.size())
    throw std::invalid_argument("SafetySpec: one weight per critical sensor");
  for (size_t i = 0; i < crit_sensors.size(); ++i) {
    if (crit_sensors[i] < 0 || crit_sensors[i] >= n_sensors)
      throw std::invalid_argument("SafetySpec: critical sensor index out of range");
    if (!(weights[i] > 0.0)) throw std::invalid_argument("SafetySpec: weights must be positive");
  }
}

EpisodeResult run_episode(const plant::PlantTopology& topo,
                          const std::optional<attack::AttackScenario>& scenario,
                          const dt::ModelParams& dtp, const ade::AdeParams& adep,
                          const ade::AdeGate& gate, const mpc::ControllerConfig& ctrl,
                          const mpc::TerminalIngredients& term, const SafetySpec& safety,
                          const EpisodeOptions& opts, std::uint64_t seed) {
  const int d_y = topo.n_sensors();
  const int d_u = topo.n_actuators();
  if (dtp.d_y != d_y || dtp.d_u != d_u)
    throw std::invalid_argument("run_episode: twin trained for a different plant shape");
  if (adep.d_r != d_y)
    throw std::invalid_argument("run_episode: classifier trained for a different residual width");
  safety.validate(d_y);
  if (scenario) scenario->validate(topo);
  if (opts.steps <= 0) throw std::invalid_argument("run_episode: steps must be positive");

  plant::Simulator sim(topo, derive_seed(seed, kSimTag));
  plant::NominalController nominal(topo, opts.nominal);

  std::vector<int> level_sensors;
  for (int s = 0; s < d_y; ++s)
    if (topo.sensors[s].kind == plant::SensorKind::Level) level_sensors.push_back(s);

  EpisodeResult out;
  out.scenario = scenario;
  out.seed = seed;
  out.policy = opts.policy;
  out.records.reserve(static_cast<size_t>(opts.steps));

  Matrix context(dtp.tau, dtp.d_x());
  int frames = 0;  // valid trailing rows in the context buffer

  std::vector<Vector> residuals;
  residuals.reserve(static_cast<size_t>(opts.steps));
  std::vector<Vector> recent_z;

  std::vector<attack::AttackClass> class_hist;
  std::vector<double> delta_hist;
  class_hist.reserve(static_cast<size_t>(opts.steps));
  delta_hist.reserve(static_cast<size_t>(opts.steps));

  mpc::ControlMode mode = mpc::ControlMode::nominal;
  ShutdownScript script;
  bool mitigation_spent = false;  // a completed script latches further engagements off
  int settle_count = 0;

  mpc::ControlPlan warm;
  bool have_warm = false;
  Vector u_prev = Vector::Zero(d_u);
  double zeta_bar = 0.0;
  double excursion_age = 0.0;

  for (int t = 0; t < opts.steps; ++t) {
    const double now = t * opts.sample_dt;
    StepRecord rec;
    rec.time = now;

    Vector y_true = sim.measure_clean();
    Vector y_att = sim.measure();
    if (scenario) {
      inject_fdi(y_att, *scenario, topo, now);
      rec.truth = label_at(*scenario, now);
    }

    // twin prediction over the trailing context, residual in sensor units;
    // the stream starts once the context is full, as it did in training
    double delta_mp = 0.0;
    if (frames >= dtp.tau) {
      Matrix ctx_norm(dtp.tau, dtp.d_x());
      for (int k = 0; k < dtp.tau; ++k)
        ctx_norm.row(k) = dtp.normalize_frame(context.row(k).head(d_y).transpose(),
                                              context.row(k).tail(d_u).transpose())
                              .transpose();
      Vector y_hat = dt::predict(ctx_norm, dtp);
      residuals.push_back(y_att - y_hat);
      delta_mp = residuals.back().norm() / std::max(y_att.norm(), 1e-9);
    }
    rec.delta_mp = delta_mp;

    // windowed classification with statistical validation; steps without a
    // full window default to normal at zero confidence
    double zeta = 0.0;
    std::optional<Matrix> window;
    if (!residuals.empty())
      window = ade::build_window(residuals, static_cast<int>(residuals.size()) - 1, adep.window);
    if (window) {
      auto decision = ade::classify_validated(*window, adep, gate, recent_z);
      rec.predicted = decision.label;
      rec.confidence = decision.confidence;
      rec.validated = decision.validated;
      zeta = ade::stealth_risk(decision.probs, ctrl.omega);
      recent_z.push_back(decision.z);
      if (recent_z.size() > static_cast<size_t>(std::max(gate.max_batch - 1, 1)))
        recent_z.erase(recent_z.begin());
    }
    zeta_bar = mpc::ema_smooth(zeta_bar, zeta, ctrl.mu);
    rec.zeta_bar = zeta_bar;
    class_hist.push_back(rec.predicted);
    delta_hist.push_back(delta_mp);

    // mode transitions
    const bool attack_call =
        rec.predicted != attack::AttackClass::None && rec.confidence > opts.gamma;
    if (mode == mpc::ControlMode::nominal && attack_call && !mitigation_spent &&
        !script.running()) {
      if (out.t_detect < 0.0) out.t_detect = now;
      out.t_recover = -1.0;  // re-engagement reopens the disruption window
      if (opts.policy == MitigationPolicy::Shutdown) {
        script.begin(now);
        mode = mpc::ControlMode::failsafe;
        settle_count = 0;
      } else {
        mode = mpc::ControlMode::resilient;
        have_warm = false;
      }
    } else if (mode == mpc::ControlMode::resilient) {
      mpc::ControlMode next = mpc::recovery_and_fallback(class_hist, delta_hist, ctrl);
      if (next == mpc::ControlMode::nominal) {
        mode = mpc::ControlMode::nominal;
        out.t_recover = now;
        nominal.reset();
      } else if (next == mpc::ControlMode::failsafe) {
        mode = mpc::ControlMode::failsafe;
        out.failsafe_tripped = true;
        script.begin(now);
        settle_count = 0;
      }
    }
    rec.mode = mode;

    // control
    Vector u;
    if (mode == mpc::ControlMode::failsafe) {
      u = script.control(topo, y_att, level_sensors, opts, now);
      if (!script.running()) {  // script finished: restart under nominal rules
        mode = mpc::ControlMode::nominal;
        mitigation_spent = true;
        nominal.reset();
        u = nominal.control(y_att);
        rec.mode = mode;
      }
    } else if (mode == mpc::ControlMode::resilient) {
      Matrix ctx_norm(dtp.tau, dtp.d_x());
      for (int k = 0; k < dtp.tau; ++k)
        ctx_norm.row(k) = dtp.normalize_frame(context.row(k).head(d_y).transpose(),
                                              context.row(k).tail(d_u).transpose())
                              .transpose();
      Matrix sigma0 =
          dt::predict_uncertain(ctx_norm, dtp, opts.n_mc, derive_seed(seed, kMcTag, t))
              .covariance;
      auto plan = mpc::solve_mpc(context, dtp, sigma0, zeta_bar, u_prev, ctrl, term,
                                 have_warm ? &warm : nullptr);
      u = plan.inputs.front();
      rec.planned = true;
      rec.status = plan.status;
      rec.margins = plan.margins.front();
      warm = std::move(plan);
      have_warm = true;
    } else {
      u = nominal.control(y_att);
    }
    rec.u = u;

    // recovery settling after a completed script (shutdown baseline and
    // failsafe runs): every critical sensor near its safe value, held
    if (mitigation_spent && out.t_recover < 0.0) {
      bool settled = true;
      for (size_t i = 0; i < safety.crit_sensors.size(); ++i)
        if (std::abs(y_true[safety.crit_sensors[i]] - safety.y_safe[safety.crit_sensors[i]]) >
            opts.settle_tol)
          settled = false;
      settle_count = settled ? settle_count + 1 : 0;
      if (settle_count >= opts.settle_hold) out.t_recover = now;
    }

    // safety accounting against the true plant outputs
    double depth = 0.0;
    for (int s = 0; s < d_y; ++s) {
      if (!std::isfinite(safety.y_min[s]) || !std::isfinite(safety.y_max[s])) continue;
      const double band = safety.y_max[s] - safety.y_min[s];
      const double over = std::max(safety.y_min[s] - y_true[s], y_true[s] - safety.y_max[s]);
      if (over > 0.0) depth = std::max(depth, over / band);
    }
    excursion_age = depth > 0.0 ? excursion_age + opts.sample_dt : 0.0;
    rec.excursion_depth = depth;
    rec.excursion_duration = excursion_age;
    rec.crit_dev = Vector(static_cast<Eigen::Index>(safety.crit_sensors.size()));
    for (size_t i = 0; i < safety.crit_sensors.size(); ++i)
      rec.crit_dev[static_cast<Eigen::Index>(i)] = std::abs(
          y_true[safety.crit_sensors[i]] - safety.y_safe[safety.crit_sensors[i]]);

    sim.step(u, opts.sample_dt);

    // slide the context: the frame for step t is [y_att(t), u(t)]
    if (dtp.tau > 1) context.topRows(dtp.tau - 1) = context.bottomRows(dtp.tau - 1).eval();
    context.row(dtp.tau - 1).head(d_y) = y_att.transpose();
    context.row(dtp.tau - 1).tail(d_u) = u.transpose();
    frames = std::min(frames + 1, dtp.tau);
    u_prev = u;

    out.records.push_back(std::move(rec));
  }

  out.recovery_truncated = out.detected() && out.t_recover < 0.0;
  return out;
}

void write_plan_trace_csv(const EpisodeResult& episode, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file " + path);
  const int d_u = episode.records.empty() ? 0 : static_cast<int>(episode.records[0].u.size());
  int d_m = 0;
  for (const auto& r : episode.records)
    d_m = std::max(d_m, static_cast<int>(r.margins.size()));

  os << "time,mode,status";
  for (int i = 0; i < d_u; ++i) os << ",u" << i;
  for (int i = 0; i < d_m; ++i) os << ",margin" << i;
  os << ",delta_mp,zeta_bar\n";
  for (const auto& r : episode.records) {
    os << r.time << ',' << mpc::to_string(r.mode) << ','
       << (r.planned ? mpc::to_string(r.status) : "-");
    for (int i = 0; i < d_u; ++i) os << ',' << r.u[i];
    for (int i = 0; i < d_m; ++i)
      if (i < r.margins.size())
        os << ',' << r.margins[i];
      else
        os << ',';
    os << ',' << r.delta_mp << ',' << r.zeta_bar << '\n';
  }
}

}  // namespace hydro::harness
