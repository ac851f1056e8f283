#include "hydro/harness/data.hpp"

#include <stdexcept>

#include "hydro/core/rng.hpp"
#include "hydro/plant/simulator.hpp"

namespace hydro::harness {

namespace {

// seed stream tags for the stages of the training pipeline
constexpr std::uint64_t kDtTrace = 0x0d70;
constexpr std::uint64_t kDtTrain = 0x0d71;
constexpr std::uint64_t kAdeScenario = 0xade0;
constexpr std::uint64_t kAdeStream = 0xade1;
constexpr std::uint64_t kAdeTrain = 0xade2;
constexpr std::uint64_t kGateStream = 0x6a7e;
constexpr std::uint64_t kGateCal = 0x6a7f;

}  // namespace

std::vector<dt::TraceRow> collect_nominal_trace(const plant::PlantTopology& topo,
                                                const plant::NominalConfig& nominal, int steps,
                                                std::uint64_t seed, double sample_dt) {
  if (steps <= 0) throw std::invalid_argument("collect_nominal_trace: steps must be positive");
  plant::Simulator sim(topo, seed);
  plant::NominalController ctrl(topo, nominal);
  std::vector<dt::TraceRow> trace;
  trace.reserve(static_cast<size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    dt::TraceRow row;
    row.y = sim.measure();
    row.u = ctrl.control(row.y);
    sim.step(row.u, sample_dt);
    trace.push_back(std::move(row));
  }
  return trace;
}

SteadyState steady_state(const plant::PlantTopology& topo, const plant::NominalConfig& nominal,
                         int settle_steps, int tail) {
  if (tail <= 0 || settle_steps <= 0)
    throw std::invalid_argument("steady_state: step counts must be positive");
  plant::PlantTopology quiet = topo;
  quiet.noise.process_std = 0.0;
  for (auto& s : quiet.sensors) s.noise_std = 0.0;

  plant::Simulator sim(quiet, 0);
  plant::NominalController ctrl(quiet, nominal);
  SteadyState out;
  out.y_safe = Vector::Zero(quiet.n_sensors());
  out.u_ss = Vector::Zero(quiet.n_actuators());
  for (int k = 0; k < settle_steps + tail; ++k) {
    const Vector y = sim.measure_clean();
    const Vector u = ctrl.control(y);
    if (k >= settle_steps) {
      out.y_safe += y;
      out.u_ss += u;
    }
    sim.step(u);
  }
  out.y_safe /= static_cast<double>(tail);
  out.u_ss /= static_cast<double>(tail);
  return out;
}

ResidualStream residual_stream(const plant::PlantTopology& topo, const dt::ModelParams& dtp,
                               const plant::NominalConfig& nominal,
                               const attack::AttackScenario* scenario, int steps,
                               std::uint64_t seed, double sample_dt) {
  if (dtp.d_y != topo.n_sensors() || dtp.d_u != topo.n_actuators())
    throw std::invalid_argument("residual_stream: twin shape does not match the topology");
  plant::Simulator sim(topo, seed);
  plant::NominalController ctrl(topo, nominal);

  Matrix context(dtp.tau, dtp.d_x());
  int frames = 0;
  ResidualStream out;
  for (int k = 0; k < steps; ++k) {
    const double t = sim.state().t;
    Vector y = sim.measure();
    if (scenario) attack::inject_fdi(y, *scenario, topo, t);

    if (frames >= dtp.tau) {
      Matrix ctx_norm(dtp.tau, dtp.d_x());
      for (int r = 0; r < dtp.tau; ++r)
        ctx_norm.row(r) = dtp
                              .normalize_frame(context.row(r).head(dtp.d_y),
                                               context.row(r).tail(dtp.d_u))
                              .transpose();
      out.residuals.push_back(y - dt::predict(ctx_norm, dtp));
      out.truth.push_back(scenario ? attack::label_at(*scenario, t) : attack::AttackClass::None);
    }

    const Vector u = ctrl.control(y);
    if (frames < dtp.tau) {
      context.row(frames) << y.transpose(), u.transpose();
      ++frames;
    } else {
      context.topRows(dtp.tau - 1) = context.bottomRows(dtp.tau - 1).eval();
      context.row(dtp.tau - 1) << y.transpose(), u.transpose();
    }
    sim.step(u, sample_dt);
  }
  return out;
}

std::vector<ade::LabeledWindow> make_labeled_windows(const ResidualStream& stream, int window,
                                                     int stride) {
  if (stride <= 0) throw std::invalid_argument("make_labeled_windows: stride must be positive");
  std::vector<ade::LabeledWindow> out;
  for (int t = window - 1; t < static_cast<int>(stream.residuals.size()); t += stride) {
    auto w = ade::build_window(stream.residuals, t, window);
    if (!w) continue;
    ade::LabeledWindow lw;
    lw.window = std::move(*w);
    lw.label = stream.truth[static_cast<size_t>(t)];
    out.push_back(std::move(lw));
  }
  return out;
}

std::vector<ade::LabeledWindow> ade_training_windows(const plant::PlantTopology& topo,
                                                     const dt::ModelParams& dtp,
                                                     const TrainingConfig& cfg, int episodes,
                                                     std::uint64_t seed, std::uint64_t split_tag) {
  std::vector<ade::LabeledWindow> windows;
  const attack::AttackClass kinds[] = {attack::AttackClass::Single, attack::AttackClass::Multi};
  for (int e = 0; e < episodes; ++e) {
    for (attack::AttackClass kind : kinds) {
      const std::uint64_t tag = derive_seed(split_tag, static_cast<std::uint64_t>(e),
                                            kind == attack::AttackClass::Single ? 1 : 2);
      const auto scenario = attack::generate_scenario(
          kind, topo, derive_seed(seed, kAdeScenario, tag), cfg.attack_start, cfg.generator);
      const auto stream = residual_stream(topo, dtp, cfg.nominal, &scenario, cfg.ade_steps,
                                          derive_seed(seed, kAdeStream, tag));
      auto w = make_labeled_windows(stream, cfg.ade.window, cfg.window_stride);
      windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                     std::make_move_iterator(w.end()));
    }
  }
  // quiet streams keep the normal class represented alongside the attacks
  const std::uint64_t tag = derive_seed(split_tag, 0xffff);
  const auto quiet = residual_stream(topo, dtp, cfg.nominal, nullptr,
                                     cfg.ade_steps * std::max(1, episodes / 2),
                                     derive_seed(seed, kAdeStream, tag));
  auto w = make_labeled_windows(quiet, cfg.ade.window, cfg.window_stride);
  windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                 std::make_move_iterator(w.end()));
  return windows;
}

std::vector<Vector> gate_reference_embeddings(const plant::PlantTopology& topo,
                                              const dt::ModelParams& dtp,
                                              const ade::AdeParams& adep,
                                              const TrainingConfig& cfg, std::uint64_t seed) {
  const auto stream = residual_stream(topo, dtp, cfg.nominal, nullptr, cfg.gate_steps,
                                      derive_seed(seed, kGateStream));
  std::vector<Vector> reference;
  for (int t = cfg.ade.window - 1; t < static_cast<int>(stream.residuals.size()); ++t) {
    auto w = ade::build_window(stream.residuals, t, cfg.ade.window);
    if (w) reference.push_back(ade::encode(*w, adep));
  }
  return reference;
}

TrainedModels train_campaign_models(const plant::PlantTopology& topo, const TrainingConfig& cfg,
                                    std::uint64_t seed, bool verbose) {
  TrainedModels out;
  out.steady = steady_state(topo, cfg.nominal);

  // twin: supervised pairs from clean nominal operation, chronological split
  const auto train_trace =
      collect_nominal_trace(topo, cfg.nominal, cfg.dt_train_steps, derive_seed(seed, kDtTrace, 0));
  const auto val_trace =
      collect_nominal_trace(topo, cfg.nominal, cfg.dt_val_steps, derive_seed(seed, kDtTrace, 1));
  dt::DtTrainOptions dt_opts;
  dt_opts.verbose = verbose;
  out.dtp = dt::train_dt(dt::build_dataset(train_trace, cfg.dt.tau),
                         dt::build_dataset(val_trace, cfg.dt.tau), topo, cfg.dt,
                         derive_seed(seed, kDtTrain), dt_opts);

  const auto ade_train = ade_training_windows(topo, out.dtp, cfg, cfg.ade_train_episodes, seed, 1);
  const auto ade_val = ade_training_windows(topo, out.dtp, cfg, cfg.ade_val_episodes, seed, 2);
  ade::AdeTrainOptions ade_opts;
  ade_opts.verbose = verbose;
  out.adep = ade::train_ade(ade_train, ade_val, cfg.ade, derive_seed(seed, kAdeTrain),
                            ade::FreezeMode::None, nullptr, ade_opts);

  const auto reference = gate_reference_embeddings(topo, out.dtp, out.adep, cfg, seed);
  out.gate = ade::calibrate_gate(reference, cfg.ade, derive_seed(seed, kGateCal));
  return out;
}

}  // namespace hydro::harness
