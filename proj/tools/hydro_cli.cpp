#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hydro/harness/campaign.hpp"
#include "hydro/harness/data.hpp"
#include "hydro/harness/episode.hpp"
#include "hydro/harness/report.hpp"
#include "hydro/plant/simulator.hpp"

namespace {

using namespace hydro;

plant::PlantTopology load_topology(const std::string& path) {
  if (path.empty()) return plant::PlantTopology::default_three_tank();
  return plant::PlantTopology::from_json_file(path);
}

void cmd_simulate(const std::string& topo_path, int steps, std::uint64_t seed,
                  const std::string& out_path) {
  const auto topo = load_topology(topo_path);
  plant::Simulator sim(topo, seed);
  plant::NominalController ctrl(topo);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "'");
  out << "time";
  for (const auto& s : topo.sensors) out << "," << s.id;
  out << "\n";
  for (int k = 0; k < steps; ++k) {
    const nn::Vector y = sim.measure();
    out << sim.state().t;
    for (Eigen::Index i = 0; i < y.size(); ++i) out << "," << y[i];
    out << "\n";
    sim.step(ctrl.control(y));
  }
  std::printf("wrote %d samples to %s (volume balance error %.3e)\n", steps, out_path.c_str(),
              sim.volume_balance_error());
}

void cmd_attack_gen(const std::string& topo_path, const std::string& cls, std::uint64_t seed,
                    double start, double beta_low, const std::string& out_path) {
  const auto topo = load_topology(topo_path);
  attack::GeneratorConfig gen;
  if (beta_low > 0) gen.beta_low_mult = beta_low;
  const auto scenario =
      attack::generate_scenario(attack::class_from_name(cls), topo, seed, start, gen);
  scenario.to_json_file(out_path);
  std::printf("wrote %s scenario (%zu targets, %.0f s to %.0f s) to %s\n", cls.c_str(),
              scenario.targets.size(), scenario.start, scenario.end(), out_path.c_str());
}

void cmd_train_dt(const std::string& topo_path, std::uint64_t seed, int steps, int val_steps,
                  int hidden, int epochs, const std::vector<int>& dilations,
                  const std::string& out_path, bool verbose) {
  const auto topo = load_topology(topo_path);
  dt::DtConfig cfg;
  cfg.hidden = hidden;
  cfg.epochs = epochs;
  if (!dilations.empty()) cfg.dilations = dilations;
  cfg.validate();

  plant::NominalConfig nominal;
  const auto train = harness::collect_nominal_trace(topo, nominal, steps, derive_seed(seed, 0));
  const auto val = harness::collect_nominal_trace(topo, nominal, val_steps, derive_seed(seed, 1));
  dt::DtTrainReport report;
  dt::DtTrainOptions opts;
  opts.verbose = verbose;
  opts.report = &report;
  const auto model = dt::train_dt(dt::build_dataset(train, cfg.tau),
                                  dt::build_dataset(val, cfg.tau), topo, cfg,
                                  derive_seed(seed, 2), opts);
  dt::save_model(model, out_path);
  std::printf("twin trained: val loss %.5f -> %.5f, e_bar %.4f, saved to %s\n",
              report.initial_val, report.best_val, model.e_bar, out_path.c_str());
}

void cmd_train_ade(const std::string& topo_path, std::uint64_t seed, const std::string& dt_path,
                   int episodes, int val_episodes, int hidden, int epochs, double beta_low,
                   const std::string& out_path, const std::string& gate_path, bool verbose) {
  const auto topo = load_topology(topo_path);
  const auto dtp = dt::load_model(dt_path);

  harness::TrainingConfig cfg;
  cfg.ade.hidden = hidden;
  cfg.ade.epochs = epochs;
  if (beta_low > 0) cfg.generator.beta_low_mult = beta_low;
  cfg.ade.validate();
  cfg.ade_train_episodes = episodes;
  cfg.ade_val_episodes = val_episodes;

  const auto train = harness::ade_training_windows(topo, dtp, cfg, episodes, seed, 1);
  const auto val = harness::ade_training_windows(topo, dtp, cfg, val_episodes, seed, 2);
  ade::AdeTrainReport report;
  ade::AdeTrainOptions opts;
  opts.verbose = verbose;
  opts.report = &report;
  const auto adep = ade::train_ade(train, val, cfg.ade, derive_seed(seed, 3),
                                   ade::FreezeMode::None, nullptr, opts);
  ade::save_ade(adep, out_path);

  const auto reference = harness::gate_reference_embeddings(topo, dtp, adep, cfg, seed);
  const auto gate = ade::calibrate_gate(reference, cfg.ade, derive_seed(seed, 4));
  ade::save_gate(gate, gate_path);
  std::printf("discriminator trained on %zu windows: val loss %.5f -> %.5f; gate from %zu "
              "embeddings; saved to %s / %s\n",
              train.size(), report.initial_val, report.best_val, reference.size(),
              out_path.c_str(), gate_path.c_str());
}

void cmd_evaluate(const std::string& topo_path, std::uint64_t seed, const std::string& dt_path,
                  const std::string& ade_path, const std::string& gate_path,
                  const harness::CampaignConfig& cfg, const std::string& report_path,
                  const std::string& trace_dir) {
  const auto topo = load_topology(topo_path);
  harness::TrainedModels models;
  models.dtp = dt::load_model(dt_path);
  models.adep = ade::load_ade(ade_path);
  models.gate = ade::load_gate(gate_path);
  models.steady = harness::steady_state(topo, cfg.episode.nominal);

  const auto result = harness::run_campaign(topo, models, cfg, seed);
  std::fputs(harness::render_table(result.report).c_str(), stdout);
  if (!report_path.empty()) {
    harness::save_report(result.report, report_path);
    std::printf("report written to %s\n", report_path.c_str());
  }
  if (!trace_dir.empty()) {
    char name[64];
    for (size_t i = 0; i < result.resilient.size(); ++i) {
      std::snprintf(name, sizeof(name), "/episode_%03zu_resilient.csv", i);
      harness::write_plan_trace_csv(result.resilient[i], trace_dir + name);
    }
    std::printf("plan traces written to %s\n", trace_dir.c_str());
  }
  result.report.validate();  // nonzero exit when an invariant is broken
}

void cmd_report(const std::string& in_path) {
  const auto report = harness::load_report(in_path);
  std::fputs(harness::render_table(report).c_str(), stdout);
  report.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"closed-loop hydraulic plant testbed: twin-based attack detection and "
               "uncertainty-aware resilient control"};
  app.require_subcommand(1);

  std::string topo_path;
  app.add_option("--topology", topo_path, "plant topology JSON (default: built-in three-tank)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "log nominal operation to CSV");
  int sim_steps = 900;
  std::uint64_t sim_seed = 0;
  std::string sim_out = "trace.csv";
  sim->add_option("--steps", sim_steps, "samples at 1 Hz");
  sim->add_option("--seed", sim_seed, "noise seed")->required();
  sim->add_option("--out", sim_out, "output CSV path");

  // attack-gen
  auto* gen = app.add_subcommand("attack-gen", "sample an attack scenario to JSON");
  std::string gen_cls = "single";
  std::uint64_t gen_seed = 0;
  double gen_start = 120.0, gen_beta_low = 0.0;
  std::string gen_out = "scenario.json";
  gen->add_option("--class", gen_cls, "single or multi")
      ->check(CLI::IsMember({"single", "multi"}));
  gen->add_option("--seed", gen_seed, "scenario seed")->required();
  gen->add_option("--start", gen_start, "attack start time, s");
  gen->add_option("--beta-low", gen_beta_low, "magnitude floor, noise-std units");
  gen->add_option("--out", gen_out, "output JSON path");

  // train-dt
  auto* tdt = app.add_subcommand("train-dt", "train the digital twin on nominal traces");
  std::uint64_t tdt_seed = 0;
  int tdt_steps = 4000, tdt_val_steps = 800, tdt_hidden = 128, tdt_epochs = 200;
  std::vector<int> tdt_dilations;
  std::string tdt_out = "twin.bin";
  bool tdt_verbose = false;
  tdt->add_option("--seed", tdt_seed, "training seed")->required();
  tdt->add_option("--steps", tdt_steps, "training trace length");
  tdt->add_option("--val-steps", tdt_val_steps, "validation trace length");
  tdt->add_option("--hidden", tdt_hidden, "channels per conv block");
  tdt->add_option("--epochs", tdt_epochs, "training epochs");
  tdt->add_option("--dilations", tdt_dilations, "conv dilations")->delimiter(',');
  tdt->add_option("--out", tdt_out, "model output path");
  tdt->add_flag("--verbose", tdt_verbose, "per-epoch progress");

  // train-ade
  auto* tad = app.add_subcommand("train-ade", "train the residual discriminator and its gate");
  std::uint64_t tad_seed = 0;
  std::string tad_dt = "twin.bin", tad_out = "ade.bin", tad_gate = "gate.bin";
  int tad_episodes = 6, tad_val_episodes = 2, tad_hidden = 64, tad_epochs = 150;
  double tad_beta_low = 0.0;
  bool tad_verbose = false;
  tad->add_option("--seed", tad_seed, "training seed")->required();
  tad->add_option("--dt", tad_dt, "trained twin model")->required();
  tad->add_option("--episodes", tad_episodes, "attacked training episodes per class");
  tad->add_option("--val-episodes", tad_val_episodes, "attacked validation episodes per class");
  tad->add_option("--hidden", tad_hidden, "GRU width per direction");
  tad->add_option("--epochs", tad_epochs, "training epochs");
  tad->add_option("--beta-low", tad_beta_low, "attack magnitude floor, noise-std units");
  tad->add_option("--out", tad_out, "discriminator output path");
  tad->add_option("--gate-out", tad_gate, "gate output path");
  tad->add_flag("--verbose", tad_verbose, "per-epoch progress");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run the paired attack campaign and report metrics");
  std::uint64_t ev_seed = 0;
  std::string ev_dt = "twin.bin", ev_ade = "ade.bin", ev_gate = "gate.bin";
  std::string ev_report, ev_trace_dir;
  harness::CampaignConfig ev_cfg;
  ev_cfg.generator.beta_low_mult = 4.0;  // keep campaign attacks detectable
  ev->add_option("--seed", ev_seed, "campaign seed")->required();
  ev->add_option("--dt", ev_dt, "trained twin model");
  ev->add_option("--ade", ev_ade, "trained discriminator");
  ev->add_option("--gate", ev_gate, "calibrated gate");
  ev->add_option("--singles", ev_cfg.n_single, "single-point attack episodes");
  ev->add_option("--multis", ev_cfg.n_multi, "multi-stage attack episodes");
  ev->add_option("--normals", ev_cfg.n_normal, "quiet episodes");
  ev->add_option("--normal-steps", ev_cfg.normal_steps, "quiet episode length");
  ev->add_option("--horizon", ev_cfg.horizon, "prediction horizon");
  ev->add_option("--du-max", ev_cfg.du_max, "input step-norm limit");
  ev->add_option("--beta-low", ev_cfg.generator.beta_low_mult,
                 "attack magnitude floor, noise-std units");
  ev->add_option("--gamma", ev_cfg.episode.gamma, "mitigation confidence gate");
  ev->add_option("--n-mc", ev_cfg.episode.n_mc, "MC-dropout passes per engaged step");
  ev->add_option("--restart-delay", ev_cfg.episode.restart_delay, "shutdown hold time, s");
  ev->add_option("--report", ev_report, "write the metrics report JSON here");
  ev->add_option("--trace-dir", ev_trace_dir, "write per-episode plan traces here");

  // report
  auto* rep = app.add_subcommand("report", "pretty-print a stored metrics report");
  std::string rep_in = "report.json";
  rep->add_option("--in", rep_in, "report JSON path")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) cmd_simulate(topo_path, sim_steps, sim_seed, sim_out);
    if (gen->parsed())
      cmd_attack_gen(topo_path, gen_cls, gen_seed, gen_start, gen_beta_low, gen_out);
    if (tdt->parsed())
      cmd_train_dt(topo_path, tdt_seed, tdt_steps, tdt_val_steps, tdt_hidden, tdt_epochs,
                   tdt_dilations, tdt_out, tdt_verbose);
    if (tad->parsed())
      cmd_train_ade(topo_path, tad_seed, tad_dt, tad_episodes, tad_val_episodes, tad_hidden,
                    tad_epochs, tad_beta_low, tad_out, tad_gate, tad_verbose);
    if (ev->parsed())
      cmd_evaluate(topo_path, ev_seed, ev_dt, ev_ade, ev_gate, ev_cfg, ev_report, ev_trace_dir);
    if (rep->parsed()) cmd_report(rep_in);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
