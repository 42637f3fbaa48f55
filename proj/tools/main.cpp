// cablectl: scenario-driven entry point for the cable simulation and
// control toolkit.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flexcable/analysis.hpp"
#include "flexcable/io.hpp"
#include "flexcable/planner.hpp"
#include "flexcable/scenario.hpp"

using namespace flexcable;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string profile = "sim";
  std::string config_path;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--profile", opts.profile, "parameter profile: sim or experiment");
  cmd->add_option("--config", opts.config_path, "JSON config overlay");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--seed", opts.seed, "random seed override")
      ->each([&](const std::string&) { opts.seed_set = true; });
}

ScenarioConfig resolve_config(const CommonOpts& opts) {
  std::string profile = opts.profile;
  json doc = json::object();
  if (!opts.config_path.empty()) {
    doc = read_json(opts.config_path);
    if (doc.contains("profile")) profile = doc["profile"].get<std::string>();
  }

  // Profiles resolve to built-ins, or to <FLEXCABLE_PROFILE_DIR>/<name>.json.
  ScenarioConfig base;
  try {
    base = profile_by_name(profile);
  } catch (const ConfigError&) {
    const char* dir = std::getenv("FLEXCABLE_PROFILE_DIR");
    if (!dir) throw;
    const json profile_doc = read_json(std::filesystem::path(dir) / (profile + ".json"));
    base = apply_config(sim_profile(), profile_doc);
  }

  ScenarioConfig cfg = apply_config(base, doc);
  if (opts.seed_set) cfg.seed = opts.seed;
  cfg.out_dir = opts.out;
  return cfg;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}

ModeBank bank_for(const ScenarioConfig& cfg, const std::string& bank_path) {
  if (!bank_path.empty()) return read_mode_bank(bank_path);
  return build_bank(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadrotor flexible-cable simulation and shape control toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string bank_path, tensor_path, recording_path, ref_path, test_path, plan_path;
  int truncation = 3, restrict_to = 0, compare_grid = 0;
  std::string orders_csv = "1,2,3,5";

  auto* simulate = app.add_subcommand("simulate", "open-loop or model-validation runs");
  add_common(simulate, opts);

  auto* collect = app.add_subcommand("collect", "sweep excitation and snapshot capture");
  add_common(collect, opts);

  auto* reduce = app.add_subcommand("reduce", "extract modes from a snapshot tensor");
  add_common(reduce, opts);
  reduce->add_option("--tensor", tensor_path, "snapshot tensor CSV")->required();
  reduce->add_option("--truncation", truncation, "stored truncation order");
  reduce->add_option("--restrict", restrict_to, "restrict modes to a coarser grid");

  auto* control = app.add_subcommand("control", "closed-loop scenario runs");
  add_common(control, opts);
  control->add_option("--bank", bank_path, "mode bank CSV (skips the fresh sweep)");

  auto* plan = app.add_subcommand("plan", "window-crossing trajectory search");
  add_common(plan, opts);
  plan->add_option("--bank", bank_path, "mode bank CSV (skips the fresh sweep)");

  auto* identify = app.add_subcommand("identify", "fit drag and stiffness to a recording");
  add_common(identify, opts);
  identify->add_option("--recording", recording_path, "marker recording CSV")->required();
  double cd_guess = 0.0, e_guess = 0.0;
  identify->add_option("--cd-guess", cd_guess, "initial drag coefficient");
  identify->add_option("--e-guess", e_guess, "initial Young modulus");

  auto* tune = app.add_subcommand("tune", "search cascade position gains");
  add_common(tune, opts);
  tune->add_option("--bank", bank_path, "mode bank CSV (skips the fresh sweep)");
  int tune_threads = 2;
  tune->add_option("--threads", tune_threads, "parallel rollout evaluations");

  auto* compare = app.add_subcommand("compare", "shape metrics between two runs");
  add_common(compare, opts);
  compare->add_option("--ref", ref_path, "reference trajectory CSV")->required();
  compare->add_option("--test", test_path, "trajectory CSV under test")->required();
  compare->add_option("--grid", compare_grid, "compare on this arc grid (0: native)");

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed())
    return guarded([&] {
      ScenarioConfig cfg = resolve_config(opts);
      if (cfg.kind != "steady" && cfg.kind != "rom-validate" && cfg.kind != "collect")
        cfg.kind = "steady";
      return run_scenario(cfg);
    });

  if (collect->parsed())
    return guarded([&] {
      ScenarioConfig cfg = resolve_config(opts);
      cfg.kind = "collect";
      return run_scenario(cfg);
    });

  if (reduce->parsed())
    return guarded([&] {
      const ScenarioConfig cfg = resolve_config(opts);
      const SnapshotTensor tensor = read_snapshot_tensor(tensor_path);
      ModeBank bank = reduce_tensor(tensor, truncation);
      if (restrict_to > 0) bank = restrict_bank(bank, restrict_to);
      const VecX ratios = energy_ratios(bank.singular_values);
      std::filesystem::create_directories(cfg.out_dir);
      write_mode_bank(cfg.out_dir / "bank.csv", bank,
                      hash_hex(hash_file(tensor_path)));
      json metrics;
      metrics["top3_energy"] = ratios.head(std::min<int>(3, ratios.size())).sum();
      metrics["mode_count"] = bank.mode_count();
      write_json(cfg.out_dir / "metrics.json", metrics);
      write_manifest(cfg.out_dir, config_echo(cfg), cfg.seed,
                     {{"tensor", hash_hex(hash_file(tensor_path))}});
      return 0;
    });

  if (control->parsed())
    return guarded([&] {
      ScenarioConfig cfg = resolve_config(opts);
      if (!bank_path.empty()) cfg.bank_path = bank_path;
      if (cfg.kind == "steady" || cfg.kind == "collect") cfg.kind = "regulation";
      return run_scenario(cfg);
    });

  if (plan->parsed())
    return guarded([&] {
      ScenarioConfig cfg = resolve_config(opts);
      const ModeBank bank = bank_for(cfg, bank_path);
      RomDynamics dynamics(bank, cfg.cable, cfg.quad.gravity, cfg.rom_order);
      const FdmState initial = make_vertical_state(cfg.cable, cfg.fdm, Vec3::Zero(), false);
      const RomState x0 = project(initial.positions, initial.velocities, bank, cfg.rom_order);
      PlanConfig plan_cfg = cfg.plan;
      plan_cfg.pso.seed = cfg.seed;
      const PlanResult result = plan_window_crossing(x0, cfg.window, plan_cfg, dynamics);

      std::filesystem::create_directories(cfg.out_dir);
      RunRecord ref;
      Mat3X pos, vel;
      for (std::size_t k = 0; k < result.reference_states.size(); ++k) {
        reconstruct(RomState::from_vector(result.reference_states[k], cfg.rom_order), bank,
                    pos, vel);
        ref.times.push_back(k * plan_cfg.rollout_step);
        ref.positions.push_back(pos);
        ref.velocities.push_back(vel);
      }
      write_run_record(cfg.out_dir / "reference.csv", ref);

      json doc;
      doc["kind"] = cfg.plan.kind == TrajectoryKind::fourier ? "fourier" : "polynomial";
      doc["duration"] = result.trajectory.duration;
      for (int axis = 0; axis < 3; ++axis) {
        json a = json::array(), b = json::array();
        for (int i = 0; i < result.trajectory.a[axis].size(); ++i)
          a.push_back(result.trajectory.a[axis][i]);
        for (int i = 0; i < result.trajectory.b[axis].size(); ++i)
          b.push_back(result.trajectory.b[axis][i]);
        doc["a"].push_back(a);
        doc["b"].push_back(b);
      }
      doc["feasible"] = result.feasible;
      doc["fitness"] = result.fitness;
      doc["worst_margin"] = result.window.worst_margin;
      doc["reference_csv"] = "reference.csv";
      write_json(cfg.out_dir / "plan.json", doc);
      write_manifest(cfg.out_dir, config_echo(cfg), cfg.seed, {});
      if (!result.feasible) std::cerr << "no feasible plan within the budget\n";
      return result.feasible ? 0 : 1;
    });

  if (identify->parsed())
    return guarded([&] {
      const ScenarioConfig cfg = resolve_config(opts);
      const PointCloudRecording recording = read_recording(recording_path);
      const double cd0 = cd_guess > 0 ? cd_guess : cfg.cable.drag_coeff;
      const double e0 = e_guess > 0 ? e_guess : cfg.cable.young_modulus;
      const IdentifyResult fit =
          identify_params(recording, cfg.cable, cd0, e0, cfg.identify);
      std::filesystem::create_directories(cfg.out_dir);
      json doc;
      doc["drag_coeff"] = fit.drag_coeff;
      doc["young_modulus"] = fit.young_modulus;
      doc["residual"] = fit.residual;
      doc["evaluations"] = fit.evaluations;
      json trace = json::array();
      for (double r : fit.residual_trace) trace.push_back(r);
      doc["residual_trace"] = trace;
      doc["rollout"] = {{"segment_count", cfg.identify.fdm.segment_count},
                        {"time_step", cfg.identify.fdm.time_step}};
      write_json(cfg.out_dir / "identify.json", doc);
      write_manifest(cfg.out_dir, config_echo(cfg), cfg.seed,
                     {{"recording", hash_hex(hash_file(recording_path))}});
      std::cout << "c_d = " << fit.drag_coeff << ", E = " << fit.young_modulus << "\n";
      return 0;
    });

  if (tune->parsed())
    return guarded([&] {
      ScenarioConfig cfg = resolve_config(opts);
      const ModeBank bank = bank_for(cfg, bank_path);
      const TuneResult result = tune_pid(cfg, bank, tune_threads);
      std::filesystem::create_directories(cfg.out_dir);
      json doc;
      doc["objective"] = result.objective;
      doc["kp_pos"] = {result.gains.kp_pos.x(), result.gains.kp_pos.y(),
                       result.gains.kp_pos.z()};
      doc["kd_pos"] = {result.gains.kd_pos.x(), result.gains.kd_pos.y(),
                       result.gains.kd_pos.z()};
      doc["evaluations"] = result.evaluations;
      doc["at_bounds"] = result.at_bounds;
      json trace = json::array();
      for (double f : result.trace) trace.push_back(f);
      doc["trace"] = trace;
      write_json(cfg.out_dir / "tune.json", doc);
      write_manifest(cfg.out_dir, config_echo(cfg), cfg.seed, {});
      std::cout << "best objective " << result.objective << "\n";
      return 0;
    });

  if (compare->parsed())
    return guarded([&] {
      const ScenarioConfig cfg = resolve_config(opts);
      const RunRecord ref = read_run_record(ref_path);
      const RunRecord test = read_run_record(test_path);
      if (ref.frames() != test.frames())
        throw GridMismatch("runs hold different frame counts");

      std::vector<Mat3X> ref_pos, test_pos;
      std::vector<double> e1(ref.frames()), e2(ref.frames());
      for (std::size_t f = 0; f < ref.frames(); ++f) {
        Mat3X rp = ref.positions[f], tp = test.positions[f];
        Mat3X rv = ref.velocities[f], tv = test.velocities[f];
        if (compare_grid > 0) {
          rp = downsample_grid(rp, compare_grid);
          tp = downsample_grid(tp, compare_grid);
          rv = downsample_grid(rv, compare_grid);
          tv = downsample_grid(tv, compare_grid);
        }
        const ShapeError e = metric_e1_e2(rp, rv, tp, tv);
        e1[f] = e.position;
        e2[f] = e.velocity;
        ref_pos.push_back(rp);
        test_pos.push_back(tp);
      }
      std::filesystem::create_directories(cfg.out_dir);
      json doc;
      doc["em"] = metric_em(ref_pos, test_pos);
      doc["frames"] = ref.frames();
      write_json(cfg.out_dir / "metrics.json", doc);
      std::ofstream series(cfg.out_dir / "errors.csv");
      series << "t,e1,e2\n";
      for (std::size_t f = 0; f < ref.frames(); ++f)
        series << format_double(ref.times[f]) << ',' << format_double(e1[f]) << ','
               << format_double(e2[f]) << '\n';
      return 0;
    });

  return 0;
}
