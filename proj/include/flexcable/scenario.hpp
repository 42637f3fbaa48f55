#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "flexcable/analysis.hpp"
#include "flexcable/io.hpp"
#include "flexcable/nmpc.hpp"
#include "flexcable/planner.hpp"
#include "flexcable/quad_control.hpp"

namespace flexcable {

struct ScenarioConfig {
  std::string kind = "regulation";
  std::string controller = "nmpc";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  CableParams cable;
  QuadParams quad;
  FdmConfig fdm{100, 5e-4};
  PidGains gains;

  SweepConfig sweep;
  int collect_grid = 10;       // M of the reduced model's grid
  int extraction_grid = 50;    // finer sampling used for mode extraction
  double sample_period = 0.5;  // snapshot period t_s [s]

  int rom_order = 3;            // K
  double control_period = 0.02;
  OcpConfig ocp;                // regulation/tracking weights
  VecX q_window;                // window-crossing stage weights

  double duration = 15.0;
  Vec3 target = Vec3(1, -1, 0);  // regulation target head position
  double circle_period = 5.0;

  WindowConstraint window;
  PlanConfig plan;
  double settle_duration = 6.0;
  Vec3 window_target = Vec3(2, 0, 0);

  TuneOptions tune;
  IdentifyOptions identify;

  std::optional<Disturbance> disturbance;
  std::optional<std::filesystem::path> bank_path;  // reuse a stored mode bank

  double total_mass() const { return quad.mass + cable.total_mass(); }
};

// Named parameter/weight presets.
ScenarioConfig sim_profile();
ScenarioConfig experiment_profile();
ScenarioConfig profile_by_name(const std::string& name);

// Overlays a JSON document onto a base profile; unknown keys raise
// ConfigError naming the offending key.
ScenarioConfig apply_config(ScenarioConfig base, const nlohmann::json& doc);
nlohmann::json config_echo(const ScenarioConfig& cfg);

// ---- pipeline stages ----

struct CollectResult {
  RunRecord run;
  SnapshotTensor tensor;
};
// Sweep excitation under the cascade controller, sampled into a tensor.
CollectResult run_collect(const ScenarioConfig& cfg, int grid_intervals);

// Mode extraction from a tensor; truncation recorded in the bank.
ModeBank reduce_tensor(const SnapshotTensor& tensor, int truncation);

// Full collection pipeline: sweep on the fine grid, mode extraction, and
// restriction onto the reduced model's grid.
ModeBank build_bank(const ScenarioConfig& cfg);

// Reduced target state for a steady hang at `head`.
RomState steady_rom_state(const ModeBank& bank, const CableParams& cable, double g,
                          const Vec3& head, int order);

struct ClosedLoopResult {
  RunRecord run;
  std::vector<TelemetryRow> telemetry;    // empty for the cascade controller
  std::vector<VecX> rom_states;           // projected state at control steps 1..T
  std::vector<VecX> rom_references;
  std::vector<double> es_series;
  double fe = 0.0;                        // summed weighted error
  double et = 0.0;                        // time-averaged weighted error
  int allocation_saturations = 0;
};

ClosedLoopResult run_regulation(const ScenarioConfig& cfg, const ModeBank& bank,
                                const std::string& controller, const PidGains& gains);

struct TrackingResult {
  ClosedLoopResult loop;
  LimitCycle cycle;
};
TrackingResult run_tracking(const ScenarioConfig& cfg, const ModeBank& bank,
                            const std::string& controller);

struct WindowRunResult {
  ClosedLoopResult loop;
  PlanResult plan;
  WindowReport fdm_window;  // checked on the full simulation grid
};
WindowRunResult run_window_crossing(const ScenarioConfig& cfg, const ModeBank& bank);

struct RomValidationResult {
  std::vector<int> orders;
  std::vector<double> em;                  // one entry per order
  std::vector<double> times;               // sample instants
  std::vector<std::vector<double>> e1;     // per order, per sample
  std::vector<std::vector<double>> e2;
};
// Side-by-side rollout of the driven cable and the reduced model from the
// horizontal release under the preset head oscillation.
RomValidationResult run_rom_validation(const ScenarioConfig& cfg, const ModeBank& bank,
                                       const std::vector<int>& orders, double duration,
                                       double sample_step);

// Open-loop hover hold from the closed-form sag profile, with an optional
// transverse velocity kick; returns the recorded run.
RunRecord run_steady_hold(const ScenarioConfig& cfg, double duration,
                          double kick_velocity, int record_every);

// True if the sweep scenario diverges at the given step size within the
// horizon.
bool sweep_blows_up(ScenarioConfig cfg, double dt, double duration);

// Gain search minimizing the summed weighted error of the regulation
// scenario rollout.
TuneResult tune_pid(const ScenarioConfig& cfg, const ModeBank& bank, int threads = 2);

// ---- whole-scenario entry point used by the CLI ----
int run_scenario(const ScenarioConfig& cfg);

}  // namespace flexcable
